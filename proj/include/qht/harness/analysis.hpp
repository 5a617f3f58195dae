#pragma once

// Log-log slope fits, Delta-ordering and dither-ablation checks over result rows.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "qht/harness/results.hpp"

namespace qht::harness {

struct GroupKey {
    std::string family;
    long d = 0;
    long s_or_r = 0;
    double delta = 0.0;
    Metric metric = Metric::L2;

    auto tie() const { return std::tie(family, d, s_or_r, delta, metric); }
    bool operator<(const GroupKey& o) const { return tie() < o.tie(); }
    bool operator==(const GroupKey& o) const { return tie() == o.tie(); }
};

/// Trial-mean error curve of one group, n ascending. Non-converged trials
/// are excluded from the means but counted.
struct Curve {
    GroupKey key;
    std::vector<long> n;
    std::vector<double> mean;
    int rows = 0;
    int failed = 0;

    double failure_rate() const { return rows == 0 ? 0.0 : static_cast<double>(failed) / rows; }
};

inline std::vector<Curve> build_curves(const std::vector<ResultRow>& rows) {
    struct Acc {
        double sum = 0.0;
        int count = 0;
    };
    std::map<GroupKey, std::map<long, Acc>> acc;
    std::map<GroupKey, std::pair<int, int>> counts;
    for (const auto& r : rows) {
        GroupKey k{r.family, r.d, r.s_or_r, r.delta, r.metric};
        auto& c = counts[k];
        ++c.first;
        if (!r.converged) {
            ++c.second;
            acc[k][r.n]; // keep the n visible
            continue;
        }
        auto& a = acc[k][r.n];
        a.sum += r.value;
        ++a.count;
    }
    std::vector<Curve> out;
    for (const auto& [k, byN] : acc) {
        Curve c;
        c.key = k;
        for (const auto& [n, a] : byN) {
            if (a.count == 0)
                continue;
            c.n.push_back(n);
            c.mean.push_back(a.sum / a.count);
        }
        c.rows = counts[k].first;
        c.failed = counts[k].second;
        out.push_back(std::move(c));
    }
    return out;
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// OLS of log(mean) on log(n) over points [first, end).
inline LineFit fit_loglog(const std::vector<long>& n, const std::vector<double>& mean, std::size_t first = 0) {
    const std::size_t m = n.size() - std::min(first, n.size());
    if (m < 3)
        throw ConfigError("fit: need at least 3 distinct n, got " + std::to_string(m));
    double sx = 0, sy = 0;
    for (std::size_t i = first; i < n.size(); ++i) {
        if (!(mean[i] > 0.0))
            throw ConfigError("fit: non-positive mean error at n=" + std::to_string(n[i]));
        sx += std::log(static_cast<double>(n[i]));
        sy += std::log(mean[i]);
    }
    const double mx = sx / m, my = sy / m;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = first; i < n.size(); ++i) {
        const double x = std::log(static_cast<double>(n[i])) - mx;
        const double y = std::log(mean[i]) - my;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

struct SlopeBand {
    double lo = -0.7;
    double hi = -0.3;
    bool contains(double s) const { return s >= lo && s <= hi; }
};

/// Expected-rate band per family: n^{-1/2} for most families. The 1-bit
/// rates differ: sqrt((log n)^2 / n) for sub-Gaussian data, whose local
/// log-log slope is -1/2 + 1/log n (about -0.39 on the default grid), and
/// n^{-1/4} for heavy-tailed data. Each band is the expected slope +-0.2.
inline SlopeBand default_band(const std::string& familyLabel) {
    if (familyLabel.rfind("qcs-onebit-ht", 0) == 0)
        return {-0.45, -0.05};
    if (familyLabel.rfind("qcs-onebit-sg", 0) == 0)
        return {-0.6, -0.2};
    return {};
}

struct SlopeReport {
    GroupKey key;
    double fittedSlope = 0.0;
    double r2 = 0.0;
    bool pass = false;
    double failureRate = 0.0;
};

/// One report per (family, d, s_or_r, delta, metric) group.
inline std::vector<SlopeReport> fit_slopes(const std::vector<ResultRow>& rows,
                                           const std::optional<SlopeBand>& band = std::nullopt) {
    std::vector<SlopeReport> out;
    for (const auto& c : build_curves(rows)) {
        const SlopeBand b = band.value_or(default_band(c.key.family));
        const LineFit f = fit_loglog(c.n, c.mean);
        out.push_back({c.key, f.slope, f.r2, b.contains(f.slope), c.failure_rate()});
    }
    return out;
}

inline const Curve* find_curve(const std::vector<Curve>& curves, const std::string& family, Metric metric,
                               std::optional<double> delta = std::nullopt) {
    for (const auto& c : curves)
        if (c.key.family == family && c.key.metric == metric && (!delta || c.key.delta == *delta))
            return &c;
    return nullptr;
}

inline double mean_at(const Curve& c, long n) {
    for (std::size_t i = 0; i < c.n.size(); ++i)
        if (c.n[i] == n)
            return c.mean[i];
    throw ConfigError("no mean for n=" + std::to_string(n) + " in family " + c.key.family);
}

/// Mean error non-decreasing in Delta at every n (or only at `atN`), within
/// each (family, d, s_or_r, metric).
inline bool delta_ordered(const std::vector<ResultRow>& rows, const std::string& family, Metric metric,
                          std::optional<long> atN = std::nullopt) {
    std::vector<const Curve*> cs;
    const auto curves = build_curves(rows);
    for (const auto& c : curves)
        if (c.key.family == family && c.key.metric == metric)
            cs.push_back(&c);
    std::sort(cs.begin(), cs.end(), [](const Curve* a, const Curve* b) { return a->key.delta < b->key.delta; });
    if (cs.size() < 2)
        return true;
    for (long n : cs.front()->n) {
        if (atN && n != *atN)
            continue;
        for (std::size_t i = 1; i < cs.size(); ++i)
            if (mean_at(*cs[i], n) < mean_at(*cs[i - 1], n))
                return false;
    }
    return true;
}

inline std::size_t upper_half_start(const Curve& c) { return c.n.size() / 2; }

inline bool non_decreasing_from(const Curve& c, std::size_t first) {
    for (std::size_t i = first + 1; i < c.mean.size(); ++i)
        if (c.mean[i] < c.mean[i - 1])
            return false;
    return true;
}

inline bool strictly_decreasing_from(const Curve& c, std::size_t first) {
    for (std::size_t i = first + 1; i < c.mean.size(); ++i)
        if (!(c.mean[i] < c.mean[i - 1]))
            return false;
    return true;
}

// ---------------------------------------------------------------------------
// Dither ablations. Arms are encoded as "<family>:<variant>" family labels.

inline std::string arm(Family f, const char* variant) { return std::string(family_name(f)) + ":" + variant; }

struct CheckLine {
    std::string description;
    bool pass = false;
};

struct AblationReport {
    std::vector<CheckLine> checks;
    bool pass() const {
        return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
    }
};

inline AblationReport evaluate_ablation(const std::vector<ResultRow>& rows, Family f, SlopeBand band = {},
                                        double competitorMinSlope = -0.2) {
    AblationReport rep;
    const auto curves = build_curves(rows);
    auto need = [&](const char* variant, Metric m) -> const Curve& {
        const Curve* c = find_curve(curves, arm(f, variant), m);
        if (!c)
            throw ConfigError("ablation: missing arm " + arm(f, variant));
        return *c;
    };
    auto fmt = [](double v) { return detail::fmt_double(v, "%.4g"); };

    if (f == Family::DitherAblationCov) {
        const Curve& tri = need("triangular", Metric::Linf);
        const long nMax = tri.n.back();
        const double tMean = mean_at(tri, nMax);
        const double tSlope = fit_loglog(tri.n, tri.mean).slope;
        rep.checks.push_back({"triangular slope " + fmt(tSlope) + " in band", band.contains(tSlope)});
        for (const char* v : {"no-dither", "uniform", "uniform-corrected"}) {
            const Curve& c = need(v, Metric::Linf);
            const double m = mean_at(c, nMax);
            rep.checks.push_back({std::string("triangular error ") + fmt(tMean) + " < " + v + " " + fmt(m) +
                                      " at n=" + std::to_string(nMax),
                                  tMean < m});
            const double s = fit_loglog(c.n, c.mean, upper_half_start(c)).slope;
            rep.checks.push_back({std::string(v) + " upper-half slope " + fmt(s) + " > " + fmt(competitorMinSlope),
                                  s > competitorMinSlope});
        }
    } else if (f == Family::DitherAblationQcs) {
        const Curve& dith = need("dithered", Metric::L2);
        const Curve& none = need("no-dither", Metric::L2);
        const long nMax = dith.n.back();
        const double s = fit_loglog(dith.n, dith.mean).slope;
        rep.checks.push_back({"dithered slope " + fmt(s) + " in band", band.contains(s)});
        rep.checks.push_back({"dithered error " + fmt(mean_at(dith, nMax)) + " < undithered " +
                                  fmt(mean_at(none, nMax)) + " at n=" + std::to_string(nMax),
                              mean_at(dith, nMax) < mean_at(none, nMax)});
    } else if (f == Family::DitherAblationQmc) {
        const Curve& dith = need("dithered", Metric::FroOverD);
        const Curve& none = need("no-dither", Metric::FroOverD);
        rep.checks.push_back({"undithered curve non-decreasing over the upper half",
                              non_decreasing_from(none, upper_half_start(none))});
        rep.checks.push_back({"dithered curve decreasing over the upper half",
                              strictly_decreasing_from(dith, upper_half_start(dith))});
    } else {
        throw ConfigError("ablation: family is not an ablation family");
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Whole-CSV evaluation, one verdict per family present.

/// Metric whose curve decides a family's verdict; other metrics are reported
/// for information only.
inline Metric primary_metric(Family f) {
    switch (f) {
    case Family::CovElementwise:
    case Family::DitherAblationCov: return Metric::Linf;
    case Family::CovOperator:
    case Family::CovSparseThreshold: return Metric::Op;
    case Family::QmcSubExp:
    case Family::QmcHeavy:
    case Family::DitherAblationQmc: return Metric::FroOverD;
    default: return Metric::L2;
    }
}

inline Family family_of_label(const std::string& label) {
    return parse_family(label.substr(0, label.find(':')));
}

struct FamilyEvaluation {
    Family family = Family::CovElementwise;
    std::vector<SlopeReport> slopes; // every group, every metric
    std::vector<CheckLine> checks;   // what decides the verdict
    bool pass() const {
        return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
    }
};

inline constexpr double kMaxFailureRate = 0.05;

inline FamilyEvaluation evaluate_family(const std::vector<ResultRow>& rows, Family f,
                                        const std::optional<SlopeBand>& band = std::nullopt) {
    FamilyEvaluation ev;
    ev.family = f;
    const std::string name(family_name(f));
    const Metric pm = primary_metric(f);
    auto fmt = [](double v) { return detail::fmt_double(v, "%.4g"); };
    const auto curves = build_curves(rows);

    for (const auto& c : curves) {
        if (c.failure_rate() > kMaxFailureRate)
            ev.checks.push_back({c.key.family + " delta=" + fmt(c.key.delta) + " " +
                                     std::string(metric_name(c.key.metric)) + " failure rate " +
                                     fmt(100.0 * c.failure_rate()) + "% <= 5%",
                                 false});
    }

    if (is_ablation(f)) {
        ev.slopes = fit_slopes(rows, band);
        const AblationReport rep = evaluate_ablation(rows, f, band.value_or(SlopeBand{}));
        ev.checks.insert(ev.checks.end(), rep.checks.begin(), rep.checks.end());
        return ev;
    }

    if (f == Family::QcsUniform) {
        for (const auto& c : curves) {
            if (c.key.family != name + ":uniform-max" || c.key.metric != pm)
                continue;
            const Curve* ref = find_curve(curves, name + ":nonuniform-median", pm, c.key.delta);
            if (!ref)
                throw ConfigError("qcs-uniform: missing nonuniform-median rows");
            for (std::size_t i = 0; i < c.n.size(); ++i) {
                const double worst = c.mean[i], med = mean_at(*ref, c.n[i]);
                ev.checks.push_back({"delta=" + fmt(c.key.delta) + " n=" + std::to_string(c.n[i]) +
                                         ": worst-signal error " + fmt(worst) + " <= 2 x median " + fmt(med),
                                     worst <= 2.0 * med});
            }
        }
        return ev;
    }

    ev.slopes = fit_slopes(rows, band);
    for (const auto& s : ev.slopes) {
        if (s.key.metric != pm)
            continue;
        const SlopeBand b = band.value_or(default_band(s.key.family));
        ev.checks.push_back({"delta=" + fmt(s.key.delta) + " d=" + std::to_string(s.key.d) + " slope " +
                                 fmt(s.fittedSlope) + " in [" + fmt(b.lo) + ", " + fmt(b.hi) + "]",
                             s.pass});
    }
    // Coarser quantization must not help: every n for the element-wise
    // covariance error, the largest n elsewhere.
    std::optional<long> atN;
    if (f != Family::CovElementwise && !rows.empty()) {
        long nMax = 0;
        for (const auto& r : rows)
            nMax = std::max(nMax, r.n);
        atN = nMax;
    }
    const bool ordered = delta_ordered(rows, name, pm, atN);
    ev.checks.push_back({std::string("mean error non-decreasing in delta ") +
                             (atN ? "at n=" + std::to_string(*atN) : std::string("at every n")),
                         ordered});
    return ev;
}

/// Evaluates every family present in `rows`, in family-list order.
inline std::vector<FamilyEvaluation> evaluate_rows(const std::vector<ResultRow>& rows,
                                                   const std::optional<SlopeBand>& band = std::nullopt) {
    std::map<Family, std::vector<ResultRow>> byFamily;
    for (const auto& r : rows)
        byFamily[family_of_label(r.family)].push_back(r);
    std::vector<FamilyEvaluation> out;
    for (const auto& fi : kFamilies) {
        auto it = byFamily.find(fi.family);
        if (it != byFamily.end())
            out.push_back(evaluate_family(it->second, fi.family, band));
    }
    return out;
}

} // namespace qht::harness
