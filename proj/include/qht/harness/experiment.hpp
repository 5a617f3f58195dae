#pragma once

// Experiment families, their default grids and tuning constants, and the
// JSON experiment-spec format.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace qht::harness {

/// Bad experiment configuration; the message names the offending field.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Family {
    CovElementwise,
    CovOperator,
    CovSparseThreshold,
    QcsThm4,
    QcsThm5,
    QcsThm6,
    QcsThm7,
    QcsOneBitSG,
    QcsOneBitHT,
    QcsUniform,
    QmcSubExp,
    QmcHeavy,
    DitherAblationCov,
    DitherAblationQcs,
    DitherAblationQmc,
};

struct FamilyInfo {
    Family family;
    std::string_view name;
    std::string_view summary;
    bool needsS;
    bool needsR;
};

inline constexpr std::array<FamilyInfo, 15> kFamilies{{
    {Family::CovElementwise, "cov-elementwise", "max-norm covariance error, element-wise truncation", false, false},
    {Family::CovOperator, "cov-operator", "operator-norm covariance error, l4-norm truncation", false, false},
    {Family::CovSparseThreshold, "cov-sparse-threshold", "hard-thresholded sparse covariance, operator norm",
     false, false},
    {Family::QcsThm4, "qcs-thm4", "Lasso, Gaussian covariate, heavy-tailed response", true, false},
    {Family::QcsThm5, "qcs-thm5", "Lasso, heavy-tailed covariate and response", true, false},
    {Family::QcsThm6, "qcs-thm6", "quantized Gaussian covariate, composite gradient", true, false},
    {Family::QcsThm7, "qcs-thm7", "quantized heavy-tailed covariate, composite gradient", true, false},
    {Family::QcsOneBitSG, "qcs-onebit-sg", "1-bit covariate and response, sub-Gaussian data", true, false},
    {Family::QcsOneBitHT, "qcs-onebit-ht", "1-bit covariate and response, heavy-tailed data", true, false},
    {Family::QcsUniform, "qcs-uniform", "constrained Lasso, worst case over signals for one draw", true, false},
    {Family::QmcSubExp, "qmc-subexp", "matrix completion, Gaussian noise", false, true},
    {Family::QmcHeavy, "qmc-heavy", "matrix completion, heavy-tailed noise", false, true},
    {Family::DitherAblationCov, "dither-ablation-cov", "d = 1 variance: triangular vs no/uniform dither", false,
     false},
    {Family::DitherAblationQcs, "dither-ablation-qcs", "Lasso response: uniform dither vs none", true, false},
    {Family::DitherAblationQmc, "dither-ablation-qmc", "matrix completion: uniform dither vs none", false, true},
}};

inline const FamilyInfo& family_info(Family f) {
    for (const auto& fi : kFamilies)
        if (fi.family == f)
            return fi;
    throw std::logic_error("unknown family");
}

inline std::string_view family_name(Family f) { return family_info(f).name; }

inline Family parse_family(std::string_view s) {
    for (const auto& fi : kFamilies)
        if (fi.name == s)
            return fi.family;
    throw ConfigError("family: unknown family '" + std::string(s) + "' (see list-families)");
}

inline bool is_ablation(Family f) {
    return f == Family::DitherAblationCov || f == Family::DitherAblationQcs || f == Family::DitherAblationQmc;
}

using Constants = std::map<std::string, double>;

struct ExperimentSpec {
    Family family = Family::CovElementwise;
    std::vector<long> nGrid;
    long d = 0;
    long s = 0; // sparsity, QCS families
    long r = 0; // rank, QMC families
    std::vector<double> deltaGrid;
    int trials = 1;
    std::uint64_t seed = 20230101;
    Constants constants;
    bool recordWallclock = false;

    double c(const std::string& key) const {
        auto it = constants.find(key);
        if (it == constants.end())
            throw std::logic_error("constant '" + key + "' missing for family " + std::string(family_name(family)));
        return it->second;
    }

    long sOrR() const { return family_info(family).needsR ? r : s; }

    void validate() const {
        const auto& fi = family_info(family);
        if (nGrid.empty())
            throw ConfigError("n_grid: must be non-empty");
        for (long n : nGrid)
            if (n < 2)
                throw ConfigError("n_grid: every n must be >= 2");
        if (deltaGrid.empty())
            throw ConfigError("delta_grid: must be non-empty");
        for (double v : deltaGrid)
            if (!(v >= 0.0))
                throw ConfigError("delta_grid: every delta must be >= 0");
        if (trials < 1)
            throw ConfigError("trials: must be >= 1");
        if (d < 1)
            throw ConfigError("d: must be >= 1");
        if (fi.needsS && (s < 1 || s > d))
            throw ConfigError("s: required for family " + std::string(fi.name) + " with 1 <= s <= d");
        if (fi.needsR && (r < 1 || r > d))
            throw ConfigError("r: required for family " + std::string(fi.name) + " with 1 <= r <= d");
    }
};

inline std::vector<long> grid(long lo, long step, long hi, long scale = 1) {
    std::vector<long> g;
    for (long v = lo; v <= hi; v += step)
        g.push_back(v * scale);
    return g;
}

/// Default tuning constants; these are the only keys a family accepts.
inline Constants default_constants(Family f) {
    switch (f) {
    case Family::CovElementwise: return {{"c_zeta", 1.0}, {"delta_prob", 4.0}};
    case Family::CovOperator: return {{"c_zeta", 3.0}, {"delta_prob", 4.0}};
    case Family::CovSparseThreshold: return {{"c_zeta", 1.0}, {"c_mu", 0.1}, {"delta_prob", 4.0}};
    case Family::QcsThm4: return {{"c_lambda", 0.5}, {"c_zeta_y", 1.0}, {"moment_l", 1.25}, {"delta_prob", 4.0}};
    case Family::QcsThm5: return {{"c_lambda", 0.05}, {"c_zeta", 1.0}, {"delta_prob", 4.0}};
    case Family::QcsThm6:
        return {{"c_lambda", 0.1}, {"c_zeta_y", 1.0}, {"moment_l", 1.25}, {"delta_prob", 4.0}, {"radius_scale", 1.0}};
    case Family::QcsThm7: return {{"c_lambda", 0.05}, {"c_zeta", 1.0}, {"delta_prob", 4.0}, {"radius_scale", 1.0}};
    case Family::QcsOneBitSG: return {{"c_lambda", 0.5}, {"c_gamma", 1.0}, {"delta_prob", 4.0}};
    case Family::QcsOneBitHT:
        return {{"c_lambda", 0.25}, {"c_gamma", 1.0}, {"c_zeta", 0.7}, {"delta_prob", 4.0}};
    case Family::QcsUniform: return {{"c_zeta_y", 1.0}, {"moment_l", 1.25}, {"delta_prob", 4.0}, {"signals", 20}};
    case Family::QmcSubExp: return {{"c_lambda", 0.5}, {"delta_prob", 4.0}};
    case Family::QmcHeavy: return {{"c_lambda", 0.05}, {"c_zeta_y", 1.0}, {"delta_prob", 4.0}};
    case Family::DitherAblationCov: return {};
    case Family::DitherAblationQcs: return {{"c_lambda", 0.5}, {"c_zeta_y", 1.0}, {"moment_l", 1.25}, {"delta_prob", 4.0}};
    case Family::DitherAblationQmc: return {{"c_lambda", 0.5}, {"delta_prob", 4.0}};
    }
    return {};
}

/// Desk-scale default sweep for a family (grids follow the published
/// figures; trials reduced to 50 where the figure used 100, except the
/// covariance dither ablation).
inline ExperimentSpec default_spec(Family f) {
    ExperimentSpec e;
    e.family = f;
    e.trials = 50;
    e.constants = default_constants(f);
    switch (f) {
    case Family::CovElementwise:
        e.d = 100, e.nGrid = grid(80, 20, 220), e.deltaGrid = {0.0, 1.0, 2.0};
        break;
    case Family::CovOperator:
        e.d = 100, e.nGrid = grid(200, 100, 1000), e.deltaGrid = {0.0, 1.0};
        break;
    case Family::CovSparseThreshold:
        e.d = 100, e.nGrid = grid(200, 100, 1000), e.deltaGrid = {0.0, 1.0};
        break;
    case Family::QcsThm4:
    case Family::QcsThm5:
    case Family::QcsThm6:
    case Family::QcsThm7:
        e.d = 150, e.s = 5, e.nGrid = grid(100, 100, 1000), e.deltaGrid = {0.0, 0.5, 1.0};
        break;
    case Family::QcsOneBitSG:
    case Family::QcsOneBitHT:
        e.d = 50, e.s = 3, e.nGrid = grid(2, 2, 20, 1000), e.deltaGrid = {0.0};
        e.trials = 20;
        break;
    case Family::QcsUniform:
        e.d = 50, e.s = 3, e.nGrid = grid(200, 200, 1000), e.deltaGrid = {0.0, 0.5, 1.0};
        e.trials = 20;
        break;
    case Family::QmcSubExp:
    case Family::QmcHeavy:
        e.d = 30, e.r = 5, e.nGrid = grid(2000, 1000, 8000), e.deltaGrid = {0.0, 0.5, 1.0};
        break;
    case Family::DitherAblationCov:
        e.d = 1, e.nGrid = grid(2, 2, 20, 1000), e.deltaGrid = {3.0}, e.trials = 100;
        break;
    case Family::DitherAblationQcs:
        e.d = 50, e.s = 3, e.nGrid = grid(2, 2, 20, 1000), e.deltaGrid = {2.0};
        break;
    case Family::DitherAblationQmc:
        e.d = 30, e.r = 5, e.nGrid = grid(5, 5, 25, 1000), e.deltaGrid = {1.5};
        break;
    }
    return e;
}

/// Applies "key=value" overrides; unknown keys are rejected.
inline void apply_constant(ExperimentSpec& e, const std::string& key, double value) {
    const Constants defaults = default_constants(e.family);
    if (defaults.find(key) == defaults.end()) {
        std::string known;
        for (const auto& [k, v] : defaults)
            known += (known.empty() ? "" : ", ") + k;
        throw ConfigError("constants." + key + ": unknown constant for family " +
                          std::string(family_name(e.family)) + " (known: " + (known.empty() ? "none" : known) + ")");
    }
    e.constants[key] = value;
}

inline void apply_constant_override(ExperimentSpec& e, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("constants: expected key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    double v = 0.0;
    try {
        std::size_t used = 0;
        v = std::stod(val, &used);
        if (used != val.size())
            throw std::invalid_argument(val);
    } catch (const std::exception&) {
        throw ConfigError("constants." + key + ": not a number: '" + val + "'");
    }
    apply_constant(e, key, v);
}

/// Parses a JSON experiment spec. Missing optional fields take the family
/// defaults; unknown top-level fields are rejected.
inline ExperimentSpec parse_spec_json(const nlohmann::json& j) {
    using nlohmann::json;
    if (!j.is_object())
        throw ConfigError("spec: top level must be a JSON object");
    if (!j.contains("family") || !j["family"].is_string())
        throw ConfigError("family: required string field");
    ExperimentSpec e = default_spec(parse_family(j["family"].get<std::string>()));
    static const std::vector<std::string> known = {"family", "n_grid", "d", "s", "r", "delta_grid",
                                                   "trials", "seed", "constants"};
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw ConfigError(k + ": unknown field");

    auto field = [&](const char* name, auto& out) {
        if (!j.contains(name))
            return;
        try {
            j.at(name).get_to(out);
        } catch (const json::exception& ex) {
            throw ConfigError(std::string(name) + ": " + ex.what());
        }
    };
    field("n_grid", e.nGrid);
    field("d", e.d);
    field("s", e.s);
    field("r", e.r);
    field("delta_grid", e.deltaGrid);
    field("trials", e.trials);
    field("seed", e.seed);
    if (j.contains("constants")) {
        const auto& c = j["constants"];
        if (!c.is_object())
            throw ConfigError("constants: must be an object of name -> number");
        for (const auto& [k, v] : c.items()) {
            if (!v.is_number())
                throw ConfigError("constants." + k + ": must be a number");
            apply_constant(e, k, v.get<double>());
        }
    }
    e.validate();
    return e;
}

inline ExperimentSpec load_spec_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("spec: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("spec: malformed JSON in '" + path + "': " + ex.what());
    }
    return parse_spec_json(j);
}

inline nlohmann::json spec_to_json(const ExperimentSpec& e) {
    nlohmann::json j;
    j["family"] = std::string(family_name(e.family));
    j["n_grid"] = e.nGrid;
    j["d"] = e.d;
    if (family_info(e.family).needsS)
        j["s"] = e.s;
    if (family_info(e.family).needsR)
        j["r"] = e.r;
    j["delta_grid"] = e.deltaGrid;
    j["trials"] = e.trials;
    j["seed"] = e.seed;
    j["constants"] = e.constants;
    return j;
}

} // namespace qht::harness
