// Command-line front end: run sweeps, check CSVs, run the dither ablations.
//
// Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "qht/qht.hpp"

namespace {

using namespace qht::harness;

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

int default_threads() {
    if (const char* env = std::getenv("QHT_THREADS")) {
        try {
            const int v = std::stoi(env);
            if (v >= 1)
                return v;
        } catch (const std::exception&) {
        }
        throw ConfigError(std::string("QHT_THREADS: expected a positive integer, got '") + env + "'");
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void write_rows(const std::string& out, const std::vector<ResultRow>& rows) {
    if (out.empty() || out == "-") {
        write_csv(std::cout, rows);
        return;
    }
    std::ofstream f(out, std::ios::binary);
    if (!f)
        throw ConfigError("out: cannot open '" + out + "' for writing");
    write_csv(f, rows);
}

RunOptions run_options(int threads, bool quiet) {
    RunOptions ro;
    ro.threads = threads > 0 ? threads : default_threads();
    if (!quiet) {
        ro.progress = [last = std::size_t{0}](std::size_t done, std::size_t total) mutable {
            const std::size_t pct = 100 * done / total;
            if (pct != last || done == total) {
                last = pct;
                std::fprintf(stderr, "\r  %zu/%zu tasks (%zu%%)", done, total, pct);
                if (done == total)
                    std::fputc('\n', stderr);
            }
        };
    }
    return ro;
}

bool print_evaluations(const std::vector<FamilyEvaluation>& evals) {
    bool all = !evals.empty();
    for (const auto& ev : evals) {
        std::printf("%s\n", std::string(family_name(ev.family)).c_str());
        if (!ev.slopes.empty()) {
            std::printf("  %-34s %6s %4s %10s %-10s %8s %6s %5s %8s\n", "group", "d", "s|r", "delta", "metric",
                        "slope", "r2", "band", "failed");
            for (const auto& s : ev.slopes)
                std::printf("  %-34s %6ld %4ld %10.4g %-10s %8.4f %6.3f %5s %7.1f%%\n", s.key.family.c_str(),
                            s.key.d, s.key.s_or_r, s.key.delta, std::string(metric_name(s.key.metric)).c_str(),
                            s.fittedSlope, s.r2, s.pass ? "in" : "out", 100.0 * s.failureRate);
        }
        for (const auto& c : ev.checks)
            std::printf("  [%s] %s\n", c.pass ? "PASS" : "FAIL", c.description.c_str());
        std::printf("  => %s\n", ev.pass() ? "PASS" : "FAIL");
        all = all && ev.pass();
    }
    return all;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantized heavy-tailed estimation: Monte Carlo experiment runner"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "run one experiment family and write the tidy CSV");
    std::string family, specPath, out = "-";
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    int threads = 0;
    std::vector<std::string> constants;
    bool timing = false, quiet = false;
    auto* famOpt = run->add_option("--family", family, "family name (see list-families), default grid");
    auto* specOpt = run->add_option("--spec", specPath, "JSON experiment spec file");
    famOpt->excludes(specOpt);
    run->add_option("--seed", seed, "base seed (default from spec)");
    run->add_option("--trials", trials, "trials per (n, delta)")->check(CLI::PositiveNumber);
    run->add_option("--out,-o", out, "output CSV path, '-' for stdout");
    run->add_option("--threads,-j", threads, "worker threads (default QHT_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);
    run->add_option("--constants,-c", constants, "tuning constant override key=value (repeatable)");
    run->add_flag("--timing", timing, "record per-task wallclock seconds (CSV no longer byte-reproducible)");
    run->add_flag("--quiet,-q", quiet, "no progress output");

    // check
    auto* check = app.add_subcommand("check", "fit log-log slopes and run the family checks on a CSV");
    std::string csvPath;
    std::optional<double> bandLo, bandHi;
    check->add_option("csv", csvPath, "CSV written by 'run'")->required();
    check->add_option("--band-lo", bandLo, "lower slope bound (default per family)");
    check->add_option("--band-hi", bandHi, "upper slope bound (default per family)");

    // demo-dither
    auto* demo = app.add_subcommand("demo-dither", "run the dither ablations and report the comparisons");
    std::string which = "all", outDir;
    std::optional<int> demoTrials;
    int demoThreads = 0;
    bool demoQuiet = false;
    demo->add_option("--which", which, "cov, qcs, qmc or all")
        ->check(CLI::IsMember({"cov", "qcs", "qmc", "all"}));
    demo->add_option("--trials", demoTrials, "trials per n")->check(CLI::PositiveNumber);
    demo->add_option("--threads,-j", demoThreads, "worker threads")->check(CLI::NonNegativeNumber);
    demo->add_option("--out-dir", outDir, "also write <family>.csv files here");
    demo->add_flag("--quiet,-q", demoQuiet, "no progress output");

    auto* list = app.add_subcommand("list-families", "print the experiment families and their defaults");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*run) {
            if (family.empty() && specPath.empty())
                throw ConfigError("run: one of --family or --spec is required");
            ExperimentSpec spec = specPath.empty() ? default_spec(parse_family(family)) : load_spec_file(specPath);
            if (seed)
                spec.seed = *seed;
            if (trials)
                spec.trials = *trials;
            for (const auto& kv : constants)
                apply_constant_override(spec, kv);
            spec.recordWallclock = timing;
            spec.validate();
            const auto rows = run_experiment(spec, run_options(threads, quiet));
            write_rows(out, rows);
            return kOk;
        }
        if (*check) {
            std::optional<SlopeBand> band;
            if (bandLo || bandHi) {
                band = SlopeBand{};
                if (bandLo)
                    band->lo = *bandLo;
                if (bandHi)
                    band->hi = *bandHi;
                if (!(band->lo < band->hi))
                    throw ConfigError("band: --band-lo must be < --band-hi");
            }
            const auto rows = read_csv_file(csvPath);
            if (rows.empty())
                throw ConfigError("csv: no rows");
            return print_evaluations(evaluate_rows(rows, band)) ? kOk : kCheckFailed;
        }
        if (*demo) {
            std::vector<Family> fams;
            if (which == "cov" || which == "all")
                fams.push_back(Family::DitherAblationCov);
            if (which == "qcs" || which == "all")
                fams.push_back(Family::DitherAblationQcs);
            if (which == "qmc" || which == "all")
                fams.push_back(Family::DitherAblationQmc);
            std::vector<FamilyEvaluation> evals;
            for (Family f : fams) {
                ExperimentSpec spec = default_spec(f);
                if (demoTrials)
                    spec.trials = *demoTrials;
                if (!demoQuiet)
                    std::fprintf(stderr, "%s\n", std::string(family_name(f)).c_str());
                const auto rows = run_experiment(spec, run_options(demoThreads, demoQuiet));
                if (!outDir.empty())
                    write_rows(outDir + "/" + std::string(family_name(f)) + ".csv", rows);
                evals.push_back(evaluate_family(rows, f));
            }
            return print_evaluations(evals) ? kOk : kCheckFailed;
        }
        if (*list) {
            for (const auto& fi : kFamilies) {
                const ExperimentSpec e = default_spec(fi.family);
                std::printf("%-22s %s\n", std::string(fi.name).c_str(), std::string(fi.summary).c_str());
                std::printf("%-22s defaults: %s\n", "", spec_to_json(e).dump().c_str());
            }
            return kOk;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    }
    return kUsage;
}
