// qhedge: command-line front end for the quantile hedging solver.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qhedge/harness/config.hpp"
#include "qhedge/harness/experiments.hpp"
#include "qhedge/harness/output.hpp"
#include "qhedge/reference.hpp"

namespace fs = std::filesystem;
using namespace qhedge;
using namespace qhedge::harness;

namespace {

enum ExitCode { Ok = 0, UsageError = 1, NumericalFault = 2, AcceptanceFailure = 3 };

struct CommonOptions {
    std::string config_path;
    bool json_config = false;
    std::vector<std::string> overrides;
    bool check = false;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::string threads;
    bool unchecked_cfl = false;
};

RunConfig resolve_config(const CommonOptions& opts) {
    RunConfig config = opts.config_path.empty() ? RunConfig{} : load_config(opts.config_path, opts.json_config);
    for (const auto& assignment : opts.overrides) apply_override(config, assignment);
    if (opts.seed) config.seed = *opts.seed;
    if (opts.threads == "auto") {
        config.threads = std::max(1u, std::thread::hardware_concurrency());
    } else if (!opts.threads.empty()) {
        apply_setting(config, "run.threads", opts.threads);
    }
    if (opts.unchecked_cfl) config.cfl_unchecked = true;
    return config;
}

std::ofstream open_output(const fs::path& dir, const std::string& name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + (dir / name).string() + " for writing");
    return out;
}

void write_json(const fs::path& dir, const std::string& name, const nlohmann::json& j) {
    auto out = open_output(dir, name);
    out << j.dump(2) << '\n';
}

void print_report(const StudyReport& report) {
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& c : report.criteria)
        std::cout << (c.passed ? "PASS" : (c.gating ? "FAIL" : "WARN")) << "  " << c.name << ": " << c.detail << '\n';
}

void print_rows(const char* label, const std::vector<StudyRow>& rows) {
    if (rows.empty()) return;
    std::cout << label << "\n  scale          error          iterations_max  seconds\n";
    for (const auto& r : rows)
        std::cout << "  " << std::left << std::setw(14) << format_real(r.scale) << ' ' << std::setw(14)
                  << format_real(r.error) << ' ' << std::setw(15) << r.iterations_max << ' ' << r.seconds << '\n';
    std::cout << std::right;
}

int finish(const StudyReport& report, bool check) {
    print_report(report);
    return check && !report.passed() ? AcceptanceFailure : Ok;
}

int cmd_solve(const RunConfig& config, const fs::path& dir, bool check) {
    const SolveRun run = run_solve(config, std::nullopt, std::nullopt, config.all_times);
    const ValueSurface& s = run.surface;

    std::vector<std::size_t> times;
    for (std::size_t j = 0; j <= s.time_grid().steps(); ++j)
        if (s.has_time(j) && (config.all_times || j == 0)) times.push_back(j);
    {
        auto out = open_output(dir, "surface.csv");
        write_surface_csv(out, s, times, config.x_points, config.p_samples);
    }
    {
        auto out = open_output(dir, "superrep.csv");
        write_superrep_csv(out, s.superrep(), config.all_times);
    }
    write_json(dir, "meta.json", run_metadata(config, s));
    write_json(dir, "timing.json", timing_json(s.diagnostics, run.seconds));

    const nlohmann::json meta = run_metadata(config, s);
    std::cout << "N_t=" << meta["grids"]["N_t"] << " N_x=" << meta["grids"]["N_x"] << " N_c=" << meta["grids"]["N_c"]
              << " N_p=" << meta["grids"]["N_p"] << " delta=" << format_real(run.delta)
              << " picard_max=" << meta["picard"]["max"] << " seconds=" << run.seconds << '\n';
    const std::size_t j = time_index(s.time_grid(), config.query_t);
    if (s.has_time(j))
        std::cout << "v(" << format_real(config.query_t) << ", " << format_real(config.query_x) << ", "
                  << format_real(config.query_p) << ") = " << format_real(s.value_at(j, config.query_x, config.query_p))
                  << '\n';
    return finish(check_surface_invariants(config, s), check);
}

int cmd_superrep(const RunConfig& config, const fs::path& dir, bool check) {
    const auto start = std::chrono::steady_clock::now();
    const SuperRepCurve curve = run_superrep(config);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    {
        auto out = open_output(dir, "superrep.csv");
        write_superrep_csv(out, curve, config.all_times);
    }
    write_json(dir, "meta.json", superrep_metadata(config, curve));
    write_json(dir, "timing.json", timing_json(curve.diagnostics, seconds));
    const StudyReport report = superrep_check(config, curve);
    std::cout << "V(0, " << format_real(config.query_x) << ") = " << format_real(curve.value_at(0, config.query_x))
              << '\n';
    return finish(report, check);
}

int cmd_study(const StudyReport& report, const RunConfig& config, const fs::path& dir, bool check) {
    {
        auto out = open_output(dir, "study.csv");
        write_study_csv(out, report.rows);
    }
    if (!report.secondary_rows.empty()) {
        auto out = open_output(dir, "study_h.csv");
        write_study_csv(out, report.secondary_rows);
    }
    nlohmann::json meta;
    meta["config"] = config_to_json(config);
    meta["report"] = study_json(report, false);
    write_json(dir, "meta.json", meta);
    write_json(dir, "timing.json", study_json(report, true)["rows"]);

    print_rows(report.name == "cfl-study" ? "fixed h across delta (error = value drift)" : "error table",
               report.rows);
    print_rows("fixed delta across h (error = value drift)", report.secondary_rows);
    if (report.fit)
        std::cout << "log-log slope " << format_real(report.fit->slope) << " (residual "
                  << format_real(report.fit->residual) << ")\n";
    return finish(report, check);
}

int cmd_reference(const RunConfig& config, const fs::path& dir, bool check) {
    const StudyReport report = reference_report(config);
    nlohmann::json meta;
    meta["config"] = config_to_json(config);
    meta["report"] = study_json(report, false);
    write_json(dir, "meta.json", meta);
    std::cout << report.details.dump(2) << '\n';
    return finish(report, check);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantile hedging prices by piecewise constant policy timestepping"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    CommonOptions opts;
    app.add_option("--config", opts.config_path, "configuration file (block.key = value lines, or JSON)");
    app.add_flag("--json-config", opts.json_config, "read --config as JSON regardless of extension");
    app.add_option("--set", opts.overrides, "override one setting, block.key=value (repeatable)");
    app.add_flag("--check", opts.check, "exit with status 3 if any acceptance criterion fails");
    app.add_option("--out-dir", opts.out_dir, "directory for output files");
    app.add_option("--seed", opts.seed, "seed for the Monte-Carlo oracle");
    app.add_option("--threads", opts.threads, "worker threads for the per-control solves, or auto");
    app.add_flag("--unchecked-cfl", opts.unchecked_cfl, "run steps that violate the CFL conditions");

    auto* solve = app.add_subcommand("solve", "one backward solve: surface.csv, superrep.csv, meta.json");
    auto* superrep = app.add_subcommand("superrep", "super-replication curve only");
    auto* nonlinear = app.add_subcommand("converge-nonlinear", "delta ladder against the finest run");
    auto* cfl = app.add_subcommand("cfl-study", "Picard behaviour with and without the CFL conditions");
    auto* linear = app.add_subcommand("converge-linear", "linear-driver ladder against the closed-form price");
    auto* reference = app.add_subcommand("reference", "closed-form values and Monte-Carlo validation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? Ok : UsageError;
    }

    try {
        const RunConfig config = resolve_config(opts);
        const fs::path dir(opts.out_dir);
        fs::create_directories(dir);
        if (solve->parsed()) return cmd_solve(config, dir, opts.check);
        if (superrep->parsed()) return cmd_superrep(config, dir, opts.check);
        if (nonlinear->parsed()) return cmd_study(converge_nonlinear(config), config, dir, opts.check);
        if (cfl->parsed()) return cmd_study(cfl_study(config), config, dir, opts.check);
        if (linear->parsed()) return cmd_study(converge_linear(config), config, dir, opts.check);
        if (reference->parsed()) return cmd_reference(config, dir, opts.check);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return UsageError;
    } catch (const InvalidArgument& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return UsageError;
    } catch (const StepFault& e) {
        std::cerr << "numerical fault at time index " << e.time_index() << ": " << e.what() << '\n';
        return NumericalFault;
    } catch (const PicardFailure& e) {
        std::cerr << "numerical fault: " << e.what() << '\n';
        return NumericalFault;
    } catch (const CflFailure& e) {
        std::cerr << "numerical fault: " << e.what() << '\n';
        return NumericalFault;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return UsageError;
    }
    return UsageError;
}
