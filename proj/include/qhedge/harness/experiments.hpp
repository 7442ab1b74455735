#pragma once

// Experiment pipelines behind the CLI subcommands. Each study returns a
// report with its error table and the acceptance checks it evaluated.

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qhedge/harness/config.hpp"
#include "qhedge/pcpt_solver.hpp"

namespace qhedge::harness {

struct CriterionResult {
    std::string name;
    bool passed = true;
    std::string detail;
    bool gating = true;  // non-gating checks only warn
};

struct StudyRow {
    double scale = 0.0;
    double error = 0.0;
    int iterations_max = 0;
    double seconds = 0.0;
};

struct RateFit {
    double slope = 0.0;
    double residual = 0.0;  // RMS of the least-squares fit in log-log space
};

/// Least-squares slope of log(error) against log(scale). Needs at least two
/// distinct positive scales and strictly positive errors.
RateFit fit_loglog_rate(std::span<const std::pair<double, double>> points);

struct StudyReport {
    std::string name;
    std::vector<StudyRow> rows;
    std::vector<StudyRow> secondary_rows;
    std::optional<RateFit> fit;
    std::vector<CriterionResult> criteria;
    std::vector<std::string> warnings;
    nlohmann::json details = nlohmann::json::object();

    bool passed() const;
};

struct SolveRun {
    ValueSurface surface;
    double delta = 0.0;
    double seconds = 0.0;
};

/// One full backward solve as configured. `delta`/`h` override the
/// configured steps.
SolveRun run_solve(const RunConfig& config, std::optional<double> delta = std::nullopt,
                   std::optional<double> h = std::nullopt, bool retain_history = true);

SuperRepCurve run_superrep(const RunConfig& config, std::optional<double> delta = std::nullopt);

/// Index of the time node equal to t (within 1e-9), or throws ConfigError.
std::size_t time_index(const TimeGrid& grid, double t);

/// Structural checks on a solved surface: terminal exactness, the p = 0 and
/// p = 1 edges, and the global bounds.
StudyReport check_surface_invariants(const RunConfig& config, const ValueSurface& surface);

/// Compares V(0, query_x) with the closed form (linear driver and put only).
StudyReport superrep_check(const RunConfig& config, const SuperRepCurve& curve);

/// Delta ladder with h = C delta; errors against the finest run.
StudyReport converge_nonlinear(const RunConfig& config);

/// Fixed h across the delta ladder and fixed delta across the h ladder.
StudyReport cfl_study(const RunConfig& config);

/// Linear-driver ladder over n against the closed-form quantile price.
StudyReport converge_linear(const RunConfig& config);

/// Reference values at the query point and Monte-Carlo validation on a 5x5
/// (x, p) lattice.
StudyReport reference_report(const RunConfig& config);

}  // namespace qhedge::harness
