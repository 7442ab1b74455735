#include "qhedge/harness/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "qhedge/reference.hpp"

namespace qhedge::harness {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int max_iterations(const std::vector<StepDiagnostics>& diagnostics) {
    int m = 0;
    for (const auto& d : diagnostics) m = std::max(m, d.max_iterations);
    return m;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

/// sup over p of |a(t0, x, p) - b(t0, x, p)| for each x.
double sup_difference(const ValueSurface& a, const ValueSurface& b, std::span<const double> xs,
                      std::span<const double> ps) {
    double worst = 0.0;
    for (double x : xs)
        for (double p : ps) worst = std::max(worst, std::abs(a.value_at(0, x, p) - b.value_at(0, x, p)));
    return worst;
}

}  // namespace

RateFit fit_loglog_rate(std::span<const std::pair<double, double>> points) {
    if (points.size() < 2) throw InvalidArgument("fit_loglog_rate: needs at least two points");
    double sx = 0.0, sy = 0.0;
    for (const auto& [scale, error] : points) {
        if (!(scale > 0.0)) throw InvalidArgument("fit_loglog_rate: scales must be positive");
        if (!(error > 0.0)) throw InvalidArgument("fit_loglog_rate: errors must be positive");
        sx += std::log(scale);
        sy += std::log(error);
    }
    const double n = static_cast<double>(points.size());
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [scale, error] : points) {
        const double dx = std::log(scale) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(error) - my);
    }
    if (sxx <= 1e-300) throw InvalidArgument("fit_loglog_rate: scales must not all coincide");
    RateFit fit;
    fit.slope = sxy / sxx;
    double ss = 0.0;
    for (const auto& [scale, error] : points) {
        const double r = std::log(error) - (my + fit.slope * (std::log(scale) - mx));
        ss += r * r;
    }
    fit.residual = std::sqrt(ss / n);
    return fit;
}

bool StudyReport::passed() const {
    return std::all_of(criteria.begin(), criteria.end(), [](const auto& c) { return c.passed || !c.gating; });
}

SolveRun run_solve(const RunConfig& config, std::optional<double> delta, std::optional<double> h,
                   bool retain_history) {
    const double d = config.controls == ControlsKind::LinearCase ? config.effective_delta()
                                                                 : delta.value_or(config.delta);
    const auto start = std::chrono::steady_clock::now();
    const SolveOptions options{config.cfl_unchecked, config.threads, retain_history};
    ValueSurface surface = pcpt_backward_solve(config.model(), config.payoff(), config.time_grid(d, h),
                                               config.xgrid(d), config.control_set(d), config.scheme,
                                               config.x_boundary_fn(), options);
    return {std::move(surface), d, seconds_since(start)};
}

SuperRepCurve run_superrep(const RunConfig& config, std::optional<double> delta) {
    const double d = config.controls == ControlsKind::LinearCase ? config.effective_delta()
                                                                 : delta.value_or(config.delta);
    const SolveOptions options{config.cfl_unchecked, config.threads, true};
    return solve_superreplication(config.model(), config.payoff(), config.time_grid(d), config.xgrid(d),
                                  config.scheme, config.x_boundary_fn(), options);
}

std::size_t time_index(const TimeGrid& grid, double t) {
    for (std::size_t j = 0; j <= grid.steps(); ++j)
        if (std::abs(grid.node(j) - t) <= 1e-9) return j;
    throw ConfigError("time " + fmt(t) + " is not a node of the time grid");
}

StudyReport check_surface_invariants(const RunConfig& config, const ValueSurface& surface) {
    StudyReport report;
    report.name = "surface-invariants";
    const std::size_t kappa = surface.time_grid().steps();
    const double tol = static_cast<double>(kappa) * config.scheme.picard_tol;
    const XGrid& xg = surface.xgrid();
    const Payoff payoff = config.payoff();
    const double bound = payoff.bound();

    CriterionResult terminal{"terminal_equals_payoff_times_p", true, "exact"};
    for (std::size_t k = 0; k < xg.size() && terminal.passed; ++k)
        for (double p : {0.0, 0.37, 1.0})
            if (surface.value(kappa, k, p) != payoff(xg.node(k)) * p) {
                terminal.passed = false;
                terminal.detail = "mismatch at x=" + fmt(xg.node(k)) + ", p=" + fmt(p);
                break;
            }

    double worst_zero = 0.0, worst_one = 0.0, lowest = 0.0, highest = 0.0;
    for (std::size_t j = 0; j < kappa; ++j) {
        if (!surface.has_time(j)) continue;
        for (std::size_t k = 0; k < xg.size(); ++k) {
            worst_zero = std::max(worst_zero, std::abs(surface.value(j, k, 0.0)));
            worst_one = std::max(worst_one, std::abs(surface.value(j, k, 1.0) - surface.superrep().value(j, k)));
        }
        for (const ControlField& field : surface.fields(j))
            for (std::size_t k = 0; k < xg.size(); ++k)
                for (std::size_t l = 0; l < field.np(); ++l) {
                    const double v = surface.value(j, k, field.control().p_node(l));
                    lowest = std::min(lowest, v);
                    highest = std::max(highest, v);
                }
    }
    report.criteria.push_back(terminal);
    report.criteria.push_back({"p0_slice_vanishes", worst_zero <= tol, "max |v(t,x,0)| = " + fmt(worst_zero)});
    report.criteria.push_back(
        {"p1_slice_matches_superrep", worst_one <= tol, "max |v(t,x,1) - V(t,x)| = " + fmt(worst_one)});
    report.criteria.push_back({"values_within_payoff_bound", lowest >= -tol && highest <= bound + tol,
                               "range [" + fmt(lowest) + ", " + fmt(highest) + "], bound " + fmt(bound)});
    return report;
}

StudyReport superrep_check(const RunConfig& config, const SuperRepCurve& curve) {
    StudyReport report;
    report.name = "superrep";
    const double value = curve.value_at(0, config.query_x);
    report.details["value_t0_query_x"] = value;
    if (config.driver == DriverKind::Linear && config.payoff_kind == Payoff::Kind::Put) {
        const double closed = driftless_put_price(config.query_x, config.horizon, config.sigma, config.strike);
        report.details["closed_form"] = closed;
        const double err = std::abs(value - closed);
        report.criteria.push_back({"superrep_matches_closed_form_within_0.05", err <= 0.05,
                                   "V=" + fmt(value) + ", closed form=" + fmt(closed) + ", |diff|=" + fmt(err)});
    }
    return report;
}

StudyReport converge_nonlinear(const RunConfig& config) {
    StudyReport report;
    report.name = "converge-nonlinear";
    if (config.study_deltas.size() < 2) throw ConfigError("study.deltas needs at least two values");
    std::vector<double> deltas = config.study_deltas;
    std::sort(deltas.begin(), deltas.end(), std::greater<>());

    std::vector<SolveRun> runs;
    for (double d : deltas) runs.push_back(run_solve(config, d, std::nullopt, false));
    const SolveRun& finest = runs.back();

    std::vector<std::pair<double, double>> points;
    for (std::size_t i = 0; i + 1 < runs.size(); ++i) {
        const double err = sup_difference(runs[i].surface, finest.surface, config.compare_x, config.p_samples);
        report.rows.push_back({deltas[i], err, max_iterations(runs[i].surface.diagnostics), runs[i].seconds});
        if (err > 0.0) points.emplace_back(deltas[i], err);
    }
    report.details["finest_delta"] = deltas.back();
    report.details["finest_iterations_max"] = max_iterations(finest.surface.diagnostics);
    if (points.size() >= 2) {
        report.fit = fit_loglog_rate(points);
        report.details["rate"] = report.fit->slope;
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < report.rows.size(); ++i)
        decreasing = decreasing && report.rows[i].error < report.rows[i - 1].error;
    report.criteria.push_back({"errors_decrease_with_delta", decreasing, "against the finest run", false});
    return report;
}

StudyReport cfl_study(const RunConfig& config) {
    StudyReport report;
    report.name = "cfl-study";
    if (config.study_deltas.empty()) throw ConfigError("study.deltas must not be empty");
    std::vector<double> deltas = config.study_deltas;
    std::sort(deltas.begin(), deltas.end(), std::greater<>());
    const std::span<const double> drift_x(config.compare_x.empty() ? &config.query_x : &config.compare_x.back(), 1);

    RunConfig unchecked = config;
    unchecked.cfl_unchecked = true;

    nlohmann::json compliant_iters = nlohmann::json::array();
    int compliant_at_finest = 0, violating_at_finest = 0;
    for (double d : deltas) {
        const SolveRun compliant = run_solve(config, d, std::nullopt, false);
        const SolveRun violating = run_solve(unchecked, d, config.study_fixed_h, false);
        const double drift = sup_difference(violating.surface, compliant.surface, drift_x, config.p_samples);
        const int vi = max_iterations(violating.surface.diagnostics);
        const int ci = max_iterations(compliant.surface.diagnostics);
        report.rows.push_back({d, drift, vi, violating.seconds});
        compliant_iters.push_back({{"delta", d}, {"iterations_max", ci}});
        compliant_at_finest = ci;
        violating_at_finest = vi;
    }
    report.details["fixed_h"] = config.study_fixed_h;
    report.details["compliant"] = compliant_iters;

    const double finest = deltas.back();
    const double ratio = compliant_at_finest > 0 ? static_cast<double>(violating_at_finest) / compliant_at_finest : 0.0;
    report.details["iteration_ratio_at_finest"] = ratio;
    report.criteria.push_back({"compliant_picard_max_le_400", compliant_at_finest <= 400,
                               "delta=" + fmt(finest) + ": " + std::to_string(compliant_at_finest) + " iterations"});
    report.criteria.push_back({"violating_picard_blowup_ge_5x", ratio >= 5.0,
                               "delta=" + fmt(finest) + ", h=" + fmt(config.study_fixed_h) + ": " +
                                   std::to_string(violating_at_finest) + " vs " +
                                   std::to_string(compliant_at_finest) + " (x" + fmt(ratio) + ")"});

    // Fixed delta, shrinking h: Picard stays cheap but consistency is lost.
    const std::span<const double> h_x(config.compare_x.empty() ? &config.query_x : &config.compare_x.front(), 1);
    const SolveRun base = run_solve(config, config.study_fixed_delta, std::nullopt, false);
    for (double h : config.study_hs) {
        const SolveRun run = run_solve(unchecked, config.study_fixed_delta, h, false);
        report.secondary_rows.push_back({h, sup_difference(run.surface, base.surface, h_x, config.p_samples),
                                         max_iterations(run.surface.diagnostics), run.seconds});
    }
    report.details["fixed_delta"] = config.study_fixed_delta;
    return report;
}

StudyReport converge_linear(const RunConfig& config) {
    StudyReport report;
    report.name = "converge-linear";
    if (config.driver != DriverKind::Linear) throw ConfigError("converge-linear requires model.driver = linear");
    if (config.payoff_kind != Payoff::Kind::Put) throw ConfigError("converge-linear requires a put payoff");
    if (config.study_ns.size() < 2) throw ConfigError("study.ns needs at least two values");

    const MarketModel model = config.model();
    const LinearQuantileProblem query{model, config.strike, config.query_t, config.query_x, config.query_p};
    const double reference = linear_quantile_price(query);
    const OracleResult oracle = mc_oracle(query, config.mc_paths, config.seed);
    const double mc_gap = std::abs(oracle.estimate - reference);
    report.details["reference"] = reference;
    report.details["mc_estimate"] = oracle.estimate;
    report.details["mc_std_error"] = oracle.std_error;
    report.criteria.push_back({"reference_agrees_with_monte_carlo_3se", mc_gap <= 3.0 * oracle.std_error + 1e-12,
                               "closed form " + fmt(reference) + ", MC " + fmt(oracle.estimate) + " +- " +
                                   fmt(oracle.std_error)});

    const double tol = config.scheme.picard_tol;
    std::vector<std::pair<double, double>> points;
    nlohmann::json runs = nlohmann::json::array();
    bool upper_bound = true;
    for (int n : config.study_ns) {
        RunConfig c = config;
        c.controls = ControlsKind::LinearCase;
        c.linear_n = n;
        c.anchor = config.query_x;
        const bool at_t0 = config.query_t == 0.0;
        const SolveRun run = run_solve(c, std::nullopt, std::nullopt, !at_t0);
        const std::size_t j = time_index(run.surface.time_grid(), config.query_t);
        const double value = run.surface.value_at(j, config.query_x, config.query_p);
        const double signed_error = value - reference;
        report.rows.push_back({static_cast<double>(n), std::abs(signed_error),
                               max_iterations(run.surface.diagnostics), run.seconds});
        if (std::abs(signed_error) > 0.0) points.emplace_back(n, std::abs(signed_error));

        double min_signed = signed_error;
        for (double p : config.p_samples) {
            const double ref_p = linear_quantile_price({model, config.strike, config.query_t, config.query_x, p});
            const double e = run.surface.value_at(j, config.query_x, p) - ref_p;
            min_signed = std::min(min_signed, e);
            if (e < -5.0 * tol) {
                upper_bound = false;
                report.warnings.push_back("n=" + std::to_string(n) + ": scheme below reference at p=" + fmt(p) +
                                          " by " + fmt(-e));
            }
        }
        runs.push_back({{"n", n},
                        {"delta", run.delta},
                        {"N_t", run.surface.time_grid().steps()},
                        {"N_x", run.surface.xgrid().size()},
                        {"N_c", run.surface.controls().size()},
                        {"N_p", run.surface.controls().total_p_nodes()},
                        {"a_max", run.surface.controls().max_abs_snapped()},
                        {"value", value},
                        {"signed_error", signed_error},
                        {"min_signed_error_over_p", min_signed}});
    }
    report.details["runs"] = runs;

    bool decreasing = true;
    for (std::size_t i = 1; i < report.rows.size(); ++i)
        decreasing = decreasing && report.rows[i].error < report.rows[i - 1].error;
    report.criteria.push_back({"errors_strictly_decreasing_in_n", decreasing, "at the query point"});

    if (points.size() >= 2) {
        report.fit = fit_loglog_rate(points);
        const double rate = -report.fit->slope;
        report.details["rate"] = rate;
        report.criteria.push_back({"fitted_rate_in_[1.0,1.6]", rate >= 1.0 && rate <= 1.6,
                                   "rate " + fmt(rate) + " (fit residual " + fmt(report.fit->residual) + ")"});
    } else {
        report.criteria.push_back({"fitted_rate_in_[1.0,1.6]", false, "fewer than two non-zero errors"});
    }
    report.criteria.push_back({"scheme_is_upper_bound", upper_bound, "signed error >= -5 picard_tol", false});
    return report;
}

StudyReport reference_report(const RunConfig& config) {
    StudyReport report;
    report.name = "reference";
    const MarketModel model = config.model().with_driver(DriverSpec::linear());
    const LinearQuantileProblem query{model, config.strike, config.query_t, config.query_x, config.query_p};
    report.details["query"] = {{"t", config.query_t}, {"x", config.query_x}, {"p", config.query_p}};
    report.details["quantile_price"] = linear_quantile_price(query);
    report.details["superreplication_price"] =
        driftless_put_price(config.query_x, query.tau(), config.sigma, config.strike);
    report.details["zero_price_threshold"] = zero_price_threshold(query);
    report.details["optimal_alpha"] = optimal_alpha(config.query_t, config.query_p, config.horizon);

    const double xs[] = {std::log(20.0), std::log(25.0), std::log(30.0), std::log(35.0), std::log(40.0)};
    const double ps[] = {0.1, 0.3, 0.5, 0.7, 0.9};
    nlohmann::json lattice = nlohmann::json::array();
    std::uint64_t stream = 0;
    for (double x : xs)
        for (double p : ps) {
            const LinearQuantileProblem prob{model, config.strike, config.query_t, x, p};
            const double price = linear_quantile_price(prob);
            const OracleResult mc = mc_oracle(prob, config.mc_paths, config.seed + stream++);
            const double gap = std::abs(mc.estimate - price);
            const bool ok = gap <= 3.0 * mc.std_error + 1e-12;
            lattice.push_back({{"x", x}, {"p", p}, {"price", price}, {"mc", mc.estimate}, {"se", mc.std_error}});
            report.rows.push_back({p, gap, 0, 0.0});
            if (!ok) report.warnings.push_back("MC disagreement at x=" + fmt(x) + ", p=" + fmt(p));
            report.criteria.push_back({"mc_3se_x" + fmt(std::exp(x)) + "_p" + fmt(p), ok,
                                       "price " + fmt(price) + ", MC " + fmt(mc.estimate) + " +- " + fmt(mc.std_error)});
        }
    report.details["lattice"] = lattice;
    return report;
}

}  // namespace qhedge::harness
