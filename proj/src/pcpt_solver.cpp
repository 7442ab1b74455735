#include "qhedge/pcpt_solver.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

namespace qhedge {

double interpolate_p(const ControlField& field, std::size_t k, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("interpolate_p: p must lie in [0, 1]");
    const std::span<const double> v = field.profile(k);
    const int n = field.control().intervals;
    const double pos = p * n;
    if (pos >= n) return v[static_cast<std::size_t>(n)];
    const auto l = static_cast<std::size_t>(pos);
    const double w = pos - static_cast<double>(l);
    if (w == 0.0) return v[l];
    return (1.0 - w) * v[l] + w * v[l + 1];
}

namespace {

/// Tie-break order: smaller |raw| first, then positive before negative.
bool precedes(const AdjustedControl& a, const AdjustedControl& b) {
    const double aa = std::abs(a.raw), ab = std::abs(b.raw);
    if (aa != ab) return aa < ab;
    return a.raw > 0.0 && b.raw < 0.0;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The exception of the
/// lowest failing index is rethrown, independent of scheduling.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    auto run = [&](std::size_t i) {
        try {
            fn(i);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) run(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) run(i);
            });
        pool.clear();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string fault_message(const std::exception& e, std::size_t j, const double* control) {
    std::ostringstream os;
    os << "time index " << j;
    if (control) os << ", control " << *control;
    os << ": " << e.what();
    return os.str();
}

/// Runs a step and rewraps its failures with time/control context.
template <class Fn>
auto with_fault_context(std::size_t j, const double* control, Fn&& fn) {
    try {
        return fn();
    } catch (const PicardFailure& e) {
        throw StepFault(fault_message(e, j, control), StepFault::Cause::Picard, j, control ? *control : 0.0);
    } catch (const CflFailure& e) {
        throw StepFault(fault_message(e, j, control), StepFault::Cause::Cfl, j, control ? *control : 0.0);
    }
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

MinResult min_reduce(std::span<const ControlField> fields, std::size_t k, double p) {
    if (fields.empty()) throw InvalidArgument("min_reduce: no fields");
    MinResult best{interpolate_p(fields[0], k, p), 0};
    for (std::size_t i = 1; i < fields.size(); ++i) {
        const double v = interpolate_p(fields[i], k, p);
        if (v < best.value || (v == best.value && precedes(fields[i].control(), fields[best.index].control())))
            best = {v, i};
    }
    return best;
}

SuperRepCurve::SuperRepCurve(TimeGrid tgrid, XGrid xgrid)
    : tgrid_(std::move(tgrid)), xgrid_(xgrid), values_((tgrid_.steps() + 1) * xgrid_.size(), 0.0) {}

double SuperRepCurve::gradient(std::size_t j, std::size_t k) const {
    const std::size_t n = xgrid_.size();
    const double delta = xgrid_.delta();
    if (k == 0) return (value(j, 1) - value(j, 0)) / delta;
    if (k + 1 == n) return (value(j, n - 1) - value(j, n - 2)) / delta;
    return (value(j, k + 1) - value(j, k - 1)) / (2.0 * delta);
}

double SuperRepCurve::value_at(std::size_t j, double x) const {
    const double pos = (x - xgrid_.lower()) / xgrid_.delta();
    if (pos < -1e-9 || pos > static_cast<double>(xgrid_.size() - 1) + 1e-9)
        throw InvalidArgument("SuperRepCurve::value_at: x outside the grid");
    const auto k = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(xgrid_.size() - 2)));
    const double w = std::clamp(pos - static_cast<double>(k), 0.0, 1.0);
    return (1.0 - w) * value(j, k) + w * value(j, k + 1);
}

SuperRepCurve solve_superreplication(const MarketModel& model, const Payoff& payoff, const TimeGrid& tgrid,
                                     const XGrid& xgrid, const SchemeParams& params, const XBoundaryFn& x_boundary,
                                     const SolveOptions& options) {
    params.validate();
    SuperRepCurve curve(tgrid, xgrid);
    const std::size_t kappa = tgrid.steps();
    const std::size_t nx = xgrid.size();
    auto terminal = curve.mutable_row(kappa);
    for (std::size_t k = 0; k < nx; ++k) terminal[k] = payoff(xgrid.node(k));

    for (std::size_t j = kappa; j-- > 0;) {
        const auto start = std::chrono::steady_clock::now();
        const double t = tgrid.node(j);
        const StepContext ctx{model, params, xgrid, t, tgrid.step(j), upwind_for(model), options.cfl_unchecked};
        PicardStats stats;
        const BoundaryRow row = with_fault_context(j, nullptr, [&] {
            return picard_step_boundary(ctx, curve.row(j + 1), x_boundary(t, xgrid.node(0), 1.0),
                                        x_boundary(t, xgrid.node(nx - 1), 1.0), &stats);
        });
        std::copy(row.begin(), row.end(), curve.mutable_row(j).begin());
        curve.diagnostics.push_back({j, stats.iterations, stats.iterations, elapsed_seconds(start)});
    }
    return curve;
}

bool ValueSurface::has_time(std::size_t j) const {
    if (j == time_grid().steps()) return true;
    return j < fields_.size() && !fields_[j].empty();
}

std::span<const ControlField> ValueSurface::fields(std::size_t j) const {
    if (j >= fields_.size() || fields_[j].empty()) throw std::out_of_range("ValueSurface: time node not retained");
    return fields_[j];
}

double ValueSurface::value(std::size_t j, std::size_t k, double p, const AdjustedControl** argmin) const {
    if (argmin) *argmin = nullptr;
    if (j == time_grid().steps()) {
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("ValueSurface: p must lie in [0, 1]");
        return payoff_(xgrid().node(k)) * p;
    }
    const auto fs = fields(j);
    const MinResult m = min_reduce(fs, k, p);
    if (argmin) *argmin = &fs[m.index].control();
    return m.value;
}

double ValueSurface::value(std::size_t j, std::size_t k, double p) const { return value(j, k, p, nullptr); }

double ValueSurface::value_at(std::size_t j, double x, double p) const {
    const XGrid& xg = xgrid();
    const double pos = (x - xg.lower()) / xg.delta();
    if (pos < -1e-9 || pos > static_cast<double>(xg.size() - 1) + 1e-9)
        throw InvalidArgument("ValueSurface::value_at: x outside the grid");
    const std::size_t node = xg.find_node(x);
    if (node < xg.size()) return value(j, node, p);
    const auto k = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(xg.size() - 2)));
    const double w = std::clamp(pos - static_cast<double>(k), 0.0, 1.0);
    return (1.0 - w) * value(j, k, p) + w * value(j, k + 1, p);
}

std::map<double, std::size_t> ValueSurface::argmin_histogram(std::size_t j, std::span<const double> p_samples) const {
    std::map<double, std::size_t> histogram;
    if (j == time_grid().steps()) return histogram;
    for (std::size_t k = 1; k + 1 < xgrid().size(); ++k)
        for (double p : p_samples) {
            const AdjustedControl* a = nullptr;
            value(j, k, p, &a);
            ++histogram[a->raw];
        }
    return histogram;
}

ValueSurface pcpt_backward_solve(const MarketModel& model, const Payoff& payoff, const TimeGrid& tgrid,
                                 const XGrid& xgrid, const ControlSet& controls, const SchemeParams& params,
                                 const XBoundaryFn& x_boundary, const SolveOptions& options) {
    params.validate();
    if (controls.controls.empty()) throw InvalidArgument("pcpt_backward_solve: empty control set");

    ValueSurface surface(payoff, solve_superreplication(model, payoff, tgrid, xgrid, params, x_boundary, options),
                         controls);
    const std::size_t kappa = tgrid.steps();
    const std::size_t nx = xgrid.size();
    const double x_first = xgrid.node(0);
    const double x_last = xgrid.node(nx - 1);
    surface.fields_.resize(kappa);

    // Surface at the next time node; starts as the terminal condition g(x) p.
    std::vector<ControlField> next_fields;
    std::vector<double> terminal(nx);
    for (std::size_t k = 0; k < nx; ++k) terminal[k] = payoff(xgrid.node(k));
    SurfaceFn next = [&terminal](std::size_t k, double p) { return terminal[k] * p; };

    for (std::size_t j = kappa; j-- > 0;) {
        const auto start = std::chrono::steady_clock::now();
        const double t = tgrid.node(j);
        const StepContext ctx{model, params, xgrid, t, tgrid.step(j), upwind_for(model), options.cfl_unchecked};

        std::vector<double> next_at_zero(nx);
        for (std::size_t k = 0; k < nx; ++k) next_at_zero[k] = next(k, 0.0);
        PicardStats edge_stats;
        const BoundaryRow lower = with_fault_context(j, nullptr, [&] {
            return picard_step_boundary(ctx, next_at_zero, x_boundary(t, x_first, 0.0), x_boundary(t, x_last, 0.0),
                                        &edge_stats);
        });
        const std::span<const double> upper = surface.superrep_.row(j);

        std::vector<ControlField> current(controls.size());
        std::vector<PicardStats> stats(controls.size());
        parallel_for(controls.size(), options.threads, [&](std::size_t i) {
            const AdjustedControl& a = controls.controls[i];
            std::vector<double> x_lower(a.p_nodes()), x_upper(a.p_nodes());
            for (std::size_t l = 0; l < a.p_nodes(); ++l) {
                x_lower[l] = x_boundary(t, x_first, a.p_node(l));
                x_upper[l] = x_boundary(t, x_last, a.p_node(l));
            }
            current[i] = with_fault_context(j, &a.raw, [&] {
                return picard_step_interior(ctx, a, next, lower, upper, x_lower, x_upper, &stats[i]);
            });
        });

        StepDiagnostics diag{j, edge_stats.iterations, edge_stats.iterations, 0.0};
        for (const auto& s : stats) {
            diag.max_iterations = std::max(diag.max_iterations, s.iterations);
            diag.total_iterations += s.iterations;
        }

        next_fields = std::move(current);
        next = [&next_fields](std::size_t k, double p) { return min_reduce(next_fields, k, p).value; };
        if (options.retain_history || j == 0) surface.fields_[j] = next_fields;
        diag.seconds = elapsed_seconds(start);
        surface.diagnostics.push_back(diag);
    }
    return surface;
}

}  // namespace qhedge
