#pragma once

// Backward piecewise-constant-policy induction.
//
// At every time node the solver
//   1. takes the p = 1 edge from the super-replication recursion,
//   2. solves the p = 0 edge from the previous surface,
//   3. solves one implicit interior system per control on that control's
//      own p-grid, reading the previous surface at shifted probabilities,
//   4. defines the new surface as the pointwise minimum over controls of the
//      per-control fields, each linearly interpolated in p.
// The per-control fields are kept and the minimum is evaluated lazily at
// query points.

#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qhedge/control_grid.hpp"
#include "qhedge/fd_core.hpp"
#include "qhedge/model.hpp"

namespace qhedge {

/// Linear interpolation in p of a control field at x-node k.
double interpolate_p(const ControlField& field, std::size_t k, double p);

struct MinResult {
    double value = 0.0;
    std::size_t index = 0;  // position of the achieving field in the input
};

/// Pointwise minimum over fields of interpolate_p. Ties go to the smallest
/// |raw control|, then to the positive control.
MinResult min_reduce(std::span<const ControlField> fields, std::size_t k, double p);

struct StepDiagnostics {
    std::size_t time_index = 0;
    int max_iterations = 0;
    long long total_iterations = 0;
    double seconds = 0.0;
};

struct SolveOptions {
    bool cfl_unchecked = false;
    unsigned threads = 1;
    /// Keep the per-control fields of every time node; otherwise only t_0.
    bool retain_history = true;
};

/// A step failed; carries the time index and (for interior steps) the control.
class StepFault : public std::runtime_error {
public:
    enum class Cause { Picard, Cfl };

    StepFault(const std::string& what, Cause cause, std::size_t time_index, double control_raw)
        : std::runtime_error(what), cause_(cause), time_index_(time_index), control_raw_(control_raw) {}

    Cause cause() const noexcept { return cause_; }
    std::size_t time_index() const noexcept { return time_index_; }
    /// Raw control of the failing interior step, 0 for edge/boundary steps.
    double control_raw() const noexcept { return control_raw_; }

private:
    Cause cause_;
    std::size_t time_index_;
    double control_raw_;
};

/// Super-replication field on the time grid times the x-grid.
class SuperRepCurve {
public:
    SuperRepCurve(TimeGrid tgrid, XGrid xgrid);

    const TimeGrid& time_grid() const noexcept { return tgrid_; }
    const XGrid& xgrid() const noexcept { return xgrid_; }
    double value(std::size_t j, std::size_t k) const { return values_[j * xgrid_.size() + k]; }
    /// Centred difference in x (one-sided at the ends).
    double gradient(std::size_t j, std::size_t k) const;
    std::span<const double> row(std::size_t j) const { return {values_.data() + j * xgrid_.size(), xgrid_.size()}; }
    /// Linear interpolation in x at time node j.
    double value_at(std::size_t j, double x) const;

    std::vector<StepDiagnostics> diagnostics;

private:
    friend SuperRepCurve solve_superreplication(const MarketModel&, const Payoff&, const TimeGrid&, const XGrid&,
                                                const SchemeParams&, const XBoundaryFn&, const SolveOptions&);
    std::span<double> mutable_row(std::size_t j) { return {values_.data() + j * xgrid_.size(), xgrid_.size()}; }

    TimeGrid tgrid_;
    XGrid xgrid_;
    std::vector<double> values_;
};

/// Backward recursion of the one-dimensional system from g at T. Dirichlet
/// values at the x-ends come from x_boundary(t, x, 1).
SuperRepCurve solve_superreplication(const MarketModel& model, const Payoff& payoff, const TimeGrid& tgrid,
                                     const XGrid& xgrid, const SchemeParams& params, const XBoundaryFn& x_boundary,
                                     const SolveOptions& options = {});

class ValueSurface {
public:
    const TimeGrid& time_grid() const noexcept { return superrep_.time_grid(); }
    const XGrid& xgrid() const noexcept { return superrep_.xgrid(); }
    const SuperRepCurve& superrep() const noexcept { return superrep_; }
    const ControlSet& controls() const noexcept { return controls_; }

    /// True if values at time node j can be queried (always for t_0 and T).
    bool has_time(std::size_t j) const;
    double value(std::size_t j, std::size_t k, double p) const;
    /// Value and achieving control (nullptr at the terminal node).
    double value(std::size_t j, std::size_t k, double p, const AdjustedControl** argmin) const;
    /// Linear interpolation in x between grid nodes.
    double value_at(std::size_t j, double x, double p) const;
    std::span<const ControlField> fields(std::size_t j) const;

    /// Number of (x-node, p-sample) pairs at time node j won by each raw control.
    std::map<double, std::size_t> argmin_histogram(std::size_t j, std::span<const double> p_samples) const;

    std::vector<StepDiagnostics> diagnostics;

private:
    friend ValueSurface pcpt_backward_solve(const MarketModel&, const Payoff&, const TimeGrid&, const XGrid&,
                                            const ControlSet&, const SchemeParams&, const XBoundaryFn&,
                                            const SolveOptions&);
    ValueSurface(Payoff payoff, SuperRepCurve superrep, ControlSet controls)
        : payoff_(std::move(payoff)), superrep_(std::move(superrep)), controls_(std::move(controls)) {}

    Payoff payoff_;
    SuperRepCurve superrep_;
    ControlSet controls_;
    std::vector<std::vector<ControlField>> fields_;  // by time node; empty when not retained
};

ValueSurface pcpt_backward_solve(const MarketModel& model, const Payoff& payoff, const TimeGrid& tgrid,
                                 const XGrid& xgrid, const ControlSet& controls, const SchemeParams& params,
                                 const XBoundaryFn& x_boundary, const SolveOptions& options = {});

}  // namespace qhedge
