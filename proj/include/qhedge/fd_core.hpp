#pragma once

// Finite-difference building blocks for one implicit step of the scheme.
//
// For a control a with snapped value s*sigma/(delta*N) the interior unknowns
// live on the lattice (x_k, l/N). All stencils act along the diagonal
// (k +- 1, l +- s), which is the only direction in which the control-a
// diffusion acts. Each step is solved by Picard iteration of the explicit
// averaging map psi, which contracts under the CFL conditions.

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qhedge/control_grid.hpp"
#include "qhedge/model.hpp"

namespace qhedge {

/// Values of one control's solution on the x-grid times its p-grid. Storage
/// is x-major so each x-node's p-profile is contiguous.
class ControlField {
public:
    ControlField() = default;
    ControlField(AdjustedControl control, std::size_t nx, double fill = 0.0)
        : control_(control), nx_(nx), np_(control.p_nodes()), values_(nx * np_, fill) {}

    const AdjustedControl& control() const noexcept { return control_; }
    std::size_t nx() const noexcept { return nx_; }
    std::size_t np() const noexcept { return np_; }

    double& operator()(std::size_t k, std::size_t l) { return values_[k * np_ + l]; }
    double operator()(std::size_t k, std::size_t l) const { return values_[k * np_ + l]; }

    std::span<const double> profile(std::size_t k) const { return {values_.data() + k * np_, np_}; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

private:
    AdjustedControl control_{};
    std::size_t nx_ = 0;
    std::size_t np_ = 0;
    std::vector<double> values_;
};

/// Solution over the x-grid at p = 0 or p = 1.
using BoundaryRow = std::vector<double>;

struct StencilSample {
    double v = 0.0;
    double grad = 0.0;     // centred difference
    double grad_up = 0.0;  // one-sided difference in the upwind direction
    double lap = 0.0;
};

/// Diagonal stencils at interior node (k, l). Throws std::out_of_range
/// outside 0 < k < nx-1, 0 < l < N.
StencilSample stencil_2d(const ControlField& field, std::size_t k, std::size_t l, double delta, Upwind upwind);

/// One-dimensional stencils at interior index k of a row.
StencilSample stencil_1d(std::span<const double> row, std::size_t k, double delta, Upwind upwind);

/// F(t,x,y,q,A) = -mu q - sigma^2/2 A - f(t,x,y,sigma q).
double plain_hamiltonian(const MarketModel& model, double t, double x, double y, double q, double A);

/// Lax-Friedrichs numerical Hamiltonian
/// -mu q_up - (sigma^2/2 + theta delta^2/h) A - f(t,x,y,sigma q).
double lax_friedrichs_hat_F(const MarketModel& model, double t, double x, double y, double q, double q_up, double A,
                            double theta, double delta, double h);

/// Lipschitz factor (4 theta + x)/(1 + x), x = h|mu|/delta + sigma^2 h/delta^2 + 2 theta,
/// of the Picard map under the CFL conditions.
double contraction_factor(double h, double delta, double theta, double mu, double sigma);

/// Raised when Picard iteration does not reach the tolerance.
class PicardFailure : public std::runtime_error {
public:
    PicardFailure(const std::string& what, int iterations, double last_change)
        : std::runtime_error(what), iterations_(iterations), last_change_(last_change) {}
    int iterations() const noexcept { return iterations_; }
    double last_change() const noexcept { return last_change_; }

private:
    int iterations_;
    double last_change_;
};

/// Raised when a checked step is requested with parameters that violate the
/// CFL conditions.
class CflFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Evaluates the solution at the next time node: (x-index, p) -> value.
using SurfaceFn = std::function<double(std::size_t k, double p)>;

/// Dirichlet data on the x-truncation: (t, x, p) -> value.
using XBoundaryFn = std::function<double(double t, double x, double p)>;

/// Everything one implicit step needs besides its data. `t` is the time of
/// the unknown, `h` the step to the next node.
struct StepContext {
    const MarketModel& model;
    const SchemeParams& params;
    const XGrid& xgrid;
    double t = 0.0;
    double h = 0.0;
    Upwind upwind = Upwind::Forward;
    bool cfl_unchecked = false;

    /// Throws CflFailure unless the step satisfies the CFL conditions or the
    /// context is unchecked.
    void require_cfl() const;
};

struct PicardStats {
    int iterations = 0;
    double last_change = 0.0;  // sup-norm of the final iterate difference
    double residual = 0.0;     // sup-norm of the scheme residual at the returned field
};

/// Interior system of one control for one step: the Picard map psi, its
/// residual, and the solve.
class InteriorSystem {
public:
    /// `lower_row`/`upper_row` are the p = 0 / p = 1 solutions over the
    /// x-grid; `x_lower`/`x_upper` are Dirichlet values at the first/last
    /// x-node for every p-node of the control.
    InteriorSystem(const StepContext& ctx, const AdjustedControl& control, const SurfaceFn& prev,
                   std::span<const double> lower_row, std::span<const double> upper_row,
                   std::span<const double> x_lower, std::span<const double> x_upper);

    /// Shifted probability p_l - mu (snapped/sigma) h, clamped to [0, 1].
    double shifted_p(std::size_t l) const;

    /// Previous-step data read at the shifted probabilities.
    const ControlField& shifted_prev() const noexcept { return shifted_prev_; }

    /// Starting iterate: shifted_prev with boundary data pinned.
    ControlField initial_guess() const;

    /// out = psi(in); returns the sup-norm of out - in over interior nodes.
    double apply_psi(const ControlField& in, ControlField& out) const;

    /// sup |S(k, l, ...)| over interior nodes.
    double residual(const ControlField& field) const;

    ControlField solve(PicardStats* stats = nullptr) const;

    const AdjustedControl& control() const noexcept { return control_; }

private:
    void pin_boundaries(ControlField& field) const;

    StepContext ctx_;
    AdjustedControl control_;
    ControlField shifted_prev_;
    std::vector<double> lower_row_, upper_row_, x_lower_, x_upper_;
};

/// One-dimensional system solved on the p = 0 and p = 1 edges and by the
/// super-replication recursion.
class BoundarySystem {
public:
    BoundarySystem(const StepContext& ctx, std::span<const double> prev_row, double x_lower, double x_upper);

    BoundaryRow initial_guess() const;
    double apply_psi(std::span<const double> in, std::span<double> out) const;
    double residual(std::span<const double> row) const;
    BoundaryRow solve(PicardStats* stats = nullptr) const;

private:
    StepContext ctx_;
    std::vector<double> prev_;
    double x_lower_, x_upper_;
};

/// Solves one control's interior system (checked against the CFL conditions
/// unless ctx.cfl_unchecked).
ControlField picard_step_interior(const StepContext& ctx, const AdjustedControl& control, const SurfaceFn& prev,
                                  std::span<const double> lower_row, std::span<const double> upper_row,
                                  std::span<const double> x_lower, std::span<const double> x_upper,
                                  PicardStats* stats = nullptr);

/// Solves the one-dimensional system against `prev_row`, with Dirichlet
/// values at the x-endpoints.
BoundaryRow picard_step_boundary(const StepContext& ctx, std::span<const double> prev_row, double x_lower,
                                 double x_upper, PicardStats* stats = nullptr);

}  // namespace qhedge
