#include "qhedge/fd_core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace qhedge {

StencilSample stencil_2d(const ControlField& field, std::size_t k, std::size_t l, double delta, Upwind upwind) {
    if (k == 0 || k + 1 >= field.nx() || l == 0 || l + 1 >= field.np())
        throw std::out_of_range("stencil_2d: node is not interior");
    const int s = field.control().sign();
    const std::size_t l_fwd = static_cast<std::size_t>(static_cast<long>(l) + s);
    const std::size_t l_bwd = static_cast<std::size_t>(static_cast<long>(l) - s);
    const double v = field(k, l);
    const double fwd = field(k + 1, l_fwd);
    const double bwd = field(k - 1, l_bwd);
    StencilSample out;
    out.v = v;
    out.grad = (fwd - bwd) / (2.0 * delta);
    out.grad_up = upwind == Upwind::Forward ? (fwd - v) / delta : (v - bwd) / delta;
    out.lap = (fwd + bwd - 2.0 * v) / (delta * delta);
    return out;
}

StencilSample stencil_1d(std::span<const double> row, std::size_t k, double delta, Upwind upwind) {
    if (k == 0 || k + 1 >= row.size()) throw std::out_of_range("stencil_1d: index is not interior");
    StencilSample out;
    out.v = row[k];
    out.grad = (row[k + 1] - row[k - 1]) / (2.0 * delta);
    out.grad_up = upwind == Upwind::Forward ? (row[k + 1] - row[k]) / delta : (row[k] - row[k - 1]) / delta;
    out.lap = (row[k + 1] + row[k - 1] - 2.0 * row[k]) / (delta * delta);
    return out;
}

double plain_hamiltonian(const MarketModel& model, double t, double x, double y, double q, double A) {
    const double sigma = model.sigma();
    return -model.mu() * q - 0.5 * sigma * sigma * A - eval_driver(model, t, x, y, sigma * q);
}

double lax_friedrichs_hat_F(const MarketModel& model, double t, double x, double y, double q, double q_up, double A,
                            double theta, double delta, double h) {
    const double sigma = model.sigma();
    return -model.mu() * q_up - (0.5 * sigma * sigma + theta * delta * delta / h) * A -
           eval_driver(model, t, x, y, sigma * q);
}

double contraction_factor(double h, double delta, double theta, double mu, double sigma) {
    const double x = h * std::abs(mu) / delta + sigma * sigma * h / (delta * delta) + 2.0 * theta;
    return (4.0 * theta + x) / (1.0 + x);
}

void StepContext::require_cfl() const {
    if (cfl_unchecked) return;
    const CflReport report = check_cfl(h, xgrid.delta(), params, model);
    if (!report.ok()) {
        std::ostringstream os;
        os << "CFL conditions violated at h=" << h << ", delta=" << xgrid.delta() << ": " << report.describe();
        throw CflFailure(os.str());
    }
}

namespace {

/// Coefficients of the Picard map psi: the new value is
/// (data + up*v_up + diff*(v_fwd + v_bwd) + h*f) / denom.
struct PsiCoefficients {
    double up;
    double diff;
    double denom;
    double half_sigma_over_delta;  // sigma / (2 delta), turns v_fwd - v_bwd into z
};

PsiCoefficients psi_coefficients(const StepContext& ctx) {
    const double delta = ctx.xgrid.delta();
    const double h = ctx.h;
    const double sigma = ctx.model.sigma();
    const double theta = ctx.params.theta;
    PsiCoefficients c;
    c.up = h * std::abs(ctx.model.mu()) / delta;
    c.diff = 0.5 * sigma * sigma * h / (delta * delta) + theta;
    c.denom = 1.0 + c.up + 2.0 * c.diff;
    c.half_sigma_over_delta = sigma / (2.0 * delta);
    return c;
}

/// Calls body(driver) with a driver callable specialised on the driver kind.
template <class Body>
decltype(auto) with_driver(const MarketModel& model, Body&& body) {
    const double mu_over_sigma = model.mu() / model.sigma();
    const double inv_sigma = 1.0 / model.sigma();
    const DriverSpec& d = model.driver();
    switch (d.kind) {
        case DriverKind::BorrowSpread: {
            const double R = d.borrow_rate;
            return body([=](double y, double z) { return -z * mu_over_sigma + R * std::max(z * inv_sigma - y, 0.0); });
        }
        case DriverKind::TwoRates: {
            const double r = d.lend_rate, spread = d.borrow_rate - d.lend_rate;
            return body([=](double y, double z) {
                return -r * y - z * mu_over_sigma + spread * std::max(z * inv_sigma - y, 0.0);
            });
        }
        case DriverKind::Linear:
        default:
            return body([=](double, double z) { return -z * mu_over_sigma; });
    }
}

std::string picard_message(const char* what, int iterations, double change, double tol) {
    std::ostringstream os;
    os << what << ": Picard iteration did not converge after " << iterations << " iterations (last change " << change
       << ", tolerance " << tol << ")";
    return os.str();
}

}  // namespace

InteriorSystem::InteriorSystem(const StepContext& ctx, const AdjustedControl& control, const SurfaceFn& prev,
                               std::span<const double> lower_row, std::span<const double> upper_row,
                               std::span<const double> x_lower, std::span<const double> x_upper)
    : ctx_(ctx),
      control_(control),
      shifted_prev_(control, ctx.xgrid.size()),
      lower_row_(lower_row.begin(), lower_row.end()),
      upper_row_(upper_row.begin(), upper_row.end()),
      x_lower_(x_lower.begin(), x_lower.end()),
      x_upper_(x_upper.begin(), x_upper.end()) {
    const std::size_t nx = ctx.xgrid.size();
    const std::size_t np = control.p_nodes();
    if (lower_row_.size() != nx || upper_row_.size() != nx)
        throw InvalidArgument("interior system: p-boundary rows must span the x-grid");
    if (x_lower_.size() != np || x_upper_.size() != np)
        throw InvalidArgument("interior system: x-boundary columns must span the p-grid");
    for (std::size_t k = 1; k + 1 < nx; ++k)
        for (std::size_t l = 1; l + 1 < np; ++l) shifted_prev_(k, l) = prev(k, shifted_p(l));
}

double InteriorSystem::shifted_p(std::size_t l) const {
    const double p = control_.p_node(l) - ctx_.model.mu() * (control_.snapped / ctx_.model.sigma()) * ctx_.h;
    return std::clamp(p, 0.0, 1.0);
}

void InteriorSystem::pin_boundaries(ControlField& field) const {
    const std::size_t nx = field.nx();
    const std::size_t last = field.np() - 1;
    for (std::size_t k = 0; k < nx; ++k) {
        field(k, 0) = lower_row_[k];
        field(k, last) = upper_row_[k];
    }
    for (std::size_t l = 1; l < last; ++l) {
        field(0, l) = x_lower_[l];
        field(nx - 1, l) = x_upper_[l];
    }
}

ControlField InteriorSystem::initial_guess() const {
    ControlField field = shifted_prev_;
    pin_boundaries(field);
    return field;
}

double InteriorSystem::apply_psi(const ControlField& in, ControlField& out) const {
    if (&in == &out) throw InvalidArgument("apply_psi: input and output must differ");
    if (out.nx() != in.nx() || out.np() != in.np()) out = ControlField(control_, in.nx());
    pin_boundaries(out);
    const PsiCoefficients c = psi_coefficients(ctx_);
    const double h = ctx_.h;
    const std::size_t nx = in.nx();
    const std::size_t np = in.np();
    const long s = control_.sign();
    const auto fwd_offset = static_cast<long>(np) + s;
    const auto bwd_offset = -static_cast<long>(np) - s;
    const bool forward = ctx_.upwind == Upwind::Forward;
    const double* v = in.values().data();
    const double* phi = shifted_prev_.values().data();
    double* w = out.values().data();

    return with_driver(ctx_.model, [&](auto driver) {
        double change = 0.0;
        for (std::size_t k = 1; k + 1 < nx; ++k) {
            for (std::size_t l = 1; l + 1 < np; ++l) {
                const long idx = static_cast<long>(k * np + l);
                const double vf = v[idx + fwd_offset];
                const double vb = v[idx + bwd_offset];
                const double f = driver(v[idx], c.half_sigma_over_delta * (vf - vb));
                const double next = (phi[idx] + c.up * (forward ? vf : vb) + c.diff * (vf + vb) + h * f) / c.denom;
                change = std::max(change, std::abs(next - v[idx]));
                w[idx] = next;
            }
        }
        return change;
    });
}

double InteriorSystem::residual(const ControlField& field) const {
    const double delta = ctx_.xgrid.delta();
    double worst = 0.0;
    for (std::size_t k = 1; k + 1 < field.nx(); ++k)
        for (std::size_t l = 1; l + 1 < field.np(); ++l) {
            const StencilSample st = stencil_2d(field, k, l, delta, ctx_.upwind);
            const double F = lax_friedrichs_hat_F(ctx_.model, ctx_.t, ctx_.xgrid.node(k), st.v, st.grad, st.grad_up,
                                                  st.lap, ctx_.params.theta, delta, ctx_.h);
            worst = std::max(worst, std::abs(st.v - shifted_prev_(k, l) + ctx_.h * F));
        }
    return worst;
}

ControlField InteriorSystem::solve(PicardStats* stats) const {
    ControlField current = initial_guess();
    ControlField next = current;
    const double tol = ctx_.params.picard_tol;
    double change = 0.0;
    int iterations = 0;
    while (true) {
        change = apply_psi(current, next);
        ++iterations;
        std::swap(current, next);
        if (change <= tol) break;
        if (iterations >= ctx_.params.picard_max_iters)
            throw PicardFailure(picard_message("interior step", iterations, change, tol), iterations, change);
    }
    if (stats) {
        stats->iterations = iterations;
        stats->last_change = change;
        stats->residual = residual(current);
    }
    return current;
}

BoundarySystem::BoundarySystem(const StepContext& ctx, std::span<const double> prev_row, double x_lower,
                               double x_upper)
    : ctx_(ctx), prev_(prev_row.begin(), prev_row.end()), x_lower_(x_lower), x_upper_(x_upper) {
    if (prev_.size() != ctx.xgrid.size()) throw InvalidArgument("boundary system: row must span the x-grid");
}

BoundaryRow BoundarySystem::initial_guess() const {
    BoundaryRow row = prev_;
    row.front() = x_lower_;
    row.back() = x_upper_;
    return row;
}

double BoundarySystem::apply_psi(std::span<const double> in, std::span<double> out) const {
    const std::size_t nx = in.size();
    if (out.size() != nx || nx != prev_.size()) throw InvalidArgument("boundary psi: size mismatch");
    const PsiCoefficients c = psi_coefficients(ctx_);
    const double h = ctx_.h;
    const bool forward = ctx_.upwind == Upwind::Forward;
    out.front() = x_lower_;
    out.back() = x_upper_;
    return with_driver(ctx_.model, [&](auto driver) {
        double change = 0.0;
        for (std::size_t k = 1; k + 1 < nx; ++k) {
            const double vf = in[k + 1];
            const double vb = in[k - 1];
            const double f = driver(in[k], c.half_sigma_over_delta * (vf - vb));
            const double next = (prev_[k] + c.up * (forward ? vf : vb) + c.diff * (vf + vb) + h * f) / c.denom;
            change = std::max(change, std::abs(next - in[k]));
            out[k] = next;
        }
        return change;
    });
}

double BoundarySystem::residual(std::span<const double> row) const {
    const double delta = ctx_.xgrid.delta();
    double worst = 0.0;
    for (std::size_t k = 1; k + 1 < row.size(); ++k) {
        const StencilSample st = stencil_1d(row, k, delta, ctx_.upwind);
        const double F = lax_friedrichs_hat_F(ctx_.model, ctx_.t, ctx_.xgrid.node(k), st.v, st.grad, st.grad_up,
                                              st.lap, ctx_.params.theta, delta, ctx_.h);
        worst = std::max(worst, std::abs(st.v - prev_[k] + ctx_.h * F));
    }
    return worst;
}

BoundaryRow BoundarySystem::solve(PicardStats* stats) const {
    BoundaryRow current = initial_guess();
    BoundaryRow next = current;
    const double tol = ctx_.params.picard_tol;
    double change = 0.0;
    int iterations = 0;
    while (true) {
        change = apply_psi(current, next);
        ++iterations;
        std::swap(current, next);
        if (change <= tol) break;
        if (iterations >= ctx_.params.picard_max_iters)
            throw PicardFailure(picard_message("boundary step", iterations, change, tol), iterations, change);
    }
    if (stats) {
        stats->iterations = iterations;
        stats->last_change = change;
        stats->residual = residual(current);
    }
    return current;
}

ControlField picard_step_interior(const StepContext& ctx, const AdjustedControl& control, const SurfaceFn& prev,
                                  std::span<const double> lower_row, std::span<const double> upper_row,
                                  std::span<const double> x_lower, std::span<const double> x_upper,
                                  PicardStats* stats) {
    ctx.require_cfl();
    return InteriorSystem(ctx, control, prev, lower_row, upper_row, x_lower, x_upper).solve(stats);
}

BoundaryRow picard_step_boundary(const StepContext& ctx, std::span<const double> prev_row, double x_lower,
                                 double x_upper, PicardStats* stats) {
    ctx.require_cfl();
    return BoundarySystem(ctx, prev_row, x_lower, x_upper).solve(stats);
}

}  // namespace qhedge
