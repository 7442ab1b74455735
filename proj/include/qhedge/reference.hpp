#pragma once

// Reference solutions for a put under the linear driver. The quantile
// hedging price comes from the Neyman-Pearson success set. An independent
// Monte-Carlo estimate of the same expectation is provided for validation.

#include <cstdint>

#include "qhedge/fd_core.hpp"
#include "qhedge/model.hpp"

namespace qhedge {

double normal_cdf(double z);
double normal_pdf(double z);
/// Inverse of normal_cdf on (0, 1). Throws InvalidArgument outside.
double normal_inv(double u);

/// E[(K - exp(x + sigma sqrt(tau) Z))^+]; the payoff itself at tau = 0.
double driftless_put_price(double x, double tau, double sigma, double strike);

/// Optimal control exp(-N^{-1}(p)^2 / 2) / sqrt(2 pi (T - t)); 0 at p in {0, 1}.
double optimal_alpha(double t, double p, double horizon);

struct LinearQuantileProblem {
    MarketModel model;
    double strike = 0.0;
    double t = 0.0;
    double x = 0.0;
    double p = 0.0;

    /// Throws unless the driver is linear, mu >= 0, t < T and p in [0, 1].
    void validate() const;
    double tau() const { return model.horizon() - t; }
};

/// Lower edge d of the success set {X_T >= d}, with P(X_T >= d) = p.
double success_threshold(const LinearQuantileProblem& prob);

/// Probability level below which the quantile hedging price vanishes:
/// N((x + mu tau - ln K) / (sigma sqrt(tau))).
double zero_price_threshold(const LinearQuantileProblem& prob);

double linear_quantile_price(const LinearQuantileProblem& prob);

struct OracleResult {
    double estimate = 0.0;
    double std_error = 0.0;
    std::uint64_t n_paths = 0;
    std::uint64_t seed = 0;
};

/// Antithetic Monte-Carlo estimate of E^Q[(K - e^{X_T})^+ 1{X_T >= d}] with
/// X_T = x + sigma sqrt(tau) Z. Deterministic in (n_paths, seed).
OracleResult mc_oracle(const LinearQuantileProblem& prob, std::uint64_t n_paths, std::uint64_t seed);

/// Dirichlet data at the truncation endpoints: the linear-driver quantile
/// price of the put evaluated at the endpoint itself.
double x_boundary_values(const MarketModel& model, double strike, double t, double x_endpoint, double p);

/// x_boundary_values as a callback for the solver. The driver of `model` is
/// ignored; the linear-driver price with the same mu and sigma is used.
XBoundaryFn reference_x_boundary(const MarketModel& model, double strike);

/// p * g(x) at the endpoint, frozen in time. For claims without a reference.
XBoundaryFn frozen_x_boundary(const Payoff& payoff);

}  // namespace qhedge
