#include "qhedge/reference.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace qhedge {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kTwoPi = 6.28318530717958647692;

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(kTwoPi); }

double normal_inv(double u) {
    if (!(u > 0.0 && u < 1.0)) throw InvalidArgument("normal_inv: argument must lie in (0, 1)");
    // Acklam's rational approximation (relative error ~1e-9) ...
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double z;
    if (u < p_low) {
        const double q = std::sqrt(-2.0 * std::log(u));
        z = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (u <= 1.0 - p_low) {
        const double q = u - 0.5;
        const double r = q * q;
        z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-u));
        z = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // ... refined by Halley steps against the erfc-based CDF.
    for (int i = 0; i < 2; ++i) {
        const double e = normal_cdf(z) - u;
        const double step = e / normal_pdf(z);
        z -= step / (1.0 + 0.5 * z * step);
    }
    return z;
}

double driftless_put_price(double x, double tau, double sigma, double strike) {
    if (tau < 0.0) throw InvalidArgument("driftless_put_price: tau must be non-negative");
    if (strike <= 0.0) return 0.0;
    if (tau == 0.0) return std::max(strike - std::exp(x), 0.0);
    const double vol = sigma * std::sqrt(tau);
    const double d1 = (x + sigma * sigma * tau - std::log(strike)) / vol;
    const double d2 = d1 - vol;
    return strike * normal_cdf(-d2) - std::exp(x + 0.5 * sigma * sigma * tau) * normal_cdf(-d1);
}

double optimal_alpha(double t, double p, double horizon) {
    if (!(t >= 0.0 && t < horizon)) throw InvalidArgument("optimal_alpha: requires 0 <= t < T");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("optimal_alpha: p must lie in [0, 1]");
    if (p == 0.0 || p == 1.0) return 0.0;
    const double z = normal_inv(p);
    return std::exp(-0.5 * z * z) / std::sqrt(kTwoPi * (horizon - t));
}

void LinearQuantileProblem::validate() const {
    if (model.driver().kind != DriverKind::Linear)
        throw InvalidArgument("linear quantile reference requires the linear driver");
    if (model.mu() < 0.0)
        throw InvalidArgument("linear quantile reference: the success set is only a half-line for mu >= 0");
    if (!(strike >= 0.0)) throw InvalidArgument("linear quantile reference: strike must be non-negative");
    if (!(t >= 0.0 && t < model.horizon())) throw InvalidArgument("linear quantile reference: requires 0 <= t < T");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("linear quantile reference: p must lie in [0, 1]");
}

double success_threshold(const LinearQuantileProblem& prob) {
    prob.validate();
    if (prob.p == 0.0) return std::numeric_limits<double>::infinity();
    if (prob.p == 1.0) return -std::numeric_limits<double>::infinity();
    const double tau = prob.tau();
    return prob.x + prob.model.mu() * tau - prob.model.sigma() * std::sqrt(tau) * normal_inv(prob.p);
}

double zero_price_threshold(const LinearQuantileProblem& prob) {
    prob.validate();
    const double tau = prob.tau();
    if (prob.strike <= 0.0) return 1.0;
    return normal_cdf((prob.x + prob.model.mu() * tau - std::log(prob.strike)) / (prob.model.sigma() * std::sqrt(tau)));
}

double linear_quantile_price(const LinearQuantileProblem& prob) {
    prob.validate();
    if (prob.p == 0.0 || prob.strike <= 0.0) return 0.0;
    const double tau = prob.tau();
    const double sigma = prob.model.sigma();
    const double vol = sigma * std::sqrt(tau);
    const double log_k = std::log(prob.strike);
    const double d = success_threshold(prob);
    if (d >= log_k) return 0.0;
    // Integrate (K - e^{x + vol Z}) over z_lo <= Z <= z_hi under the standard normal law.
    const double z_hi = (log_k - prob.x) / vol;
    const double cash = prob.p == 1.0 ? normal_cdf(z_hi) : normal_cdf(z_hi) - normal_cdf((d - prob.x) / vol);
    const double asset_hi = normal_cdf(z_hi - vol);
    const double asset = prob.p == 1.0 ? asset_hi : asset_hi - normal_cdf((d - prob.x) / vol - vol);
    return prob.strike * cash - std::exp(prob.x + 0.5 * vol * vol) * asset;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t kPairsPerBlock = 1u << 14;

}  // namespace

OracleResult mc_oracle(const LinearQuantileProblem& prob, std::uint64_t n_paths, std::uint64_t seed) {
    prob.validate();
    if (n_paths < 10000) throw InvalidArgument("mc_oracle: needs at least 1e4 paths");
    OracleResult out;
    out.n_paths = n_paths;
    out.seed = seed;
    if (prob.p == 0.0) return out;

    const double vol = prob.model.sigma() * std::sqrt(prob.tau());
    const double d = success_threshold(prob);
    auto payoff = [&](double z) {
        const double x_T = prob.x + vol * z;
        return x_T >= d ? std::max(prob.strike - std::exp(x_T), 0.0) : 0.0;
    };

    // Each block of antithetic pairs has its own counter-derived seed, so the
    // estimate does not depend on how blocks are scheduled.
    const std::uint64_t pairs = n_paths / 2;
    double sum = 0.0, sum_sq = 0.0;
    for (std::uint64_t first = 0, block = 0; first < pairs; first += kPairsPerBlock, ++block) {
        std::mt19937_64 rng(splitmix64(seed ^ splitmix64(block)));
        const std::uint64_t count = std::min(kPairsPerBlock, pairs - first);
        for (std::uint64_t i = 0; i < count; i += 2) {
            // Box-Muller: two normals per draw of two uniforms in (0, 1].
            const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
            const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            const double radius = std::sqrt(-2.0 * std::log(u1));
            const double zs[2] = {radius * std::cos(kTwoPi * u2), radius * std::sin(kTwoPi * u2)};
            for (std::uint64_t j = 0; j < 2 && i + j < count; ++j) {
                const double sample = 0.5 * (payoff(zs[j]) + payoff(-zs[j]));
                sum += sample;
                sum_sq += sample * sample;
            }
        }
    }
    const double n = static_cast<double>(pairs);
    out.estimate = sum / n;
    const double variance = std::max(sum_sq / n - out.estimate * out.estimate, 0.0) * n / (n - 1.0);
    out.std_error = std::sqrt(variance / n);
    return out;
}

double x_boundary_values(const MarketModel& model, double strike, double t, double x_endpoint, double p) {
    const MarketModel linear = model.with_driver(DriverSpec::linear());
    return linear_quantile_price({linear, strike, t, x_endpoint, p});
}

XBoundaryFn reference_x_boundary(const MarketModel& model, double strike) {
    const MarketModel linear = model.with_driver(DriverSpec::linear());
    return [linear, strike](double t, double x, double p) {
        return linear_quantile_price({linear, strike, t, x, p});
    };
}

XBoundaryFn frozen_x_boundary(const Payoff& payoff) {
    return [payoff](double, double x, double p) { return p * payoff(x); };
}

}  // namespace qhedge
