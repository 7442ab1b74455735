#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "qhedge/reference.hpp"

using namespace qhedge;

namespace {

const double kMu = 0.01875;
const double kSigma = 0.25;
const double kK = 30.0;
const double kX = std::log(30.0);

// Maclaurin series of the normal CDF, 0.5 + phi(z) * sum z^(2n+1) / (2n+1)!!.
double series_cdf(double z) {
    double term = z, sum = z;
    for (int n = 1; n < 200; ++n) {
        term *= z * z / (2.0 * n + 1.0);
        sum += term;
    }
    return 0.5 + sum * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

// Composite Simpson rule of f(z) phi(z) over [lo, hi].
double gauss_expectation(const std::function<double(double)>& f, double lo = -12.0, double hi = 12.0,
                         int n = 200000) {
    const double w = (hi - lo) / n;
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double z = lo + i * w;
        const double c = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        s += c * f(z) * std::exp(-0.5 * z * z);
    }
    return s * w / 3.0 / std::sqrt(2.0 * std::numbers::pi);
}

LinearQuantileProblem problem(double x, double p, double t = 0.0) {
    return {MarketModel(kMu, kSigma, 1.0), kK, t, x, p};
}

}  // namespace

TEST_CASE("normal distribution functions") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_inv(0.5) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
    CHECK(normal_cdf(1.959964) == doctest::Approx(0.975).epsilon(1e-6));
    for (double z : {-3.0, -1.2, 0.3, 1.959964, 2.5})
        CHECK(std::abs(normal_cdf(z) - series_cdf(z)) <= 1e-12);
    for (double u : {1e-10, 1e-4, 0.02, 0.3, 0.5, 0.8, 0.975, 0.9999, 1 - 1e-9})
        CHECK(std::abs(normal_cdf(normal_inv(u)) - u) <= 1e-12);
    CHECK_THROWS_AS(normal_inv(0.0), InvalidArgument);
    CHECK_THROWS_AS(normal_inv(1.0), InvalidArgument);
    CHECK(normal_pdf(0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)));
}

TEST_CASE("driftless put") {
    CHECK(driftless_put_price(std::log(20.0), 0.0, kSigma, kK) == doctest::Approx(10.0).epsilon(1e-14));
    CHECK(driftless_put_price(kX, 1.0, kSigma, 0.0) == 0.0);
    const double oracle = gauss_expectation([](double z) { return std::max(kK - std::exp(kX + kSigma * z), 0.0); });
    CHECK(driftless_put_price(kX, 1.0, kSigma, kK) == doctest::Approx(oracle).epsilon(1e-8));
    CHECK(driftless_put_price(kX, 1.0, kSigma, kK) == doctest::Approx(2.579).epsilon(1e-3));
}

TEST_CASE("optimal control") {
    CHECK(optimal_alpha(0.0, 0.5, 1.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-14));
    for (double p : {0.1, 0.3, 0.45}) CHECK(optimal_alpha(0.2, p, 1.0) == doctest::Approx(optimal_alpha(0.2, 1 - p, 1.0)));
    CHECK(optimal_alpha(0.0, 1e-12, 1.0) < 1e-10);
    CHECK(optimal_alpha(0.0, 0.0, 1.0) == 0.0);
    const double h = 0.01;
    for (double t = 0.0; t <= 1.0 - h + 1e-12; t += 0.01)
        for (double p = 0.01; p < 1.0; p += 0.01) CHECK(optimal_alpha(t, p, 1.0) <= 1.0 / std::sqrt(2 * std::numbers::pi * h) + 1e-12);
}

TEST_CASE("quantile hedging price of the put") {
    SUBCASE("edges") {
        CHECK(linear_quantile_price(problem(kX, 0.0)) == 0.0);
        for (double x : {std::log(12.0), kX, std::log(40.0)})
            CHECK(std::abs(linear_quantile_price(problem(x, 1.0)) - driftless_put_price(x, 1.0, kSigma, kK)) <= 1e-10);
    }
    SUBCASE("agrees with quadrature over the success set") {
        for (double x : {std::log(20.0), kX, std::log(38.0)})
            for (double p : {0.6, 0.8, 0.95}) {
                const double d = x + kMu - kSigma * normal_inv(p);
                const double oracle = gauss_expectation([&](double z) {
                    const double xt = x + kSigma * z;
                    return xt >= d ? std::max(kK - std::exp(xt), 0.0) : 0.0;
                }, (d - x) / kSigma, 12.0);
                CHECK(linear_quantile_price(problem(x, p)) == doctest::Approx(oracle).epsilon(1e-7).scale(1.0));
            }
    }
    SUBCASE("non-decreasing in p") {
        double last = 0.0;
        for (int i = 0; i <= 50; ++i) {
            const double v = linear_quantile_price(problem(kX, i / 50.0));
            CHECK(v >= last);
            last = v;
        }
    }
    SUBCASE("flat-zero threshold") {
        const double p_star = zero_price_threshold(problem(kX, 0.5));
        CHECK(p_star == doctest::Approx(normal_cdf(kMu / kSigma)).epsilon(1e-15));
        CHECK(p_star == doctest::Approx(0.5299).epsilon(1e-4));
        CHECK(linear_quantile_price(problem(kX, p_star - 1e-3)) == 0.0);
        CHECK(linear_quantile_price(problem(kX, p_star + 1e-3)) > 0.0);
    }
    SUBCASE("deep out of the money") {
        const double x = std::log(45.0);
        for (double p : {0.2, 0.7, 0.99})
            CHECK(linear_quantile_price(problem(x, p)) <= driftless_put_price(x, 1.0, kSigma, kK) + 1e-15);
    }
    SUBCASE("rejected inputs") {
        CHECK_THROWS_AS(linear_quantile_price({MarketModel(-0.01, kSigma, 1.0), kK, 0.0, kX, 0.5}), InvalidArgument);
        CHECK_THROWS_AS(linear_quantile_price({MarketModel(kMu, kSigma, 1.0, DriverSpec::borrow_spread(0.05)), kK, 0.0, kX, 0.5}),
                        InvalidArgument);
        CHECK_THROWS_AS(linear_quantile_price(problem(kX, 1.5)), InvalidArgument);
        CHECK_THROWS_AS(linear_quantile_price(problem(kX, 0.5, 1.0)), InvalidArgument);
    }
}

TEST_CASE("Monte-Carlo oracle") {
    SUBCASE("lattice agreement within three standard errors") {
        for (double S : {20.0, 25.0, 30.0, 35.0, 40.0})
            for (double p : {0.1, 0.3, 0.6, 0.8, 0.95}) {
                const LinearQuantileProblem prob = problem(std::log(S), p);
                const OracleResult r = mc_oracle(prob, 1000000, 42);
                CHECK(std::abs(r.estimate - linear_quantile_price(prob)) <= 3.0 * r.std_error + 1e-12);
            }
    }
    SUBCASE("full success set") {
        const OracleResult r = mc_oracle(problem(kX, 1.0), 1000000, 5);
        CHECK(std::abs(r.estimate - driftless_put_price(kX, 1.0, kSigma, kK)) <= 3.0 * r.std_error);
    }
    SUBCASE("empty success set") {
        const OracleResult r = mc_oracle(problem(kX, 0.0), 10000, 5);
        CHECK(r.estimate == 0.0);
        CHECK(r.std_error == 0.0);
    }
    SUBCASE("standard error follows the square-root law") {
        const double a = mc_oracle(problem(kX, 0.9), 100000, 9).std_error;
        const double b = mc_oracle(problem(kX, 0.9), 400000, 9).std_error;
        CHECK(b / a == doctest::Approx(0.5).epsilon(0.2));
    }
    SUBCASE("deterministic in the seed") {
        CHECK(mc_oracle(problem(kX, 0.9), 20000, 1).estimate == mc_oracle(problem(kX, 0.9), 20000, 1).estimate);
        CHECK(mc_oracle(problem(kX, 0.9), 20000, 1).estimate != mc_oracle(problem(kX, 0.9), 20000, 2).estimate);
    }
    CHECK_THROWS_AS(mc_oracle(problem(kX, 0.9), 10, 1), InvalidArgument);
}

TEST_CASE("x-boundary data") {
    const MarketModel m(kMu, kSigma, 1.0, DriverSpec::borrow_spread(0.05));
    const XBoundaryFn xb = reference_x_boundary(m, kK);
    const double B1 = std::log(10.0);
    CHECK(xb(0.3, B1, 0.0) == 0.0);
    CHECK(xb(0.3, B1, 1.0) == doctest::Approx(driftless_put_price(B1, 0.7, kSigma, kK)).epsilon(1e-12));
    const XBoundaryFn frozen = frozen_x_boundary(Payoff::put(kK));
    CHECK(frozen(0.2, B1, 0.5) == doctest::Approx(10.0).epsilon(1e-12));
}
