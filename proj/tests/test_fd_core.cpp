#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "qhedge/fd_core.hpp"

using namespace qhedge;

namespace {

const double kMu = 0.01875;
const double kSigma = 0.25;

double sup_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Fixture holding one step's setup on a grid of spacing delta, with h = delta.
struct Step {
    MarketModel model;
    SchemeParams params;
    XGrid xgrid;
    AdjustedControl control;
    double h;

    Step(MarketModel m, double delta, double a, double tol = 1e-10)
        : model(m), xgrid(std::log(10.0), std::log(45.0), delta), control(adjust_control(a, delta, m.sigma())),
          h(delta) {
        params.picard_tol = tol;
    }

    StepContext ctx() const { return {model, params, xgrid, 0.5, h, upwind_for(model), false}; }
    std::size_t nx() const { return xgrid.size(); }
    std::size_t np() const { return control.p_nodes(); }

    ControlField solve(const SurfaceFn& prev, PicardStats* stats = nullptr) const {
        std::vector<double> lower(nx()), upper(nx()), xl(np()), xu(np());
        for (std::size_t k = 0; k < nx(); ++k) {
            lower[k] = prev(k, 0.0);
            upper[k] = prev(k, 1.0);
        }
        for (std::size_t l = 0; l < np(); ++l) {
            xl[l] = prev(0, control.p_node(l));
            xu[l] = prev(nx() - 1, control.p_node(l));
        }
        return picard_step_interior(ctx(), control, prev, lower, upper, xl, xu, stats);
    }
};

MarketModel spread_model() { return {kMu, kSigma, 1.0, DriverSpec::borrow_spread(0.05)}; }

}  // namespace

TEST_CASE("diagonal stencils") {
    const double delta = 0.1;
    const XGrid g(0.0, 1.0, delta);
    const AdjustedControl c = adjust_control(0.5, delta, kSigma);  // N = 5
    REQUIRE(c.intervals == 5);
    ControlField fx(c, g.size()), fp(c, g.size()), fq(c, g.size());
    for (std::size_t k = 0; k < g.size(); ++k)
        for (std::size_t l = 0; l < c.p_nodes(); ++l) {
            fx(k, l) = g.node(k);
            fp(k, l) = c.p_node(l);
            fq(k, l) = g.node(k) * g.node(k);
        }
    const StencilSample sx = stencil_2d(fx, 3, 2, delta, Upwind::Forward);
    CHECK(sx.grad == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(sx.lap) < 1e-10);

    const StencilSample sp = stencil_2d(fp, 3, 2, delta, Upwind::Forward);
    CHECK(sp.grad == doctest::Approx(1.0 / (c.intervals * delta)).epsilon(1e-12));
    CHECK(sp.grad == doctest::Approx(std::abs(c.snapped) / kSigma).epsilon(1e-12));

    const StencilSample sq = stencil_2d(fq, 4, 2, delta, Upwind::Backward);
    CHECK(sq.lap == doctest::Approx(2.0).epsilon(1e-9));

    CHECK_THROWS_AS(stencil_2d(fx, 0, 2, delta, Upwind::Forward), std::out_of_range);
    CHECK_THROWS_AS(stencil_2d(fx, 3, 0, delta, Upwind::Forward), std::out_of_range);
    CHECK_THROWS_AS(stencil_2d(fx, 3, c.intervals, delta, Upwind::Forward), std::out_of_range);

    const std::vector<double> row{0.0, 1.0, 4.0, 9.0};
    const StencilSample r = stencil_1d(row, 1, 1.0, Upwind::Forward);
    CHECK(r.grad == 2.0);
    CHECK(r.grad_up == 3.0);
    CHECK(r.lap == 2.0);
    CHECK(stencil_1d(row, 2, 1.0, Upwind::Backward).grad_up == 3.0);
    CHECK_THROWS_AS(stencil_1d(row, 3, 1.0, Upwind::Forward), std::out_of_range);
}

TEST_CASE("numerical Hamiltonian") {
    const MarketModel lin(kMu, kSigma, 1.0);
    const double theta = 0.2, delta = 0.05, h = 0.05;
    CHECK(lax_friedrichs_hat_F(lin, 0, 0, 0, 0, 0, 0, theta, delta, h) == 0.0);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (const MarketModel& m : {lin, spread_model()})
        for (int i = 0; i < 100; ++i) {
            const double y = u(rng), q = u(rng), A = u(rng);
            const double diff = lax_friedrichs_hat_F(m, 0, 0, y, q, q, A, theta, delta, h) -
                                plain_hamiltonian(m, 0, 0, y, q, A);
            CHECK(diff == doctest::Approx(-theta * delta * delta / h * A).epsilon(1e-9).scale(1.0));
        }
    for (int i = 0; i < 100; ++i) {
        const double q = u(rng), qu = u(rng), A = u(rng);
        const double expected = -kMu * qu - (kSigma * kSigma / 2 + theta * delta * delta / h) * A + kMu * q;
        CHECK(lax_friedrichs_hat_F(lin, 0, 0, u(rng), q, qu, A, theta, delta, h) ==
              doctest::Approx(expected).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("contraction factor") {
    CHECK(contraction_factor(0.05, 0.05, 0.2, kMu, kSigma) == doctest::Approx(2.46875 / 2.66875).epsilon(1e-14));
    CHECK(contraction_factor(0.05, 0.05, 0.2, kMu, kSigma) == doctest::Approx(0.9251).epsilon(1e-4));
    CHECK(contraction_factor(1e-9, 1.0, 1e-12, kMu, kSigma) < 1.0);
    for (double theta : {0.0, 0.05, 0.1, 0.2, 0.2499})
        for (double h : {0.001, 0.01, 0.1}) CHECK(contraction_factor(h, 0.01, theta, kMu, kSigma) < 1.0);
}

TEST_CASE("Picard step on trivial data") {
    SUBCASE("zero data stays zero after one iteration") {
        for (const MarketModel& m : {MarketModel(kMu, kSigma, 1.0), spread_model()}) {
            const Step s(m, 0.05, 1.0);
            PicardStats stats;
            const ControlField f = s.solve([](std::size_t, double) { return 0.0; }, &stats);
            CHECK(stats.iterations == 1);
            for (double v : f.values()) CHECK(v == 0.0);
        }
    }
    SUBCASE("constant data is reproduced by the linear driver") {
        const Step s(MarketModel(kMu, kSigma, 1.0), 0.05, -1.0);
        const ControlField f = s.solve([](std::size_t, double) { return 1.75; });
        for (double v : f.values()) CHECK(v == doctest::Approx(1.75).epsilon(1e-12));
    }
    SUBCASE("one-dimensional system") {
        const Step s(MarketModel(kMu, kSigma, 1.0), 0.05, 1.0);
        const std::vector<double> zero(s.nx(), 0.0), flat(s.nx(), 2.0);
        for (double v : picard_step_boundary(s.ctx(), zero, 0.0, 0.0)) CHECK(v == 0.0);
        for (double v : picard_step_boundary(s.ctx(), flat, 2.0, 2.0)) CHECK(v == doctest::Approx(2.0).epsilon(1e-12));
    }
}

TEST_CASE("CFL checks guard the step") {
    Step s(spread_model(), 0.005, 1.0);
    s.h = 0.1;
    const std::vector<double> row(s.nx(), 0.0);
    CHECK_THROWS_AS(picard_step_boundary(s.ctx(), row, 0.0, 0.0), CflFailure);
    StepContext unchecked = s.ctx();
    unchecked.cfl_unchecked = true;
    CHECK_NOTHROW(picard_step_boundary(unchecked, row, 0.0, 0.0));
}

TEST_CASE("Picard failure is reported") {
    Step s(spread_model(), 0.05, 1.0, 1e-14);
    s.params.picard_max_iters = 2;
    CHECK_THROWS_AS(s.solve([](std::size_t k, double p) { return p * static_cast<double>(k); }), PicardFailure);
}

TEST_CASE("fixed-point residual is bounded by the tolerance") {
    const Step s(spread_model(), 0.05, 1.5, 1e-6);
    const Payoff g = Payoff::put(30.0);
    PicardStats stats;
    s.solve([&](std::size_t k, double p) { return g(s.xgrid.node(k)) * p; }, &stats);
    const double D = 1.0 + s.h * kMu / 0.05 + kSigma * kSigma * s.h / (0.05 * 0.05) + 2 * s.params.theta;
    CHECK(stats.last_change <= s.params.picard_tol);
    CHECK(stats.residual <= D * s.params.picard_tol);
}

TEST_CASE("psi contracts with the predicted factor") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    const Step s(spread_model(), 0.05, 2.0);
    const InteriorSystem sys(s.ctx(), s.control, [](std::size_t, double p) { return p; },
                             std::vector<double>(s.nx(), 0.0), std::vector<double>(s.nx(), 1.0),
                             std::vector<double>(s.np(), 0.5), std::vector<double>(s.np(), 0.5));
    const double factor = contraction_factor(s.h, 0.05, s.params.theta, kMu, kSigma);
    for (int trial = 0; trial < 50; ++trial) {
        ControlField a(s.control, s.nx()), b(s.control, s.nx()), pa, pb;
        for (double& v : a.values()) v = u(rng);
        for (double& v : b.values()) v = u(rng);
        sys.apply_psi(a, pa);
        sys.apply_psi(b, pb);
        CHECK(sup_diff(pa.values(), pb.values()) <= factor * sup_diff(a.values(), b.values()) + 1e-13);
    }
}

TEST_CASE("discrete comparison on random coarse grids") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double delta = 0.05 + 0.15 * u(rng);
        const double a = (u(rng) < 0.5 ? -1.0 : 1.0) * (0.3 + 2.0 * u(rng));
        const Step s(spread_model(), delta, a);
        std::vector<double> c1(s.nx()), c2(s.nx()), d1(s.nx()), d2(s.nx());
        for (std::size_t k = 0; k < s.nx(); ++k) {
            c1[k] = 10.0 * u(rng);
            d1[k] = 5.0 * u(rng);
            c2[k] = c1[k] + 3.0 * u(rng);
            d2[k] = d1[k] + 3.0 * u(rng);
        }
        const ControlField lo = s.solve([&](std::size_t k, double p) { return c1[k] * p + d1[k] * p * p; });
        const ControlField hi = s.solve([&](std::size_t k, double p) { return c2[k] * p + d2[k] * p * p; });
        for (std::size_t i = 0; i < lo.values().size(); ++i) CHECK(lo.values()[i] <= hi.values()[i] + 1e-8);
    }
}

TEST_CASE("L-infinity stability") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double B = 30.0;
    for (int trial = 0; trial < 10; ++trial) {
        const Step s(spread_model(), 0.05 + 0.1 * u(rng), 0.5 + 2.0 * u(rng));
        std::vector<double> vals(s.nx() * 11);
        for (double& v : vals) v = B * u(rng);
        const ControlField f = s.solve([&](std::size_t k, double p) {
            const double pos = p * 10.0;
            const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(pos), 9);
            const double w = pos - static_cast<double>(i);
            return (1 - w) * vals[k * 11 + i] + w * vals[k * 11 + i + 1];
        });
        for (double v : f.values()) {
            CHECK(v >= -1e-8);
            CHECK(v <= B + 1e-8);
        }
    }
}

TEST_CASE("affine data is reproduced without drift") {
    const Step s(MarketModel(0.0, kSigma, 1.0), 0.05, 1.25, 1e-12);
    const ControlField f = s.solve([&](std::size_t k, double) { return 3.0 - 0.7 * s.xgrid.node(k); });
    for (std::size_t k = 0; k < s.nx(); ++k)
        for (std::size_t l = 0; l < s.np(); ++l)
            CHECK(f(k, l) == doctest::Approx(3.0 - 0.7 * s.xgrid.node(k)).epsilon(1e-9).scale(1.0));
}
