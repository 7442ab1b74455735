#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "qhedge/pcpt_solver.hpp"
#include "qhedge/reference.hpp"

using namespace qhedge;

namespace {

const double kMu = 0.01875;
const double kSigma = 0.25;
const double kB1 = std::log(10.0);
const double kB2 = std::log(45.0);

MarketModel linear_model() { return {kMu, kSigma, 1.0}; }
MarketModel spread_model() { return {kMu, kSigma, 1.0, DriverSpec::borrow_spread(0.05)}; }

ControlField constant_field(double raw, double value) {
    return ControlField(adjust_control(raw, 0.1, kSigma), 3, value);
}

}  // namespace

TEST_CASE("interpolation in p") {
    ControlField f(adjust_control(0.5, 0.1, kSigma), 3);  // p-grid 0, 0.2, ..., 1
    for (std::size_t l = 0; l < f.np(); ++l) {
        f(1, l) = 2.0 - 3.0 * f.control().p_node(l);
        f(2, l) = static_cast<double>(l * l);
    }
    CHECK(interpolate_p(f, 2, 0.4) == 4.0);
    CHECK(interpolate_p(f, 2, 0.5) == doctest::Approx((4.0 + 9.0) / 2));
    for (double p : {0.0, 0.13, 0.5, 0.77, 1.0}) CHECK(interpolate_p(f, 1, p) == doctest::Approx(2.0 - 3.0 * p));
}

TEST_CASE("min reduction") {
    SUBCASE("singleton") {
        const std::vector<ControlField> fs{constant_field(1.0, 4.0)};
        CHECK(min_reduce(fs, 1, 0.3).value == 4.0);
    }
    SUBCASE("smaller field wins") {
        const std::vector<ControlField> fs{constant_field(1.0, 2.0), constant_field(2.0, 1.0)};
        const MinResult m = min_reduce(fs, 1, 0.3);
        CHECK(m.value == 1.0);
        CHECK(m.index == 1);
    }
    SUBCASE("ties go to the smaller magnitude, then the positive control") {
        const std::vector<ControlField> fs{constant_field(-2.0, 1.0), constant_field(-1.0, 1.0),
                                           constant_field(1.0, 1.0), constant_field(2.0, 1.0)};
        CHECK(fs[min_reduce(fs, 1, 0.3).index].control().raw == 1.0);
        const std::vector<ControlField> rev(fs.rbegin(), fs.rend());
        CHECK(rev[min_reduce(rev, 1, 0.3).index].control().raw == 1.0);
    }
}

TEST_CASE("super-replication recursion") {
    const XGrid xg(kB1, kB2, 0.05);
    const TimeGrid tg = TimeGrid::uniform(1.0, 20);
    const SchemeParams params;

    SUBCASE("zero claim") {
        const Payoff zero = Payoff::custom({{0.0, 0.0}}, 0.0);
        const SuperRepCurve c = solve_superreplication(linear_model(), zero, tg, xg, params, frozen_x_boundary(zero));
        for (std::size_t j = 0; j <= tg.steps(); ++j)
            for (std::size_t k = 0; k < xg.size(); ++k) CHECK(c.value(j, k) == 0.0);
    }
    SUBCASE("terminal row and first step") {
        const Payoff put = Payoff::put(30.0);
        const MarketModel m = spread_model();
        const XBoundaryFn xb = reference_x_boundary(m, 30.0);
        const SuperRepCurve c = solve_superreplication(m, put, tg, xg, params, xb);
        for (std::size_t k = 0; k < xg.size(); ++k) CHECK(c.value(tg.steps(), k) == put(xg.node(k)));

        const std::size_t j = tg.steps() - 1;
        const StepContext ctx{m, params, xg, tg.node(j), tg.step(j), Upwind::Forward, false};
        const BoundaryRow row = picard_step_boundary(ctx, c.row(j + 1), xb(tg.node(j), xg.node(0), 1.0),
                                                     xb(tg.node(j), xg.node(xg.size() - 1), 1.0));
        for (std::size_t k = 0; k < xg.size(); ++k) CHECK(c.value(j, k) == row[k]);
    }
}

TEST_CASE("one step with one control reproduces the interior solve") {
    const MarketModel m = spread_model();
    const Payoff put = Payoff::put(30.0);
    const XGrid xg(kB1, kB2, 0.1);
    const TimeGrid tg = TimeGrid::uniform(1.0, 1);
    SchemeParams params;
    params.M = 20.0;
    const ControlSet cs = build_control_set({1.0}, 0.1, kSigma);
    const XBoundaryFn xb = reference_x_boundary(m, 30.0);
    const ValueSurface s = pcpt_backward_solve(m, put, tg, xg, cs, params, xb, {.cfl_unchecked = true});

    const StepContext ctx{m, params, xg, 0.0, 1.0, Upwind::Forward, true};
    const std::size_t nx = xg.size();
    const AdjustedControl& a = cs.controls[0];
    std::vector<double> zero(nx, 0.0), xl(a.p_nodes()), xu(a.p_nodes());
    for (std::size_t l = 0; l < a.p_nodes(); ++l) {
        xl[l] = xb(0.0, xg.node(0), a.p_node(l));
        xu[l] = xb(0.0, xg.node(nx - 1), a.p_node(l));
    }
    const BoundaryRow lower = picard_step_boundary(ctx, zero, xb(0.0, xg.node(0), 0.0), xb(0.0, xg.node(nx - 1), 0.0));
    const SurfaceFn prev = [&](std::size_t k, double p) { return put(xg.node(k)) * p; };
    const ControlField f = picard_step_interior(ctx, a, prev, lower, s.superrep().row(0), xl, xu);
    for (std::size_t k = 0; k < nx; ++k)
        for (std::size_t l = 0; l < a.p_nodes(); ++l) CHECK(s.value(0, k, a.p_node(l)) == f(k, l));
}

TEST_CASE("surface structure on the paper setting") {
    const MarketModel m = spread_model();
    const Payoff put = Payoff::put(30.0);
    const double delta = 0.05;
    const XGrid xg(kB1, kB2, delta);
    const TimeGrid tg = TimeGrid::uniform(1.0, 20);
    const SchemeParams params;
    const ControlSet cs = build_paper_control_set(delta, kSigma);
    const ValueSurface s = pcpt_backward_solve(m, put, tg, xg, cs, params, reference_x_boundary(m, 30.0));
    const double tol = static_cast<double>(tg.steps()) * params.picard_tol;

    for (std::size_t k = 0; k < xg.size(); ++k)
        for (double p : {0.0, 0.37, 1.0}) CHECK(s.value(tg.steps(), k, p) == put(xg.node(k)) * p);

    for (std::size_t j = 0; j < tg.steps(); ++j) {
        REQUIRE(s.has_time(j));
        for (std::size_t k = 0; k < xg.size(); ++k) {
            CHECK(std::abs(s.value(j, k, 0.0)) <= tol);
            CHECK(std::abs(s.value(j, k, 1.0) - s.superrep().value(j, k)) <= tol);
            for (double p = 0.0; p <= 1.0; p += 0.05) {
                const double v = s.value(j, k, p);
                CHECK(v >= -tol);
                CHECK(v <= put.bound() + tol);
            }
        }
    }
}

TEST_CASE("permuting the controls changes neither values nor argmins") {
    const MarketModel m = spread_model();
    const Payoff put = Payoff::put(30.0);
    const XGrid xg(kB1, kB2, 0.1);
    const TimeGrid tg = TimeGrid::uniform(1.0, 10);
    const SchemeParams params;
    std::vector<double> raw = paper_control_values();
    const ControlSet a = build_control_set(raw, 0.1, kSigma);
    std::mt19937_64 rng(4);
    std::shuffle(raw.begin(), raw.end(), rng);
    const ControlSet b = build_control_set(raw, 0.1, kSigma);
    const XBoundaryFn xb = reference_x_boundary(m, 30.0);
    const ValueSurface sa = pcpt_backward_solve(m, put, tg, xg, a, params, xb);
    const ValueSurface sb = pcpt_backward_solve(m, put, tg, xg, b, params, xb);
    for (std::size_t k = 0; k < xg.size(); ++k)
        for (double p = 0.0; p <= 1.0; p += 0.05) {
            const AdjustedControl *ca = nullptr, *cb = nullptr;
            CHECK(sa.value(0, k, p, &ca) == doctest::Approx(sb.value(0, k, p, &cb)).epsilon(1e-12).scale(1.0));
            CHECK(ca->snapped == cb->snapped);
        }
}

TEST_CASE("scheme monotonicity under ordered terminal data") {
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const MarketModel m = spread_model();
    const double delta = 0.1;
    const XGrid xg(2.5, 3.8, delta);
    const TimeGrid tg = TimeGrid::uniform(0.5, 5);
    const SchemeParams params;
    const ControlSet cs = build_control_set({-2.0, -0.5, 0.5, 1.0, 2.0}, delta, kSigma);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::pair<double, double>> s1, s2;
        for (int i = 0; i < 6; ++i) {
            const double x = 2.5 + 0.26 * i;
            const double g1 = 5.0 * u(rng);
            s1.emplace_back(x, g1);
            s2.emplace_back(x, g1 + 2.0 * u(rng));
        }
        const Payoff g1 = Payoff::custom(s1, 200.0), g2 = Payoff::custom(s2, 200.0);
        const ValueSurface v1 = pcpt_backward_solve(m, g1, tg, xg, cs, params, frozen_x_boundary(g1));
        const ValueSurface v2 = pcpt_backward_solve(m, g2, tg, xg, cs, params, frozen_x_boundary(g2));
        const double tol = 2.0 * tg.steps() * params.picard_tol;
        for (std::size_t k = 0; k < xg.size(); ++k)
            for (double p = 0.0; p <= 1.0; p += 0.1) CHECK(v1.value(0, k, p) <= v2.value(0, k, p) + tol);
    }
}

TEST_CASE("flat-zero region with the linear driver") {
    const MarketModel m = linear_model();
    const Payoff put = Payoff::put(30.0);
    const double delta = 0.05;
    const XGrid xg = XGrid::anchored(kB1, kB2, delta, std::log(30.0));
    const TimeGrid tg = TimeGrid::uniform(1.0, 20);
    const SchemeParams params;
    const ValueSurface s = pcpt_backward_solve(m, put, tg, xg, build_paper_control_set(delta, kSigma), params,
                                               reference_x_boundary(m, 30.0));
    const double tol = static_cast<double>(tg.steps()) * params.picard_tol;
    CHECK(std::abs(s.value_at(0, std::log(30.0), 0.05)) <= tol);
    CHECK(s.value_at(0, std::log(30.0), 0.95) > 0.1);
}

TEST_CASE("threads do not change the result") {
    const MarketModel m = spread_model();
    const Payoff put = Payoff::put(30.0);
    const XGrid xg(kB1, kB2, 0.1);
    const TimeGrid tg = TimeGrid::uniform(1.0, 10);
    const ControlSet cs = build_paper_control_set(0.1, kSigma);
    const XBoundaryFn xb = reference_x_boundary(m, 30.0);
    const ValueSurface a = pcpt_backward_solve(m, put, tg, xg, cs, {}, xb, {.threads = 1});
    const ValueSurface b = pcpt_backward_solve(m, put, tg, xg, cs, {}, xb, {.threads = 4});
    for (std::size_t k = 0; k < xg.size(); ++k)
        for (double p = 0.0; p <= 1.0; p += 0.1) CHECK(a.value(0, k, p) == b.value(0, k, p));
}

TEST_CASE("CFL violations surface as step faults") {
    const MarketModel m = spread_model();
    const XGrid xg(kB1, kB2, 0.005);
    const TimeGrid tg = TimeGrid::uniform(1.0, 10);
    const Payoff put = Payoff::put(30.0);
    CHECK_THROWS_AS(pcpt_backward_solve(m, put, tg, xg, build_paper_control_set(0.005, kSigma), {},
                                        reference_x_boundary(m, 30.0)),
                    StepFault);
}
