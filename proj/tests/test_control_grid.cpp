#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "qhedge/control_grid.hpp"

using namespace qhedge;

TEST_CASE("control snapping at delta = 0.1") {
    const AdjustedControl a = adjust_control(3.0, 0.1, 0.25);
    CHECK(a.intervals == 1);
    CHECK(a.snapped == 2.5);
    CHECK(a.p_nodes() == 2);

    const AdjustedControl b = adjust_control(1.0 / 3.0, 0.1, 0.25);
    CHECK(b.intervals == 8);
    CHECK(b.snapped == doctest::Approx(0.3125).epsilon(1e-15));
    CHECK(b.p_nodes() == 9);

    CHECK(adjust_control(-3.0, 0.1, 0.25).snapped == -2.5);
    CHECK_THROWS(adjust_control(0.0, 0.1, 0.25));
}

TEST_CASE("exact ratios do not round up") {
    // sigma / (|a| delta) = 15 exactly.
    CHECK(adjust_control(1.0 / 3.0, 0.05, 0.25).intervals == 15);
}

TEST_CASE("snapping invariants") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ua(0.05, 4.0), ud(0.001, 0.2);
    const double sigma = 0.25;
    for (int i = 0; i < 1000; ++i) {
        const double a = ua(rng) * (i % 2 ? -1.0 : 1.0);
        const double delta = ud(rng);
        const AdjustedControl c = adjust_control(a, delta, sigma);
        const double eps = std::numeric_limits<double>::epsilon();
        CHECK(std::abs(c.intervals * std::abs(c.snapped) * delta - sigma) <= 4 * eps * sigma);
        const double gap = std::abs(a) - std::abs(c.snapped);
        CHECK(gap >= -1e-15);
        CHECK(gap <= a * a * delta / sigma + 1e-15);
        const AdjustedControl n = adjust_control(-a, delta, sigma);
        CHECK(n.snapped == -c.snapped);
        CHECK(n.intervals == c.intervals);
    }
}

TEST_CASE("paper control set") {
    const std::vector<double> raw = paper_control_values();
    CHECK(raw.size() == 22);
    auto contains = [&](double v) {
        for (double r : raw)
            if (std::abs(r - v) < 1e-12) return true;
        return false;
    };
    CHECK(contains(2.0));
    CHECK(contains(-2.0));
    CHECK_FALSE(contains(0.0));

    const ControlSet set = build_paper_control_set(0.1, 0.25);
    CHECK(set.size() == 12);
    CHECK(set.max_abs_snapped() == 2.5);
    CHECK(set.min_abs_snapped() == doctest::Approx(0.3125).epsilon(1e-15));
}

TEST_CASE("control set merges coinciding snapped values") {
    const ControlSet set = build_control_set({3.0, 2.6, -3.0, 1.0}, 0.1, 0.25);
    CHECK(set.size() == 3);
    CHECK(set.controls[0].raw == 3.0);
}

TEST_CASE("linear-case ladder") {
    const double sigma = 0.25;
    for (int n : {3, 4, 5, 6}) {
        const LinearCaseSetup s = build_linear_case_controls(n, sigma, 1.0);
        CHECK(s.delta * n * n == doctest::Approx(2.0 * std::numbers::pi * sigma * sigma).epsilon(1e-14));
        const double a_max = n / (2.0 * std::numbers::pi * sigma);
        CHECK(s.controls.max_abs_snapped() == doctest::Approx(a_max).epsilon(1e-12));
        for (std::size_t i = 0; i < s.controls.size(); ++i) {
            CHECK(s.controls.controls[i].snapped > 0.0);
            CHECK(s.controls.controls[i].snapped <= a_max * (1 + 1e-12));
            if (i > 0)
                CHECK(s.controls.controls[i - 1].snapped - s.controls.controls[i].snapped >= 1.0 / n - 1e-12);
        }
    }
    CHECK(build_linear_case_controls(3, sigma, 1.0).controls.max_abs_snapped() == doctest::Approx(1.91).epsilon(0.01 / 1.91));
    CHECK(build_linear_case_controls(5, sigma, 1.0).controls.max_abs_snapped() == doctest::Approx(3.18).epsilon(0.01 / 3.18));
}

TEST_CASE("x-grid") {
    const XGrid g(std::log(10.0), std::log(45.0), 0.1);
    CHECK(g.size() == 16);
    CHECK(g.node(0) == std::log(10.0));
    CHECK(g.is_boundary(0));
    CHECK(g.is_boundary(15));
    CHECK_FALSE(g.is_boundary(7));
    CHECK(g.find_node(std::log(10.0) + 0.3) == 3);
    CHECK(g.find_node(std::log(10.0) + 0.35) == g.size());

    const XGrid a = XGrid::anchored(std::log(10.0), std::log(45.0), 0.07, std::log(30.0));
    CHECK(a.lower() <= std::log(10.0));
    CHECK(a.find_node(std::log(30.0)) < a.size());
}

TEST_CASE("time grids") {
    const TimeGrid g = TimeGrid::landing(1.0, 0.1);
    CHECK(g.steps() == 10);
    CHECK(g.node(10) == 1.0);
    CHECK(g.node(3) == doctest::Approx(0.3));

    const TimeGrid l = TimeGrid::landing(1.0, 0.3);
    REQUIRE(l.steps() == 4);
    CHECK(l.node(3) == doctest::Approx(0.9));
    CHECK(l.step(3) == doctest::Approx(0.1));

    const TimeGrid u = TimeGrid::uniform(1.0, 7);
    CHECK(u.steps() == 7);
    CHECK(u.horizon() == 1.0);
    CHECK(u.max_step() == doctest::Approx(u.min_step()));
}
