#include "qhedge/control_grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qhedge/model.hpp"

namespace qhedge {

namespace {

// Relative slack when testing j*|a|*delta >= sigma.
constexpr double kRatioSlack = 1e-12;

/// min{ j >= 1 : j * ratio >= 1 }, with ratio > 0.
int smallest_covering_integer(double ratio) {
    const double seed = std::ceil(1.0 / ratio);
    if (!(seed < static_cast<double>(std::numeric_limits<int>::max() / 2)))
        throw InvalidArgument("control too small for the space step: p-grid would be unbounded");
    int j = std::max(1, static_cast<int>(seed));
    while (j > 1 && (j - 1) * ratio >= 1.0 - kRatioSlack) --j;
    while (j * ratio < 1.0 - kRatioSlack) ++j;
    return j;
}

}  // namespace

TimeGrid TimeGrid::landing(double horizon, double h) {
    if (!(horizon > 0.0) || !(h > 0.0) || h > horizon * (1.0 + 1e-12))
        throw InvalidArgument("time grid requires 0 < h <= T");
    const double ratio = horizon / h;
    const double rounded = std::round(ratio);
    const auto steps = static_cast<std::size_t>(std::abs(ratio - rounded) <= 1e-9 * ratio ? rounded : std::ceil(ratio));
    std::vector<double> nodes(steps + 1);
    for (std::size_t j = 0; j < steps; ++j) nodes[j] = static_cast<double>(j) * h;
    nodes[steps] = horizon;
    return TimeGrid(std::move(nodes));
}

TimeGrid TimeGrid::uniform(double horizon, std::size_t steps) {
    if (!(horizon > 0.0) || steps == 0) throw InvalidArgument("time grid requires T > 0 and at least one step");
    std::vector<double> nodes(steps + 1);
    for (std::size_t j = 0; j < steps; ++j) nodes[j] = horizon * static_cast<double>(j) / static_cast<double>(steps);
    nodes[steps] = horizon;
    return TimeGrid(std::move(nodes));
}

double TimeGrid::max_step() const {
    double m = 0.0;
    for (std::size_t j = 0; j < steps(); ++j) m = std::max(m, step(j));
    return m;
}

double TimeGrid::min_step() const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < steps(); ++j) m = std::min(m, step(j));
    return m;
}

XGrid::XGrid(double lower, double upper, double delta) : lower_(lower), upper_(upper), delta_(delta), size_(0) {
    if (!std::isfinite(lower) || !std::isfinite(upper) || !(lower < upper))
        throw InvalidArgument("x-grid requires B1 < B2");
    if (!(delta > 0.0)) throw InvalidArgument("x-grid requires delta > 0");
    const double cells = (upper - lower) / delta;
    size_ = static_cast<std::size_t>(std::floor(cells * (1.0 + 1e-12))) + 1;
    if (size_ < 3) throw InvalidArgument("x-grid needs at least 3 nodes");
}

XGrid XGrid::anchored(double lower, double upper, double delta, double anchor) {
    if (!(anchor >= lower && anchor <= upper)) throw InvalidArgument("x-grid anchor outside [B1, B2]");
    const double cells = std::ceil((anchor - lower) / delta * (1.0 - 1e-12));
    return XGrid(anchor - cells * delta, upper, delta);
}

std::size_t XGrid::find_node(double x) const {
    const double pos = (x - lower_) / delta_;
    const double k = std::round(pos);
    if (k < 0.0 || k >= static_cast<double>(size_) || std::abs(pos - k) > 1e-9) return size_;
    return static_cast<std::size_t>(k);
}

AdjustedControl adjust_control(double a, double delta, double sigma) {
    if (a == 0.0 || !std::isfinite(a)) throw InvalidArgument("control must be finite and non-zero");
    if (!(delta > 0.0) || !(sigma > 0.0)) throw InvalidArgument("adjust_control requires delta > 0 and sigma > 0");
    AdjustedControl c;
    c.raw = a;
    c.intervals = smallest_covering_integer(std::abs(a) * delta / sigma);
    c.snapped = std::copysign(sigma / (delta * c.intervals), a);
    return c;
}

double ControlSet::max_abs_snapped() const {
    double m = 0.0;
    for (const auto& c : controls) m = std::max(m, std::abs(c.snapped));
    return m;
}

double ControlSet::min_abs_snapped() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& c : controls) m = std::min(m, std::abs(c.snapped));
    return m;
}

std::size_t ControlSet::total_p_nodes() const {
    std::size_t n = 0;
    for (const auto& c : controls) n += c.p_nodes();
    return n;
}

ControlSet build_control_set(const std::vector<double>& raw, double delta, double sigma, ControlProvenance provenance) {
    if (raw.empty()) throw InvalidArgument("control set must be non-empty");
    ControlSet set;
    set.provenance = std::move(provenance);
    for (double a : raw) {
        const AdjustedControl c = adjust_control(a, delta, sigma);
        const bool duplicate = std::any_of(set.controls.begin(), set.controls.end(), [&](const AdjustedControl& e) {
            return e.intervals == c.intervals && e.sign() == c.sign();
        });
        if (!duplicate) set.controls.push_back(c);
    }
    return set;
}

std::vector<double> paper_control_values() {
    std::vector<double> values;
    for (int k = -4; k <= 4; ++k)
        if (k != 0) values.push_back(k / 2.0);
    for (int k = -9; k <= 9; ++k) {
        if (k == 0) continue;
        const double v = k / 3.0;
        if (std::find(values.begin(), values.end(), v) == values.end()) values.push_back(v);
    }
    std::sort(values.begin(), values.end());
    return values;
}

ControlSet build_paper_control_set(double delta, double sigma) {
    return build_control_set(paper_control_values(), delta, sigma, PaperControls{});
}

LinearCaseSetup build_linear_case_controls(int n, double sigma, double C) {
    if (n < 2) throw InvalidArgument("linear-case construction requires n >= 2");
    if (!(sigma > 0.0) || !(C > 0.0)) throw InvalidArgument("linear-case construction requires sigma > 0 and C > 0");
    constexpr double two_pi = 6.283185307179586476925286766559;
    const double nn = static_cast<double>(n);
    LinearCaseSetup setup;
    setup.delta = two_pi * C * sigma * sigma / (nn * nn);
    const double unit = sigma / setup.delta;  // control value for m = 1
    const double min_gap = 1.0 / nn;

    std::vector<double> raw;
    int m = n;
    double a = unit / m;
    raw.push_back(a);
    // The first control that drops below 1/n closes the ladder and is kept.
    while (a >= min_gap) {
        const double target = a - min_gap;
        if (!(target > 0.0)) break;
        int next = std::max(m, static_cast<int>(std::ceil(unit / target)));
        while (next > m && a - unit / (next - 1) >= min_gap * (1.0 - kRatioSlack)) --next;
        while (a - unit / next < min_gap * (1.0 - kRatioSlack)) ++next;
        m = next;
        a = unit / m;
        raw.push_back(a);
    }
    setup.controls = build_control_set(raw, setup.delta, sigma, LinearCaseControls{n});
    return setup;
}

}  // namespace qhedge
