#pragma once

// Discretisation of the problem axes. Each control is snapped so that its
// diagonal stencil lands on nodes of its own probability grid.

#include <cstddef>
#include <variant>
#include <vector>

namespace qhedge {

class TimeGrid {
public:
    /// Uniform grid 0, h, 2h, ... with the last step shortened to land on T.
    static TimeGrid landing(double horizon, double h);
    /// `steps` equal steps of size T / steps.
    static TimeGrid uniform(double horizon, std::size_t steps);

    std::size_t steps() const noexcept { return nodes_.size() - 1; }
    double node(std::size_t j) const { return nodes_.at(j); }
    double step(std::size_t j) const { return nodes_.at(j + 1) - nodes_.at(j); }
    double horizon() const noexcept { return nodes_.back(); }
    double max_step() const;
    double min_step() const;
    const std::vector<double>& nodes() const noexcept { return nodes_; }

private:
    explicit TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {}
    std::vector<double> nodes_;
};

inline TimeGrid build_time_grid(double horizon, double h) { return TimeGrid::landing(horizon, h); }

/// Log-price nodes B1 + k*delta, k = 0..size-1. The two end nodes carry
/// Dirichlet data; all others are interior.
class XGrid {
public:
    XGrid(double lower, double upper, double delta);

    /// Grid on [lower', upper] with lower' <= lower chosen so that `anchor`
    /// is a node.
    static XGrid anchored(double lower, double upper, double delta, double anchor);

    double lower() const noexcept { return lower_; }
    double upper() const noexcept { return upper_; }
    double delta() const noexcept { return delta_; }
    std::size_t size() const noexcept { return size_; }
    double node(std::size_t k) const noexcept { return lower_ + static_cast<double>(k) * delta_; }
    bool is_boundary(std::size_t k) const noexcept { return k == 0 || k + 1 == size_; }
    /// Index of the node nearest to x, or size() if x is not within 1e-9*delta of a node.
    std::size_t find_node(double x) const;

private:
    double lower_;
    double upper_;
    double delta_;
    std::size_t size_;
};

inline XGrid build_xgrid(double lower, double upper, double delta) { return {lower, upper, delta}; }

/// A raw control a together with its snapped value and probability grid
/// {l / intervals : l = 0..intervals}.
struct AdjustedControl {
    double raw = 0.0;
    double snapped = 0.0;
    int intervals = 1;

    int sign() const noexcept { return snapped > 0.0 ? 1 : -1; }
    std::size_t p_nodes() const noexcept { return static_cast<std::size_t>(intervals) + 1; }
    double p_node(std::size_t l) const noexcept { return static_cast<double>(l) / intervals; }
};

/// Smallest j >= 1 with j*|a|*delta >= sigma, and a snapped to
/// sign(a)*sigma/(delta*j). Rejects a == 0.
AdjustedControl adjust_control(double a, double delta, double sigma);

struct ExplicitControls {
    std::vector<double> raw;
};
struct PaperControls {};
struct LinearCaseControls {
    int n = 0;
};
using ControlProvenance = std::variant<ExplicitControls, PaperControls, LinearCaseControls>;

struct ControlSet {
    std::vector<AdjustedControl> controls;
    ControlProvenance provenance;

    std::size_t size() const noexcept { return controls.size(); }
    double max_abs_snapped() const;
    double min_abs_snapped() const;
    std::size_t total_p_nodes() const;
};

/// Snaps every raw value and merges controls whose snapped values coincide,
/// keeping the first occurrence.
ControlSet build_control_set(const std::vector<double>& raw, double delta, double sigma,
                             ControlProvenance provenance = ExplicitControls{});

/// Raw values of the 22-control set {-2,-1.5,...,2} u {-3,-3+1/3,...,3} minus 0.
std::vector<double> paper_control_values();
ControlSet build_paper_control_set(double delta, double sigma);

struct LinearCaseSetup {
    double delta = 0.0;
    ControlSet controls;
};

/// Control ladder a_i = sigma / (m_i delta) for the linear driver, with
/// delta = 2 pi C sigma^2 / n^2 and consecutive controls at least 1/n apart.
LinearCaseSetup build_linear_case_controls(int n, double sigma, double C);

}  // namespace qhedge
