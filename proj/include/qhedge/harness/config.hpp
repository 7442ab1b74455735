#pragma once

// Run configuration for the CLI and the experiment pipelines.
//
// The primary format is line-oriented `block.key = value` text; `#` starts a
// comment. Values are numbers, `log(<number>)`, booleans, words, or
// comma-separated lists of those. A JSON document with one object per block
// is accepted as an alternative and flattened onto the same keys.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qhedge/control_grid.hpp"
#include "qhedge/fd_core.hpp"
#include "qhedge/model.hpp"

namespace qhedge::harness {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ControlsKind { Paper22, Explicit, LinearCase };
enum class TimeRule { Uniform, Landing };
enum class XBoundaryKind { Reference, Frozen };

struct RunConfig {
    // model
    double mu = 0.01875;
    double sigma = 0.25;
    double horizon = 1.0;
    DriverKind driver = DriverKind::Linear;
    double borrow_rate = 0.05;
    double lend_rate = 0.0;

    // payoff
    Payoff::Kind payoff_kind = Payoff::Kind::Put;
    double strike = 30.0;
    std::vector<std::pair<double, double>> payoff_table;
    double payoff_lipschitz = 0.0;

    // domain
    double B1 = 2.302585092994046;  // log(10)
    double B2 = 3.8066624897703196; // log(45)
    std::optional<double> anchor;

    // scheme
    SchemeParams scheme;
    bool cfl_unchecked = false;
    XBoundaryKind x_boundary = XBoundaryKind::Reference;

    // discretisation; no h means h = C delta with the automatic C
    double delta = 0.05;
    std::optional<double> h;
    TimeRule time_rule = TimeRule::Uniform;

    // controls
    ControlsKind controls = ControlsKind::Paper22;
    std::vector<double> control_values;
    int linear_n = 3;
    double linear_C = 1.0;

    // output
    std::vector<double> p_samples;
    std::vector<double> x_points;  // empty: every x-grid node
    bool all_times = false;        // surface rows for every time node, else t = 0 only

    // studies
    std::vector<double> study_deltas{0.1, 0.05, 0.01, 0.005};
    std::vector<double> study_hs{0.025, 0.005, 0.001, 1e-4};
    double study_fixed_h = 0.1;
    double study_fixed_delta = 0.05;
    std::vector<int> study_ns{3, 4, 5};
    double query_t = 0.0;
    double query_x = 3.4011973816621555;  // log(30)
    double query_p = 0.8;
    std::vector<double> compare_x{3.4011973816621555, 3.6109179126442243};  // log(30), log(37)
    std::uint64_t mc_paths = 1000000;

    // run
    unsigned threads = 1;
    std::uint64_t seed = 20240607;

    RunConfig();

    MarketModel model() const;
    Payoff payoff() const;
    XBoundaryFn x_boundary_fn() const;

    /// C = min(1, 2 theta / L, 1 / |sigma^2 - mu|).
    double auto_step_ratio() const;
    double step_for(double space_step) const;
    TimeGrid time_grid(double space_step, std::optional<double> step = std::nullopt) const;
    XGrid xgrid(double space_step) const;
    ControlSet control_set(double space_step) const;
    /// The space step actually used: the linear-case construction fixes it.
    double effective_delta() const;
};

/// Sets one `block.key` entry. Throws ConfigError on unknown keys or bad values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Applies a `block.key=value` override string.
void apply_override(RunConfig& config, std::string_view assignment);

RunConfig parse_config_text(std::string_view text);
RunConfig parse_config_json(std::string_view text);
/// Reads a file; `.json` files (or json == true) use the JSON format.
RunConfig load_config(const std::string& path, bool json = false);

/// Parses a scalar: a number or log(<number>) / ln(<number>).
double parse_real(std::string_view text);

nlohmann::json config_to_json(const RunConfig& config);

}  // namespace qhedge::harness
