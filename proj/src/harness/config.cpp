#include "qhedge/harness/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "qhedge/reference.hpp"

namespace qhedge::harness {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> items;
    s = trim(s);
    if (!s.empty() && s.front() == '[' && s.back() == ']') s = trim(s.substr(1, s.size() - 2));
    if (s.empty()) return items;
    std::size_t start = 0;
    int depth = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i < s.size() && s[i] == '(') ++depth;
        if (i < s.size() && s[i] == ')') --depth;
        if (i == s.size() || (s[i] == ',' && depth == 0)) {
            items.push_back(trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    return items;
}

std::vector<double> parse_reals(std::string_view s) {
    std::vector<double> out;
    for (auto item : split_list(s)) out.push_back(parse_real(item));
    return out;
}

bool parse_bool(std::string_view s) {
    const std::string v = lower(trim(s));
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("expected a boolean, got '" + std::string(s) + "'");
}

long long parse_integer(std::string_view s) {
    const double v = parse_real(s);
    if (v != std::floor(v) || std::abs(v) > 9e15) throw ConfigError("expected an integer, got '" + std::string(s) + "'");
    return static_cast<long long>(v);
}

template <class Enum>
Enum parse_choice(std::string_view s, std::initializer_list<std::pair<const char*, Enum>> choices) {
    const std::string v = lower(trim(s));
    for (const auto& [name, value] : choices)
        if (v == name) return value;
    std::string allowed;
    for (const auto& c : choices) allowed += std::string(allowed.empty() ? "" : "|") + c.first;
    throw ConfigError("expected one of " + allowed + ", got '" + std::string(s) + "'");
}

using Setter = std::function<void(RunConfig&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
    static const std::map<std::string, Setter, std::less<>> table = {
        {"model.mu", [](RunConfig& c, std::string_view v) { c.mu = parse_real(v); }},
        {"model.sigma", [](RunConfig& c, std::string_view v) { c.sigma = parse_real(v); }},
        {"model.T", [](RunConfig& c, std::string_view v) { c.horizon = parse_real(v); }},
        {"model.driver",
         [](RunConfig& c, std::string_view v) {
             c.driver = parse_choice<DriverKind>(v, {{"linear", DriverKind::Linear},
                                                     {"borrow_spread", DriverKind::BorrowSpread},
                                                     {"two_rates", DriverKind::TwoRates}});
         }},
        {"model.R", [](RunConfig& c, std::string_view v) { c.borrow_rate = parse_real(v); }},
        {"model.r", [](RunConfig& c, std::string_view v) { c.lend_rate = parse_real(v); }},
        {"payoff.kind",
         [](RunConfig& c, std::string_view v) {
             c.payoff_kind = parse_choice<Payoff::Kind>(v, {{"put", Payoff::Kind::Put}, {"custom", Payoff::Kind::Custom}});
         }},
        {"payoff.K", [](RunConfig& c, std::string_view v) { c.strike = parse_real(v); }},
        {"payoff.table",
         [](RunConfig& c, std::string_view v) {
             c.payoff_table.clear();
             for (auto item : split_list(v)) {
                 const auto colon = item.find(':');
                 if (colon == std::string_view::npos) throw ConfigError("payoff.table entries must be x:g");
                 c.payoff_table.emplace_back(parse_real(item.substr(0, colon)), parse_real(item.substr(colon + 1)));
             }
         }},
        {"payoff.lipschitz", [](RunConfig& c, std::string_view v) { c.payoff_lipschitz = parse_real(v); }},
        {"domain.B1", [](RunConfig& c, std::string_view v) { c.B1 = parse_real(v); }},
        {"domain.B2", [](RunConfig& c, std::string_view v) { c.B2 = parse_real(v); }},
        {"domain.anchor",
         [](RunConfig& c, std::string_view v) {
             if (lower(trim(v)) == "none")
                 c.anchor.reset();
             else
                 c.anchor = parse_real(v);
         }},
        {"scheme.theta", [](RunConfig& c, std::string_view v) { c.scheme.theta = parse_real(v); }},
        {"scheme.M", [](RunConfig& c, std::string_view v) { c.scheme.M = parse_real(v); }},
        {"scheme.picard_tol", [](RunConfig& c, std::string_view v) { c.scheme.picard_tol = parse_real(v); }},
        {"scheme.picard_max_iters",
         [](RunConfig& c, std::string_view v) { c.scheme.picard_max_iters = static_cast<int>(parse_integer(v)); }},
        {"scheme.lipschitz_L",
         [](RunConfig& c, std::string_view v) {
             if (lower(trim(v)) == "auto")
                 c.scheme.lipschitz_L.reset();
             else
                 c.scheme.lipschitz_L = parse_real(v);
         }},
        {"scheme.cfl_unchecked", [](RunConfig& c, std::string_view v) { c.cfl_unchecked = parse_bool(v); }},
        {"scheme.x_boundary",
         [](RunConfig& c, std::string_view v) {
             c.x_boundary = parse_choice<XBoundaryKind>(
                 v, {{"reference", XBoundaryKind::Reference}, {"frozen", XBoundaryKind::Frozen}});
         }},
        {"disc.delta", [](RunConfig& c, std::string_view v) { c.delta = parse_real(v); }},
        {"disc.h",
         [](RunConfig& c, std::string_view v) {
             if (lower(trim(v)) == "auto")
                 c.h.reset();
             else
                 c.h = parse_real(v);
         }},
        {"disc.time_rule",
         [](RunConfig& c, std::string_view v) {
             c.time_rule = parse_choice<TimeRule>(v, {{"uniform", TimeRule::Uniform}, {"landing", TimeRule::Landing}});
         }},
        {"controls.kind",
         [](RunConfig& c, std::string_view v) {
             c.controls = parse_choice<ControlsKind>(v, {{"paper22", ControlsKind::Paper22},
                                                         {"explicit", ControlsKind::Explicit},
                                                         {"linear_case", ControlsKind::LinearCase}});
         }},
        {"controls.values", [](RunConfig& c, std::string_view v) { c.control_values = parse_reals(v); }},
        {"controls.n", [](RunConfig& c, std::string_view v) { c.linear_n = static_cast<int>(parse_integer(v)); }},
        {"controls.C", [](RunConfig& c, std::string_view v) { c.linear_C = parse_real(v); }},
        {"output.p_samples", [](RunConfig& c, std::string_view v) { c.p_samples = parse_reals(v); }},
        {"output.x_points", [](RunConfig& c, std::string_view v) { c.x_points = parse_reals(v); }},
        {"output.times",
         [](RunConfig& c, std::string_view v) {
             c.all_times = parse_choice<bool>(v, {{"all", true}, {"t0", false}, {"0", false}});
         }},
        {"study.deltas", [](RunConfig& c, std::string_view v) { c.study_deltas = parse_reals(v); }},
        {"study.hs", [](RunConfig& c, std::string_view v) { c.study_hs = parse_reals(v); }},
        {"study.fixed_h", [](RunConfig& c, std::string_view v) { c.study_fixed_h = parse_real(v); }},
        {"study.fixed_delta", [](RunConfig& c, std::string_view v) { c.study_fixed_delta = parse_real(v); }},
        {"study.ns",
         [](RunConfig& c, std::string_view v) {
             c.study_ns.clear();
             for (auto item : split_list(v)) c.study_ns.push_back(static_cast<int>(parse_integer(item)));
         }},
        {"study.query_t", [](RunConfig& c, std::string_view v) { c.query_t = parse_real(v); }},
        {"study.query_x", [](RunConfig& c, std::string_view v) { c.query_x = parse_real(v); }},
        {"study.query_p", [](RunConfig& c, std::string_view v) { c.query_p = parse_real(v); }},
        {"study.compare_x", [](RunConfig& c, std::string_view v) { c.compare_x = parse_reals(v); }},
        {"study.mc_paths",
         [](RunConfig& c, std::string_view v) { c.mc_paths = static_cast<std::uint64_t>(parse_integer(v)); }},
        {"run.threads", [](RunConfig& c, std::string_view v) { c.threads = static_cast<unsigned>(parse_integer(v)); }},
        {"run.seed", [](RunConfig& c, std::string_view v) { c.seed = static_cast<std::uint64_t>(parse_integer(v)); }},
    };
    return table;
}

void flatten_json(const nlohmann::json& node, const std::string& prefix, RunConfig& config) {
    if (node.is_object()) {
        for (const auto& [key, value] : node.items())
            flatten_json(value, prefix.empty() ? key : prefix + "." + key, config);
        return;
    }
    std::string text;
    if (node.is_string()) {
        text = node.get<std::string>();
    } else if (node.is_array()) {
        for (const auto& item : node) {
            if (!text.empty()) text += ",";
            if (item.is_array() && item.size() == 2)
                text += item[0].dump() + ":" + item[1].dump();
            else
                text += item.is_string() ? item.get<std::string>() : item.dump();
        }
    } else {
        text = node.dump();
    }
    apply_setting(config, prefix, text);
}

}  // namespace

double parse_real(std::string_view text) {
    std::string_view s = trim(text);
    const std::string low = lower(s);
    for (const char* fn : {"log(", "ln("}) {
        const std::string_view prefix(fn);
        if (low.rfind(prefix, 0) == 0 && !s.empty() && s.back() == ')') {
            const double arg = parse_real(s.substr(prefix.size(), s.size() - prefix.size() - 1));
            if (!(arg > 0.0)) throw ConfigError("log argument must be positive in '" + std::string(text) + "'");
            return std::log(arg);
        }
    }
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double value = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty())
        throw ConfigError("expected a number, got '" + std::string(text) + "'");
    return value;
}

RunConfig::RunConfig() {
    for (int i = 0; i <= 20; ++i) p_samples.push_back(i / 20.0);
}

MarketModel RunConfig::model() const {
    switch (driver) {
        case DriverKind::Linear: return {mu, sigma, horizon, DriverSpec::linear()};
        case DriverKind::BorrowSpread: return {mu, sigma, horizon, DriverSpec::borrow_spread(borrow_rate)};
        case DriverKind::TwoRates: return {mu, sigma, horizon, DriverSpec::two_rates(lend_rate, borrow_rate)};
    }
    return {mu, sigma, horizon};
}

Payoff RunConfig::payoff() const {
    if (payoff_kind == Payoff::Kind::Put) return Payoff::put(strike);
    return Payoff::custom(payoff_table, payoff_lipschitz);
}

XBoundaryFn RunConfig::x_boundary_fn() const {
    if (x_boundary == XBoundaryKind::Reference) {
        if (payoff_kind != Payoff::Kind::Put)
            throw ConfigError("scheme.x_boundary = reference needs a put payoff; use frozen");
        return reference_x_boundary(model(), strike);
    }
    return frozen_x_boundary(payoff());
}

double RunConfig::auto_step_ratio() const {
    const double L = scheme.lipschitz(model());
    double C = 1.0;
    if (L > 0.0) C = std::min(C, 2.0 * scheme.theta / L);
    const double gap = std::abs(sigma * sigma - mu);
    if (gap > 0.0) C = std::min(C, 1.0 / gap);
    return C;
}

double RunConfig::step_for(double space_step) const {
    if (h) return *h;
    if (controls == ControlsKind::LinearCase) return linear_C * space_step;
    return auto_step_ratio() * space_step;
}

TimeGrid RunConfig::time_grid(double space_step, std::optional<double> step) const {
    const double hh = step ? *step : step_for(space_step);
    if (time_rule == TimeRule::Landing) return TimeGrid::landing(horizon, hh);
    const double ratio = horizon / hh;
    const double rounded = std::round(ratio);
    const auto steps = static_cast<std::size_t>(std::abs(ratio - rounded) <= 1e-9 * ratio ? rounded : std::ceil(ratio));
    return TimeGrid::uniform(horizon, std::max<std::size_t>(steps, 1));
}

XGrid RunConfig::xgrid(double space_step) const {
    if (anchor) return XGrid::anchored(B1, B2, space_step, *anchor);
    return {B1, B2, space_step};
}

double RunConfig::effective_delta() const {
    if (controls == ControlsKind::LinearCase) return build_linear_case_controls(linear_n, sigma, linear_C).delta;
    return delta;
}

ControlSet RunConfig::control_set(double space_step) const {
    switch (controls) {
        case ControlsKind::Paper22: return build_paper_control_set(space_step, sigma);
        case ControlsKind::Explicit:
            if (control_values.empty()) throw ConfigError("controls.kind = explicit needs controls.values");
            return build_control_set(control_values, space_step, sigma, ExplicitControls{control_values});
        case ControlsKind::LinearCase: return build_linear_case_controls(linear_n, sigma, linear_C).controls;
    }
    throw ConfigError("unknown control set");
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
    const auto& table = setters();
    const auto it = table.find(trim(key));
    if (it == table.end()) throw ConfigError("unknown configuration key '" + std::string(trim(key)) + "'");
    try {
        it->second(config, value);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(trim(key)) + ": " + e.what());
    }
}

void apply_override(RunConfig& config, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("override must look like block.key=value");
    apply_setting(config, assignment.substr(0, eq), assignment.substr(eq + 1));
}

RunConfig parse_config_text(std::string_view text) {
    RunConfig config;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        try {
            apply_override(config, line);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return config;
}

RunConfig parse_config_json(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON configuration: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("JSON configuration must be an object");
    RunConfig config;
    flatten_json(doc, "", config);
    return config;
}

RunConfig load_config(const std::string& path, bool json) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const bool is_json = json || (path.size() >= 5 && path.substr(path.size() - 5) == ".json");
    return is_json ? parse_config_json(buffer.str()) : parse_config_text(buffer.str());
}

nlohmann::json config_to_json(const RunConfig& c) {
    using nlohmann::json;
    json j;
    j["model"] = {{"mu", c.mu}, {"sigma", c.sigma}, {"T", c.horizon}, {"driver", to_string(c.driver)},
                  {"R", c.borrow_rate}, {"r", c.lend_rate}};
    j["payoff"] = {{"kind", c.payoff_kind == Payoff::Kind::Put ? "put" : "custom"}, {"K", c.strike}};
    if (c.payoff_kind == Payoff::Kind::Custom) {
        j["payoff"]["table"] = c.payoff_table;
        j["payoff"]["lipschitz"] = c.payoff_lipschitz;
    }
    j["domain"] = {{"B1", c.B1}, {"B2", c.B2}};
    if (c.anchor) j["domain"]["anchor"] = *c.anchor;
    j["scheme"] = {{"theta", c.scheme.theta},
                   {"M", c.scheme.M},
                   {"picard_tol", c.scheme.picard_tol},
                   {"picard_max_iters", c.scheme.picard_max_iters},
                   {"cfl_unchecked", c.cfl_unchecked},
                   {"x_boundary", c.x_boundary == XBoundaryKind::Reference ? "reference" : "frozen"}};
    if (c.scheme.lipschitz_L) j["scheme"]["lipschitz_L"] = *c.scheme.lipschitz_L;
    j["disc"] = {{"delta", c.delta}, {"time_rule", c.time_rule == TimeRule::Uniform ? "uniform" : "landing"}};
    j["disc"]["h"] = c.h ? json(*c.h) : json("auto");
    const char* kind = c.controls == ControlsKind::Paper22    ? "paper22"
                       : c.controls == ControlsKind::Explicit ? "explicit"
                                                              : "linear_case";
    j["controls"] = {{"kind", kind}, {"n", c.linear_n}, {"C", c.linear_C}};
    if (c.controls == ControlsKind::Explicit) j["controls"]["values"] = c.control_values;
    j["output"] = {{"p_samples", c.p_samples}, {"x_points", c.x_points}, {"times", c.all_times ? "all" : "t0"}};
    j["study"] = {{"deltas", c.study_deltas}, {"hs", c.study_hs},       {"fixed_h", c.study_fixed_h},
                  {"fixed_delta", c.study_fixed_delta}, {"ns", c.study_ns}, {"query_t", c.query_t},
                  {"query_x", c.query_x}, {"query_p", c.query_p},     {"compare_x", c.compare_x},
                  {"mc_paths", c.mc_paths}};
    j["run"] = {{"seed", c.seed}};
    return j;
}

}  // namespace qhedge::harness
