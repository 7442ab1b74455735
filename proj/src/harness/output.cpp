#include "qhedge/harness/output.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

namespace qhedge::harness {

std::string format_real(double value) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc()) return "nan";
    return std::string(buf, end);
}

void write_surface_csv(std::ostream& out, const ValueSurface& surface, std::span<const std::size_t> times,
                       std::span<const double> x_points, std::span<const double> p_samples) {
    out << "t,x,p,value,argmin_control\n";
    const XGrid& xg = surface.xgrid();
    std::vector<double> xs(x_points.begin(), x_points.end());
    if (xs.empty())
        for (std::size_t k = 0; k < xg.size(); ++k) xs.push_back(xg.node(k));
    for (std::size_t j : times) {
        const double t = surface.time_grid().node(j);
        for (double x : xs) {
            std::size_t k = xg.find_node(x);
            const bool on_grid = k < xg.size();
            if (!on_grid) {
                const double pos = std::clamp((x - xg.lower()) / xg.delta(), 0.0, static_cast<double>(xg.size() - 1));
                k = static_cast<std::size_t>(std::lround(pos));
            }
            for (double p : p_samples) {
                const AdjustedControl* argmin = nullptr;
                double value = surface.value(j, k, p, &argmin);
                if (!on_grid) value = surface.value_at(j, x, p);
                out << format_real(t) << ',' << format_real(x) << ',' << format_real(p) << ',' << format_real(value)
                    << ',';
                if (argmin) out << format_real(argmin->raw);
                out << '\n';
            }
        }
    }
}

std::vector<SurfaceCsvRow> read_surface_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "t,x,p,value,argmin_control")
        throw InvalidArgument("surface CSV: missing or unexpected header");
    std::vector<SurfaceCsvRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double fields[5] = {};
        bool has_argmin = false;
        std::size_t start = 0;
        for (int i = 0; i < 5; ++i) {
            const std::size_t comma = i < 4 ? line.find(',', start) : line.size();
            if (comma == std::string::npos) throw InvalidArgument("surface CSV: short row");
            const std::string_view cell(line.data() + start, comma - start);
            if (i == 4 && cell.empty()) break;
            const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), fields[i]);
            if (ec != std::errc() || end != cell.data() + cell.size()) throw InvalidArgument("surface CSV: bad number");
            if (i == 4) has_argmin = true;
            start = comma + 1;
        }
        SurfaceCsvRow row{fields[0], fields[1], fields[2], fields[3], std::nullopt};
        if (has_argmin) row.argmin_control = fields[4];
        rows.push_back(row);
    }
    return rows;
}

void write_superrep_csv(std::ostream& out, const SuperRepCurve& curve, bool all_times) {
    out << "t,x,value,gradient\n";
    const std::size_t last = all_times ? curve.time_grid().steps() : 0;
    for (std::size_t j = 0; j <= last; ++j)
        for (std::size_t k = 0; k < curve.xgrid().size(); ++k)
            out << format_real(curve.time_grid().node(j)) << ',' << format_real(curve.xgrid().node(k)) << ','
                << format_real(curve.value(j, k)) << ',' << format_real(curve.gradient(j, k)) << '\n';
}

void write_study_csv(std::ostream& out, std::span<const StudyRow> rows) {
    out << "scale,error,iterations_max,seconds\n";
    for (const auto& r : rows)
        out << format_real(r.scale) << ',' << format_real(r.error) << ',' << r.iterations_max << ','
            << format_real(r.seconds) << '\n';
}

nlohmann::json control_table(const ControlSet& controls) {
    nlohmann::json table = nlohmann::json::array();
    for (const auto& c : controls.controls)
        table.push_back({{"raw", c.raw}, {"snapped", c.snapped}, {"N", c.intervals}, {"p_nodes", c.p_nodes()}});
    return table;
}

namespace {

nlohmann::json grid_summary(const TimeGrid& tg, const XGrid& xg) {
    return {{"N_t", tg.steps()},     {"h_max", tg.max_step()}, {"h_min", tg.min_step()}, {"N_x", xg.size()},
            {"delta", xg.delta()},   {"x_first", xg.node(0)},  {"x_last", xg.node(xg.size() - 1)}};
}

}  // namespace

nlohmann::json run_metadata(const RunConfig& config, const ValueSurface& surface) {
    nlohmann::json meta;
    meta["config"] = config_to_json(config);
    meta["grids"] = grid_summary(surface.time_grid(), surface.xgrid());
    const ControlSet& cs = surface.controls();
    meta["grids"]["N_c"] = cs.size();
    meta["grids"]["N_p"] = cs.total_p_nodes();
    meta["controls"] = control_table(cs);

    const AdjustedControl* widest = nullptr;
    const AdjustedControl* narrowest = nullptr;
    for (const auto& c : cs.controls) {
        if (!widest || std::abs(c.snapped) > std::abs(widest->snapped)) widest = &c;
        if (!narrowest || std::abs(c.snapped) < std::abs(narrowest->snapped)) narrowest = &c;
    }
    meta["a_max"] = {{"value", std::abs(widest->snapped)}, {"p_nodes", widest->p_nodes()}};
    meta["a_min"] = {{"value", std::abs(narrowest->snapped)}, {"p_nodes", narrowest->p_nodes()}};

    nlohmann::json per_step = nlohmann::json::array();
    int worst = 0;
    long long total = 0;
    for (const auto& d : surface.diagnostics) {
        per_step.push_back({{"time_index", d.time_index}, {"max", d.max_iterations}, {"total", d.total_iterations}});
        worst = std::max(worst, d.max_iterations);
        total += d.total_iterations;
    }
    meta["picard"] = {{"max", worst}, {"total", total}, {"per_step", per_step}};
    nlohmann::json superrep_iters = nlohmann::json::array();
    for (const auto& d : surface.superrep().diagnostics) superrep_iters.push_back(d.max_iterations);
    meta["picard"]["superrep_per_step"] = superrep_iters;

    nlohmann::json histogram = nlohmann::json::object();
    for (const auto& [raw, count] : surface.argmin_histogram(0, config.p_samples)) histogram[format_real(raw)] = count;
    meta["argmin_histogram_t0"] = histogram;
    return meta;
}

nlohmann::json superrep_metadata(const RunConfig& config, const SuperRepCurve& curve) {
    nlohmann::json meta;
    meta["config"] = config_to_json(config);
    meta["grids"] = grid_summary(curve.time_grid(), curve.xgrid());
    nlohmann::json iters = nlohmann::json::array();
    for (const auto& d : curve.diagnostics) iters.push_back(d.max_iterations);
    meta["picard"] = {{"per_step", iters}};
    return meta;
}

nlohmann::json timing_json(std::span<const StepDiagnostics> diagnostics, double total_seconds) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& d : diagnostics) steps.push_back({{"time_index", d.time_index}, {"seconds", d.seconds}});
    return {{"total_seconds", total_seconds}, {"per_step", steps}};
}

nlohmann::json study_json(const StudyReport& report, bool with_timing) {
    nlohmann::json j;
    j["study"] = report.name;
    auto rows = [with_timing](std::span<const StudyRow> rs) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& r : rs) {
            nlohmann::json row = {{"scale", r.scale}, {"error", r.error}, {"iterations_max", r.iterations_max}};
            if (with_timing) row["seconds"] = r.seconds;
            a.push_back(row);
        }
        return a;
    };
    j["rows"] = rows(report.rows);
    if (!report.secondary_rows.empty()) j["secondary_rows"] = rows(report.secondary_rows);
    if (report.fit) j["fit"] = {{"slope", report.fit->slope}, {"residual", report.fit->residual}};
    nlohmann::json criteria = nlohmann::json::array();
    for (const auto& c : report.criteria)
        criteria.push_back({{"name", c.name}, {"passed", c.passed}, {"gating", c.gating}, {"detail", c.detail}});
    j["criteria"] = criteria;
    j["warnings"] = report.warnings;
    j["details"] = report.details;
    j["passed"] = report.passed();
    return j;
}

}  // namespace qhedge::harness
