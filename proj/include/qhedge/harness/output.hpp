#pragma once

// File formats written by the CLI.
//
// surface.csv  : t,x,p,value,argmin_control   (argmin empty at t = T)
// superrep.csv : t,x,value,gradient
// study.csv    : scale,error,iterations_max,seconds
// meta.json    : configuration echo, grids, controls, Picard iteration counts
// timing.json  : wall-clock seconds per step
//
// Reals are written in shortest round-trip form, so parsing a CSV back
// reproduces the written values exactly.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qhedge/harness/config.hpp"
#include "qhedge/harness/experiments.hpp"
#include "qhedge/pcpt_solver.hpp"

namespace qhedge::harness {

std::string format_real(double value);

struct SurfaceCsvRow {
    double t = 0.0;
    double x = 0.0;
    double p = 0.0;
    double value = 0.0;
    std::optional<double> argmin_control;
};

/// Rows in (t, x, p) order. Empty `x_points` means every x-grid node; other
/// x values are linearly interpolated and report the argmin of the nearer node.
void write_surface_csv(std::ostream& out, const ValueSurface& surface, std::span<const std::size_t> times,
                       std::span<const double> x_points, std::span<const double> p_samples);
std::vector<SurfaceCsvRow> read_surface_csv(std::istream& in);

void write_superrep_csv(std::ostream& out, const SuperRepCurve& curve, bool all_times);
void write_study_csv(std::ostream& out, std::span<const StudyRow> rows);

nlohmann::json control_table(const ControlSet& controls);
nlohmann::json run_metadata(const RunConfig& config, const ValueSurface& surface);
nlohmann::json superrep_metadata(const RunConfig& config, const SuperRepCurve& curve);
nlohmann::json timing_json(std::span<const StepDiagnostics> diagnostics, double total_seconds);
/// Study summary; without timing the result is deterministic.
nlohmann::json study_json(const StudyReport& report, bool with_timing = true);

}  // namespace qhedge::harness
