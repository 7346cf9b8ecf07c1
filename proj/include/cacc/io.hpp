#pragma once

#include "cacc/sim.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cacc::io {

/// trace.csv content: tick, t_s_elapsed, vehicle, x_m, v_mps, a_mps2, u_mps2,
/// gap_m, desired_gap_m, mode, n_links_received. Numbers at full (%.17g)
/// precision; a repeat of the same run is byte-identical.
std::string trace_csv(const sim::ScenarioResult& result);

std::string metrics_json(const sim::ScenarioResult& result);

std::string sweep_csv(const std::vector<sim::SweepCell>& cells);

std::string pred_error_csv(const std::vector<sim::PredErrorRow>& rows);

std::string packet_log_csv(const sim::ScenarioResult& result);

void write_file(const std::string& path, const std::string& content);

std::uint64_t fnv1a(std::string_view bytes);
std::string fnv1a_hex(std::string_view bytes);

}  // namespace cacc::io
