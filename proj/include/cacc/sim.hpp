#pragma once

#include "cacc/comms.hpp"
#include "cacc/smpc.hpp"
#include "cacc/vehicle.hpp"

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cacc::sim {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct EmptySample : std::runtime_error {
  explicit EmptySample(const std::string& what) : std::runtime_error(what) {}
};

struct ScenarioConfig {
  int n_vehicles = 10;
  double duration_s = 60.0;
  double t_s = 0.1;
  int lookahead = 1;  // r
  double per = 0.0;
  double rate_hz = 10.0;
  std::uint64_t seed = 1;
  double initial_speed = 27.0;  // m/s, with gaps at the matching desired gap
  bool log_packets = false;
  vehicle::VehicleParams params;
  smpc::MpcConfig mpc;
};

/// Throws ConfigError on invalid or inconsistent settings (rate vs t_s,
/// nonpositive durations, out-of-range per, ...).
void validate(const ScenarioConfig& config);

/// Leader desired velocity: 27 for t < 15, 0 for 15 <= t < 30, 25 after.
double leader_reference(double t);

struct VehicleTrace {
  std::vector<double> x, v, a, u, gap, desired_gap;  // gap is NaN for the leader
  std::vector<uint8_t> mode;
  std::vector<int> links_received;
};

struct PacketLogRow {
  int tick;
  double time_s;
  int sender;
  int receiver;
  int delivered;
};

struct ScenarioResult {
  ScenarioConfig config;
  std::vector<double> times;
  std::vector<VehicleTrace> traces;

  bool collision = false;
  int collision_tick = -1;
  int collision_vehicle = -1;

  std::vector<double> emergency_s;  // per vehicle
  double emergency_total_s = 0.0;
  std::vector<double> min_gap_m;  // per vehicle; +inf for the leader

  // Absolute velocity prediction errors per horizon step (index step-1),
  // split by forecast source.
  std::vector<std::vector<double>> gp_abs_err;
  std::vector<std::vector<double>> mpc_abs_err;

  int fallback_count = 0;
  int qp_maxiter_count = 0;
  std::int64_t qps_solved = 0;
  int hard_violations = 0;
  std::int64_t gp_source_forecasts = 0;  // controller inputs served by on_loss

  std::vector<PacketLogRow> packet_log;
};

ScenarioResult run_scenario(const ScenarioConfig& config);

struct PredErrorRow {
  int step;            // 1..N
  std::string source;  // "gp" | "mpc"
  double mean_abs_err;
  double p95_abs_err;  // nearest-rank
  std::size_t count;
};

/// Fig. 3-style statistics; throws EmptySample when a bucket has no samples.
std::vector<PredErrorRow> prediction_error_stats(const ScenarioResult& result);

struct SweepCell {
  double per;
  int r;
  int trials;
  double mean_emergency_s;
  double std_emergency_s;  // sample std, 0 for a single trial
  double mean_min_gap_m;
  int collision_count;
  double worst_min_gap_m;
  std::vector<double> trial_emergency_s;
};

/// Runs trials x (per, r) cells; trial seeds derive from the base seed only,
/// so coinciding links share loss streams across cells. Cells are ordered
/// per-major. jobs > 1 parallelizes across runs without affecting results.
std::vector<SweepCell> run_sweep(const ScenarioConfig& base,
                                 const std::vector<double>& pers,
                                 const std::vector<int>& rs, int trials,
                                 int jobs = 1);

/// Deterministic per-trial seed derivation used by run_sweep.
std::uint64_t trial_seed(std::uint64_t base_seed, int trial);

}  // namespace cacc::sim
