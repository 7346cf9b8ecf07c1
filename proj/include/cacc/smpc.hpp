#pragma once

#include "cacc/qp.hpp"
#include "cacc/vehicle.hpp"

#include <stdexcept>
#include <vector>

namespace cacc::smpc {

using numerics::Matrix;
using numerics::Vector;

struct HorizonTooLarge : std::runtime_error {
  HorizonTooLarge()
      : std::runtime_error("mode enumeration supports horizons up to 12") {}
};

struct MpcConfig {
  int horizon = 7;  // N
  double t_s = 0.1;
  Eigen::Matrix3d state_weight =
      Eigen::Vector3d(1.0, 0.5, 0.1).asDiagonal();  // Q
  Eigen::Vector3d state_ref = Eigen::Vector3d::Zero();  // R
  double prob_weight = 10.0;   // q
  double chance_floor = 1e-14; // p~, default 0.01^7
  int lookahead = 1;           // r
  // Total look-ahead cost budget, split evenly over the predecessors in use.
  double lookahead_weight_d = 0.2;
  double lookahead_weight_v = 0.2;
};

enum class ForecastSource : uint8_t { ReceivedMpc, GpPredicted };

/// Predicted trajectory of one predecessor over the ego horizon; entry k
/// refers to now + k * t_s.
struct PredecessorForecast {
  int vehicle = -1;
  Vector velocities;     // m/s
  Vector positions;      // m
  Vector accelerations;  // m/s^2
  Vector sigmas;         // per-step velocity std, 0 when ReceivedMpc
  ForecastSource source = ForecastSource::ReceivedMpc;
};

struct ModeSequence {
  std::vector<uint8_t> delta;  // 1 = EmergencyBraking

  int emergency_count() const {
    int c = 0;
    for (uint8_t d : delta) c += d;
    return c;
  }
};

/// One uncontrollable-event trajectory: a constant Gauss-Hermite node applied
/// to the predecessor velocity, offset -sqrt(3) sigma_k / 0 / +sqrt(3) sigma_k
/// per step, with log trajectory probability.
struct Scenario {
  int node = 0;  // -1, 0, +1
  double log_prob = 0.0;
};

/// All 2^N mode sequences in lexicographic order (delta(0) most significant).
std::vector<ModeSequence> enumerate_candidates(const MpcConfig& config);

/// Gauss-Hermite 3-node scenarios of the nearest-predecessor forecast with
/// the chance-constraint filter ln pi >= ln p~. A deterministic forecast
/// (all sigmas zero) yields the single nominal scenario with ln pi = 0.
std::vector<Scenario> build_scenarios(const PredecessorForecast& forecast,
                                      const MpcConfig& config);

/// Shifts the forecast velocities by the scenario node, re-integrates the
/// positions (trapezoid) and recomputes accelerations by finite differences.
PredecessorForecast apply_scenario(const PredecessorForecast& forecast,
                                   const Scenario& scenario, double t_s);

/// Condensed QP for one fixed (mode sequence, scenario) candidate. Decision
/// variables are the N inputs; the ego index is nearest predecessor id + 1.
qp::QuadraticProgram build_qp(const ModeSequence& modes,
                              const Scenario& scenario,
                              const vehicle::VehicleState& state0,
                              double u_prev,
                              const std::vector<PredecessorForecast>& forecasts,
                              const MpcConfig& config,
                              const vehicle::VehicleParams& params);

struct SmpcResult {
  double u0 = 0.0;
  Vector inputs;              // N
  Vector planned_velocities;  // ego v(1..N), the broadcast payload
  Matrix planned_states;      // 3 x (N+1): S(0..N)
  vehicle::Mode mode0 = vehicle::Mode::FreeFollowing;
  ModeSequence modes;
  Scenario scenario;
  double objective = 0.0;  // QP objective + probability cost
  bool all_infeasible = false;

  struct Diagnostics {
    int candidates = 0;
    int solved = 0;
    int pruned = 0;
    int infeasible = 0;
    int maxiter = 0;
  } diag;
};

/// Exact minimum over mode sequences x surviving scenarios of the candidate
/// QP objective minus q ln pi(w). Ties break toward fewer emergency steps,
/// then the lexicographically smaller sequence, then scenario node order
/// -1, 0, +1. All-infeasible falls back to comfort-limited braking in
/// emergency mode.
SmpcResult solve_smpc(const vehicle::VehicleState& state0, double u_prev,
                      const std::vector<PredecessorForecast>& forecasts,
                      const MpcConfig& config,
                      const vehicle::VehicleParams& params);

/// Leader controller: tracks v_ref(1..N) under the hard and comfort
/// constraints with the same QP machinery and no predecessor coupling.
SmpcResult solve_leader(double v0, double a0, double u_prev,
                        const Vector& v_ref, const MpcConfig& config,
                        const vehicle::VehicleParams& params);

}  // namespace cacc::smpc
