#include "cacc/vehicle.hpp"

#include <algorithm>

namespace cacc::vehicle {

double gap(double x_pred, double x_ego, double l_v) {
  return x_pred - x_ego - l_v;
}

double desired_gap(double v, const VehicleParams& params) {
  return params.tau * v + params.d_s;
}

ContinuousMatrices continuous_matrices(const VehicleParams& params) {
  ContinuousMatrices m;
  m.A << 0.0, 1.0, -params.tau,
         0.0, 0.0, -1.0,
         0.0, 0.0, -params.f;
  m.B << 0.0, 0.0, params.f;
  m.D << 0.0, 1.0, 0.0;
  return m;
}

VehicleState step(const VehicleState& state, double u, double a_pred,
                  double t_s, const VehicleParams& params) {
  VehicleState next = state;
  next.delta_d = state.delta_d + t_s * (state.delta_v - params.tau * state.a);
  next.delta_v = state.delta_v + t_s * (a_pred - state.a);
  next.a = state.a + t_s * params.f * (u - state.a);
  next.x = state.x + t_s * state.v;
  next.v = state.v + t_s * state.a;
  return next;
}

std::vector<HardViolation> check_hard(const VehicleState& state, double u,
                                      const VehicleParams& params) {
  constexpr double kSlack = 1e-9;
  std::vector<HardViolation> violations;
  if (state.a < params.a_min - kSlack || state.a > params.a_max + kSlack) {
    violations.push_back(HardViolation::AccelBound);
  }
  if (u < params.u_min - kSlack || u > params.u_max + kSlack) {
    violations.push_back(HardViolation::InputBound);
  }
  if (state.v > params.v_max + kSlack) {
    violations.push_back(HardViolation::SpeedLimit);
  }
  const double d = state.delta_d + desired_gap(state.v, params);
  if (d < -kSlack) {
    violations.push_back(HardViolation::NegativeGap);
  }
  return violations;
}

std::pair<double, double> comfort_bounds(double u_prev, double t_s,
                                         const VehicleParams& params) {
  const double lo = std::max(params.u_min, u_prev + t_s * params.u_min);
  const double hi = std::min(params.u_max, u_prev + t_s * params.u_max);
  return {lo, hi};
}

Mode emergency_indicator(double delta_d, double d_lower) {
  return delta_d + d_lower <= 0.0 ? Mode::EmergencyBraking
                                  : Mode::FreeFollowing;
}

}  // namespace cacc::vehicle
