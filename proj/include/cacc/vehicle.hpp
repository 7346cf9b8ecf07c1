#pragma once

#include <Eigen/Dense>

#include <vector>

namespace cacc::vehicle {

/// Longitudinal model and constraint parameters shared by the platoon.
struct VehicleParams {
  double tau = 0.6;        // time gap, s
  double d_s = 2.0;        // standstill distance, m
  double l_v = 5.0;        // vehicle length, m
  double f = 10.0;         // driveline constant, 1/s
  double a_min = -4.0;     // m/s^2
  double a_max = 3.0;      // m/s^2
  double u_min = -4.0;     // m/s^2
  double u_max = 3.0;      // m/s^2
  double v_max = 35.0;     // m/s
  double d_lower = 0.5;    // emergency threshold, m
};

/// Error-coordinate state plus absolute kinematics of one platoon member.
struct VehicleState {
  double delta_d = 0.0;  // gap error, m
  double delta_v = 0.0;  // relative velocity v_pred - v_ego, m/s
  double a = 0.0;        // acceleration, m/s^2
  double x = 0.0;        // absolute rear-bumper position, m
  double v = 0.0;        // absolute velocity, m/s
};

enum class Mode : uint8_t { FreeFollowing = 0, EmergencyBraking = 1 };

enum class HardViolation : uint8_t {
  AccelBound,
  InputBound,
  SpeedLimit,
  NegativeGap,
};

/// Gap to the predecessor's rear bumper: x_pred - x_ego - l_v.
double gap(double x_pred, double x_ego, double l_v);

/// Constant time-headway spacing policy: tau * v + d_s.
double desired_gap(double v, const VehicleParams& params);

struct ContinuousMatrices {
  Eigen::Matrix3d A;
  Eigen::Vector3d B;
  Eigen::Vector3d D;
};

/// State-space matrices for S = [delta_d, delta_v, a].
ContinuousMatrices continuous_matrices(const VehicleParams& params);

/// First-order forward-Euler step of the error coordinates, with absolute
/// kinematics advanced as x += t_s v, v += t_s a. a_pred is the predecessor
/// acceleration (zero for the leader).
VehicleState step(const VehicleState& state, double u, double a_pred,
                  double t_s, const VehicleParams& params);

/// Flags every hard constraint violated beyond 1e-9 slack. The gap is
/// recovered from the error coordinates as delta_d + desired_gap(v).
std::vector<HardViolation> check_hard(const VehicleState& state, double u,
                                      const VehicleParams& params);

/// Comfort bounds on the next input given the previous one, intersected with
/// the absolute input bounds.
std::pair<double, double> comfort_bounds(double u_prev, double t_s,
                                         const VehicleParams& params);

/// EmergencyBraking iff delta_d + d_lower <= 0.
Mode emergency_indicator(double delta_d, double d_lower);

}  // namespace cacc::vehicle
