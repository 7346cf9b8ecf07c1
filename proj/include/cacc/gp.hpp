#pragma once

#include "cacc/numerics.hpp"

#include <Eigen/Dense>

namespace cacc::gp {

using numerics::Matrix;
using numerics::Vector;

/// RBF length-scale (seconds) and observation-noise standard deviation (m/s).
/// Both strictly positive; fitting runs in log-space so positivity is
/// structural.
struct GpHyperParams {
  double gamma = 0.5;
  double gamma_noise = 0.1;
};

/// A transmitting vehicle's recent velocity observations. In simulation use
/// this is the 5 most recent samples on a 0.1 s grid.
struct VelocityHistory {
  Vector times;       // seconds, strictly increasing
  Vector velocities;  // m/s

  Eigen::Index size() const { return times.size(); }
};

struct GpPrediction {
  Vector mean;        // m/s
  Matrix covariance;  // (m/s)^2, symmetric, diagonal clamped >= 0
  Vector query_times; // seconds
};

struct LooObjective {
  double value = 0.0;          // sum of held-out log predictive probabilities
  Eigen::Vector2d grad_log;    // d value / d (log gamma, log gamma_noise)
};

/// exp(-(t - t')^2 / (2 gamma^2)); in (0, 1], symmetric.
double rbf_kernel(double t, double t_prime, double gamma);

/// K = K_r + gamma_noise^2 I over the given timestamps.
Matrix kernel_matrix(const Vector& times, const GpHyperParams& hyper);

/// Leave-one-out cross-validation objective: for each observation i, the log
/// probability of v_i under the posterior predictive (latent variance plus
/// observation noise) conditioned on the remaining observations. Gradient is
/// with respect to log-hyperparameters. Requires at least 2 observations.
LooObjective loo_objective(const VelocityHistory& history,
                           const GpHyperParams& hyper);

/// Maximizes the LOO objective with conjugate gradients in log-space.
/// Falls back to init when the objective turns non-finite or the history is
/// too short to cross-validate.
GpHyperParams fit(const VelocityHistory& history, const GpHyperParams& init,
                  int max_iters = 40, double tol = 1e-4);

/// Zero-prior-mean GP posterior at the query times. An empty history yields
/// the prior (mean 0, covariance K_r(t*, t*)).
GpPrediction predict(const VelocityHistory& history, const GpHyperParams& hyper,
                     const Vector& query_times);

/// Expected position at t1: x0 plus the trapezoid integral of the predictive
/// mean from t0 on a 0.1 s grid (partial last slab). Returns x0 when t1 <= t0.
double predict_position(double x0, double t0, const VelocityHistory& history,
                        const GpHyperParams& hyper, double t1);

}  // namespace cacc::gp
