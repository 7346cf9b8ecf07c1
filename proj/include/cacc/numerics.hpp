#pragma once

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <stdexcept>

namespace cacc::numerics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when a matrix that should be SPD fails to factor (pivot <= 0).
/// Kernel-matrix callers respond by adding jitter, see solve_psd_jittered.
struct NotPositiveDefinite : std::runtime_error {
  NotPositiveDefinite() : std::runtime_error("matrix is not positive definite") {}
};

/// Raised when an objective evaluates to NaN/Inf and no recovery step exists.
struct NonFiniteObjective : std::runtime_error {
  NonFiniteObjective() : std::runtime_error("objective is not finite") {}
};

/// Lower-triangular L with A = L * L^T. A must be symmetric positive definite.
Matrix cholesky(const Matrix& a);

/// Solves A x = b for symmetric positive definite A.
Vector solve_psd(const Matrix& a, const Vector& b);

/// solve_psd with the kernel-matrix jitter policy: on failure retries with
/// +1e-8 * mean(diag) * I, escalating x10 at most 3 times before rethrowing.
Vector solve_psd_jittered(Matrix a, const Vector& b);

/// Objective callback: returns value, fills grad (resized by caller to x.size()).
using Objective = std::function<double(const Vector& x, Vector& grad)>;

struct MinimizeResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Nonlinear conjugate gradient (Polak-Ribiere+) with Armijo backtracking
/// (factor 0.5, c = 1e-4). Returns the best point seen; the objective at the
/// result never exceeds the objective at x0. max_step bounds the infinity
/// norm of a single iterate move, which keeps log-space objectives with
/// steep gradients from jumping onto distant plateaus.
MinimizeResult minimize(const Objective& objective, const Vector& x0,
                        int max_iters = 200, double tol = 1e-8,
                        double max_step = std::numeric_limits<double>::infinity());

/// Componentwise central-difference gradient, step h.
Vector fd_gradient(const std::function<double(const Vector&)>& objective,
                   const Vector& x, double h = 1e-6);

}  // namespace cacc::numerics
