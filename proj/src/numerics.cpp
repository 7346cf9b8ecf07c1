#include "cacc/numerics.hpp"

#include <cmath>

namespace cacc::numerics {

Matrix cholesky(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite();
  }
  return llt.matrixL();
}

Vector solve_psd(const Matrix& a, const Vector& b) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite();
  }
  return llt.solve(b);
}

Vector solve_psd_jittered(Matrix a, const Vector& b) {
  const double mean_diag = a.diagonal().mean();
  double jitter = 1e-8 * (mean_diag > 0.0 ? mean_diag : 1.0);
  for (int attempt = 0; attempt <= 3; ++attempt) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() == Eigen::Success) {
      return llt.solve(b);
    }
    if (attempt == 3) break;
    a.diagonal().array() += jitter;
    jitter *= 10.0;
  }
  throw NotPositiveDefinite();
}

namespace {

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace

MinimizeResult minimize(const Objective& objective, const Vector& x0,
                        int max_iters, double tol) {
  constexpr double kArmijoC = 1e-4;
  constexpr double kBacktrack = 0.5;
  constexpr int kMaxLineSearch = 50;

  Vector x = x0;
  Vector grad(x.size());
  double f = objective(x, grad);
  if (!std::isfinite(f) || !all_finite(grad)) {
    throw NonFiniteObjective();
  }

  Vector best_x = x;
  double best_f = f;

  Vector dir = -grad;
  int iter = 0;
  bool converged = false;

  for (; iter < max_iters; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() <= tol) {
      converged = true;
      break;
    }
    double gd = grad.dot(dir);
    if (gd >= 0.0) {  // not a descent direction, restart
      dir = -grad;
      gd = grad.dot(dir);
      if (gd >= 0.0) {
        converged = true;  // gradient numerically zero
        break;
      }
    }

    double alpha = 1.0;
    Vector x_new(x.size()), grad_new(x.size());
    double f_new = 0.0;
    bool accepted = false;
    bool saw_finite = false;
    for (int ls = 0; ls < kMaxLineSearch; ++ls) {
      x_new = x + alpha * dir;
      f_new = objective(x_new, grad_new);
      if (std::isfinite(f_new) && all_finite(grad_new)) {
        saw_finite = true;
        if (f_new <= f + kArmijoC * alpha * gd) {
          accepted = true;
          break;
        }
      }
      alpha *= kBacktrack;
    }
    if (!accepted) {
      if (!saw_finite) throw NonFiniteObjective();
      // Line search stalled; a steepest-descent retry is pointless if we
      // already searched along -grad.
      if ((dir + grad).lpNorm<Eigen::Infinity>() <= 1e-300) break;
      dir = -grad;
      continue;
    }

    // Polak-Ribiere+ update
    const double gg = grad.squaredNorm();
    double beta = gg > 0.0 ? grad_new.dot(grad_new - grad) / gg : 0.0;
    beta = std::max(0.0, beta);
    dir = -grad_new + beta * dir;

    x = x_new;
    f = f_new;
    grad = grad_new;
    if (f < best_f) {
      best_f = f;
      best_x = x;
    }
  }

  if (f < best_f) {
    best_f = f;
    best_x = x;
  }
  return MinimizeResult{best_x, best_f, iter, converged};
}

Vector fd_gradient(const std::function<double(const Vector&)>& objective,
                   const Vector& x, double h) {
  Vector grad(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double fp = objective(probe);
    probe(i) = x(i) - h;
    const double fm = objective(probe);
    probe(i) = x(i);
    grad(i) = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace cacc::numerics
