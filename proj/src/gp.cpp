#include "cacc/gp.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace cacc::gp {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)

// LLT with the kernel jitter policy: +1e-8 * mean(diag) * I, escalating x10,
// at most 3 escalations.
Eigen::LLT<Matrix> llt_jittered(Matrix k) {
  const double mean_diag = k.diagonal().mean();
  double jitter = 1e-8 * (mean_diag > 0.0 ? mean_diag : 1.0);
  for (int attempt = 0; attempt <= 3; ++attempt) {
    Eigen::LLT<Matrix> llt(k);
    if (llt.info() == Eigen::Success) return llt;
    if (attempt == 3) break;
    k.diagonal().array() += jitter;
    jitter *= 10.0;
  }
  throw numerics::NotPositiveDefinite();
}

Matrix rbf_matrix(const Vector& a, const Vector& b, double gamma) {
  Matrix k(a.size(), b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      k(i, j) = rbf_kernel(a(i), b(j), gamma);
    }
  }
  return k;
}

}  // namespace

double rbf_kernel(double t, double t_prime, double gamma) {
  const double d = t - t_prime;
  return std::exp(-(d * d) / (2.0 * gamma * gamma));
}

Matrix kernel_matrix(const Vector& times, const GpHyperParams& hyper) {
  Matrix k = rbf_matrix(times, times, hyper.gamma);
  k.diagonal().array() += hyper.gamma_noise * hyper.gamma_noise;
  return k;
}

LooObjective loo_objective(const VelocityHistory& history,
                           const GpHyperParams& hyper) {
  const Eigen::Index n = history.size();
  const double gamma = hyper.gamma;
  const double s = hyper.gamma_noise * hyper.gamma_noise;  // noise variance

  LooObjective out;
  out.grad_log.setZero();

  Vector t_sub(n - 1), v_sub(n - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index m = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      t_sub(m) = history.times(j);
      v_sub(m) = history.velocities(j);
      ++m;
    }
    const double ti = history.times(i);
    const double vi = history.velocities(i);

    Matrix K = rbf_matrix(t_sub, t_sub, gamma);
    K.diagonal().array() += s;
    Vector k = rbf_matrix(t_sub, Vector::Constant(1, ti), gamma).col(0);

    const auto llt = llt_jittered(K);
    const Vector alpha = llt.solve(v_sub);
    const Vector beta = llt.solve(k);

    const double mu = k.dot(alpha);
    const double latent_var = std::max(0.0, 1.0 - k.dot(beta));
    const double var = latent_var + s;
    const double resid = vi - mu;

    out.value += -0.5 * std::log(var) - resid * resid / (2.0 * var) - kHalfLog2Pi;

    // Kernel derivatives w.r.t. log gamma: dK_ab = K_ab * (t_a - t_b)^2 / g^2.
    Matrix dK(n - 1, n - 1);
    Vector dk(n - 1);
    const double inv_g2 = 1.0 / (gamma * gamma);
    for (Eigen::Index a = 0; a < n - 1; ++a) {
      for (Eigen::Index b = 0; b < n - 1; ++b) {
        const double d = t_sub(a) - t_sub(b);
        dK(a, b) = (K(a, b) - (a == b ? s : 0.0)) * d * d * inv_g2;
      }
      const double d = t_sub(a) - ti;
      dk(a) = k(a) * d * d * inv_g2;
    }

    // d/d(log gamma)
    const double dmu_g = dk.dot(alpha) - beta.dot(dK * alpha);
    const double dvar_g = -2.0 * beta.dot(dk) + beta.dot(dK * beta);
    // d/d(log gamma_noise): dK = 2 s I, dk = 0, ds = 2 s
    const double dmu_n = -2.0 * s * beta.dot(alpha);
    const double dvar_n = 2.0 * s * beta.squaredNorm() + 2.0 * s;

    const double common = -0.5 / var + resid * resid / (2.0 * var * var);
    out.grad_log(0) += common * dvar_g + (resid / var) * dmu_g;
    out.grad_log(1) += common * dvar_n + (resid / var) * dmu_n;
  }
  return out;
}

GpHyperParams fit(const VelocityHistory& history, const GpHyperParams& init,
                  int max_iters, double tol) {
  if (history.size() < 2) return init;

  const auto negative_loo = [&](const Vector& x, Vector& grad) -> double {
    const GpHyperParams p{std::exp(x(0)), std::exp(x(1))};
    try {
      const LooObjective loo = loo_objective(history, p);
      grad(0) = -loo.grad_log(0);
      grad(1) = -loo.grad_log(1);
      return -loo.value;
    } catch (const numerics::NotPositiveDefinite&) {
      grad.setZero();
      return std::numeric_limits<double>::infinity();
    }
  };

  Vector x0(2);
  x0 << std::log(init.gamma), std::log(init.gamma_noise);
  try {
    const auto res = numerics::minimize(negative_loo, x0, max_iters, tol);
    return GpHyperParams{std::exp(res.x(0)), std::exp(res.x(1))};
  } catch (const numerics::NonFiniteObjective&) {
    return init;
  }
}

GpPrediction predict(const VelocityHistory& history, const GpHyperParams& hyper,
                     const Vector& query_times) {
  GpPrediction pred;
  pred.query_times = query_times;

  const Matrix prior = rbf_matrix(query_times, query_times, hyper.gamma);
  if (history.size() == 0) {
    pred.mean = Vector::Zero(query_times.size());
    pred.covariance = prior;
    return pred;
  }

  const Matrix cross = rbf_matrix(query_times, history.times, hyper.gamma);
  const Matrix K = kernel_matrix(history.times, hyper);
  const auto llt = llt_jittered(K);
  const Vector alpha = llt.solve(history.velocities);
  const Matrix kinv_cross_t = llt.solve(cross.transpose());

  pred.mean = cross * alpha;
  Matrix cov = prior - cross * kinv_cross_t;
  cov = 0.5 * (cov + cov.transpose()).eval();
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    if (cov(i, i) < 0.0) cov(i, i) = 0.0;
  }
  pred.covariance = std::move(cov);
  return pred;
}

double predict_position(double x0, double t0, const VelocityHistory& history,
                        const GpHyperParams& hyper, double t1) {
  constexpr double kGrid = 0.1;
  if (t1 <= t0 + 1e-15) return x0;

  std::vector<double> grid;
  for (double t = t0; t < t1 - 1e-12; t += kGrid) grid.push_back(t);
  grid.push_back(t1);

  Vector times = Eigen::Map<const Vector>(grid.data(), grid.size());
  const GpPrediction pred = predict(history, hyper, times);

  double x = x0;
  for (size_t i = 0; i + 1 < grid.size(); ++i) {
    x += 0.5 * (pred.mean(i) + pred.mean(i + 1)) * (grid[i + 1] - grid[i]);
  }
  return x;
}

}  // namespace cacc::gp
