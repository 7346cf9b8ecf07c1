#include "cacc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace cacc::qp {

namespace {

constexpr double kZeroRowTol = 1e-12;
constexpr double kFeasTol = 1e-9;    // treated as satisfied in ratio tests
constexpr double kPhase1Tol = 1e-6;  // infeasibility certificate threshold

// Symmetrize and shift the diagonal until LLT succeeds.
Matrix repair_psd(const Matrix& h) {
  Matrix hreg = 0.5 * (h + h.transpose());
  double shift = 1e-10;
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::LLT<Matrix> llt(hreg);
    if (llt.info() == Eigen::Success) return hreg;
    hreg.diagonal().array() += shift;
    shift *= 10.0;
  }
  return hreg;
}

struct CoreResult {
  Vector x;
  std::vector<int> working;  // active rows
  Vector lambda_working;
  bool optimal = false;
  int iterations = 0;
};

// Primal active-set iteration for strictly convex H, inequality rows only.
// x0 must satisfy G x0 <= h + kFeasTol.
CoreResult active_set_core(const Matrix& H, const Vector& g, const Matrix& G,
                           const Vector& h, const Vector& x0, int max_iter,
                           double step_tol, double lambda_tol) {
  const Eigen::Index n = H.rows();
  const Eigen::Index m = G.rows();

  CoreResult res;
  res.x = x0;
  std::vector<int>& W = res.working;
  std::vector<char> in_w(static_cast<size_t>(m), 0);

  for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
    const Eigen::Index a = static_cast<Eigen::Index>(W.size());
    Matrix kkt = Matrix::Zero(n + a, n + a);
    kkt.topLeftCorner(n, n) = H;
    for (Eigen::Index j = 0; j < a; ++j) {
      kkt.block(0, n + j, n, 1) = G.row(W[static_cast<size_t>(j)]).transpose();
      kkt.block(n + j, 0, 1, n) = G.row(W[static_cast<size_t>(j)]);
    }
    Vector rhs = Vector::Zero(n + a);
    rhs.head(n) = -(H * res.x + g);

    Eigen::FullPivLU<Matrix> lu(kkt);
    if (!lu.isInvertible()) {
      if (W.empty()) return res;  // H itself singular; cannot proceed
      // Degenerate working set: drop the most recently added row.
      in_w[static_cast<size_t>(W.back())] = 0;
      W.pop_back();
      continue;
    }
    const Vector sol = lu.solve(rhs);
    const Vector p = sol.head(n);
    const Vector lam = sol.tail(a);

    const double step_scale = std::max(1.0, res.x.lpNorm<Eigen::Infinity>());
    if (p.lpNorm<Eigen::Infinity>() <= step_tol * step_scale) {
      if (a == 0 || lam.minCoeff() >= -lambda_tol) {
        res.lambda_working = lam;
        res.optimal = true;
        return res;
      }
      Eigen::Index drop = 0;
      lam.minCoeff(&drop);
      in_w[static_cast<size_t>(W[static_cast<size_t>(drop)])] = 0;
      W.erase(W.begin() + drop);
      continue;
    }

    double alpha = 1.0;
    int blocker = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (in_w[static_cast<size_t>(i)]) continue;
      const double gp = G.row(i).dot(p);
      if (gp <= 1e-12) continue;
      double slack = h(i) - G.row(i).dot(res.x);
      if (slack < 0.0) slack = 0.0;
      const double ratio = slack / gp;
      if (ratio < alpha) {
        alpha = ratio;
        blocker = static_cast<int>(i);
      }
    }
    res.x += alpha * p;
    if (blocker >= 0) {
      W.push_back(blocker);
      in_w[static_cast<size_t>(blocker)] = 1;
    }
  }
  return res;  // iteration budget exhausted
}

}  // namespace

QpSolution solve(const QuadraticProgram& qp, double tol) {
  const Eigen::Index n = qp.H.rows();
  const Eigen::Index m_all = qp.G.rows();
  const double step_tol = 1e-3 * tol;
  const double lambda_tol = 0.1 * tol;

  QpSolution out;
  out.x = Vector::Zero(n);
  out.lambda = Vector::Zero(m_all);

  // Constant rows (zero coefficients) are decided immediately.
  std::vector<int> row_map;
  row_map.reserve(static_cast<size_t>(m_all));
  for (Eigen::Index i = 0; i < m_all; ++i) {
    if (qp.G.row(i).lpNorm<Eigen::Infinity>() < kZeroRowTol) {
      if (qp.h(i) < -kFeasTol) {
        out.status = QpStatus::Infeasible;
        out.objective = std::numeric_limits<double>::infinity();
        return out;
      }
      continue;
    }
    row_map.push_back(static_cast<int>(i));
  }
  const Eigen::Index m = static_cast<Eigen::Index>(row_map.size());
  Matrix G(m, n);
  Vector h(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    G.row(i) = qp.G.row(row_map[static_cast<size_t>(i)]);
    h(i) = qp.h(row_map[static_cast<size_t>(i)]);
  }

  const Matrix hreg = repair_psd(qp.H);
  const int max_iter = 200 * static_cast<int>(std::max<Eigen::Index>(n, 1));

  Vector x = Eigen::LLT<Matrix>(hreg).solve(-qp.g);
  int phase1_iters = 0;

  if (m > 0) {
    const double viol = (G * x - h).maxCoeff();
    if (viol > kFeasTol) {
      // Phase 1: minimize 0.5 t^2 + t over (x, t) with G x - t <= h. The
      // augmented problem is feasible for any x by taking t large; the
      // original one is feasible iff the optimal t is numerically
      // nonpositive.
      Matrix h1 = Matrix::Zero(n + 1, n + 1);
      h1.diagonal().head(n).setConstant(1e-10);
      h1(n, n) = 1.0;
      Vector g1 = Vector::Zero(n + 1);
      g1(n) = 1.0;
      Matrix g_aug(m, n + 1);
      g_aug.leftCols(n) = G;
      g_aug.col(n).setConstant(-1.0);
      Vector y0(n + 1);
      y0.head(n) = x;
      y0(n) = viol + 1.0;

      const CoreResult p1 = active_set_core(h1, g1, g_aug, h, y0, max_iter,
                                            step_tol, lambda_tol);
      phase1_iters = p1.iterations;
      if (!p1.optimal || p1.x(n) > kPhase1Tol) {
        out.x = p1.x.head(n);
        out.status = p1.optimal ? QpStatus::Infeasible : QpStatus::MaxIter;
        out.objective = std::numeric_limits<double>::infinity();
        out.iterations = phase1_iters;
        return out;
      }
      x = p1.x.head(n);
    }
  }

  const CoreResult p2 =
      active_set_core(hreg, qp.g, G, h, x, max_iter, step_tol, lambda_tol);
  out.iterations = phase1_iters + p2.iterations;
  out.x = p2.x;
  if (!p2.optimal) {
    out.status = QpStatus::MaxIter;
    out.objective = std::numeric_limits<double>::infinity();
    return out;
  }
  for (size_t j = 0; j < p2.working.size(); ++j) {
    const double lam = p2.lambda_working(static_cast<Eigen::Index>(j));
    out.lambda(row_map[static_cast<size_t>(p2.working[j])]) =
        std::max(0.0, lam);
  }
  out.status = QpStatus::Optimal;
  out.objective = 0.5 * p2.x.dot(qp.H * p2.x) + qp.g.dot(p2.x) + qp.c0;
  return out;
}

}  // namespace cacc::qp
