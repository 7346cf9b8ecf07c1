#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cacc/qp.hpp"

#include <cmath>
#include <cstring>
#include <random>

using namespace cacc::qp;

namespace {

QuadraticProgram make_qp(std::initializer_list<double> h,
                         std::initializer_list<double> g,
                         std::initializer_list<std::initializer_list<double>> rows,
                         std::initializer_list<double> rhs, double c0 = 0.0) {
  QuadraticProgram qp;
  const Eigen::Index n = static_cast<Eigen::Index>(g.size());
  qp.H.resize(n, n);
  Eigen::Index i = 0;
  for (double v : h) {
    qp.H(i / n, i % n) = v;
    ++i;
  }
  qp.g.resize(n);
  i = 0;
  for (double v : g) qp.g(i++) = v;
  qp.G.resize(static_cast<Eigen::Index>(rows.size()), n);
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) qp.G(r, c++) = v;
    ++r;
  }
  qp.h.resize(static_cast<Eigen::Index>(rhs.size()));
  i = 0;
  for (double v : rhs) qp.h(i++) = v;
  qp.c0 = c0;
  return qp;
}

struct KktCheck {
  double primal;
  double stationarity;
  double complementarity;
  double lambda_min;
};

KktCheck kkt_residuals(const QuadraticProgram& qp, const QpSolution& sol) {
  KktCheck k{};
  k.primal = qp.G.rows() > 0
                 ? (qp.G * sol.x - qp.h).cwiseMax(0.0).lpNorm<Eigen::Infinity>()
                 : 0.0;
  Eigen::VectorXd stat = qp.H * sol.x + qp.g;
  if (qp.G.rows() > 0) stat += qp.G.transpose() * sol.lambda;
  k.stationarity = stat.lpNorm<Eigen::Infinity>();
  k.complementarity =
      qp.G.rows() > 0 ? std::abs(sol.lambda.dot(qp.G * sol.x - qp.h)) : 0.0;
  k.lambda_min = qp.G.rows() > 0 ? sol.lambda.minCoeff() : 0.0;
  return k;
}

}  // namespace

TEST_CASE("clipped scalar problem") {
  // min (x-1)^2 s.t. x <= 0.5
  const auto qp = make_qp({2.0}, {-2.0}, {{1.0}}, {0.5}, 1.0);
  const auto sol = solve(qp);
  REQUIRE(sol.status == QpStatus::Optimal);
  CHECK(sol.x(0) == doctest::Approx(0.5));
  CHECK(sol.objective == doctest::Approx(0.25));
}

TEST_CASE("unconstrained minimum") {
  QuadraticProgram qp;
  qp.H = Eigen::MatrixXd::Identity(2, 2) * 2.0;
  qp.g = Eigen::VectorXd::Zero(2);
  qp.G.resize(0, 2);
  qp.h.resize(0);
  const auto sol = solve(qp);
  REQUIRE(sol.status == QpStatus::Optimal);
  CHECK(sol.x.lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("KKT by hand on the simplex-face problem") {
  // min 0.5 x'Ix - (1,1) x s.t. x1 + x2 <= 1
  const auto qp =
      make_qp({1.0, 0.0, 0.0, 1.0}, {-1.0, -1.0}, {{1.0, 1.0}}, {1.0});
  const auto sol = solve(qp);
  REQUIRE(sol.status == QpStatus::Optimal);
  CHECK(sol.x(0) == doctest::Approx(0.5));
  CHECK(sol.x(1) == doctest::Approx(0.5));
  CHECK(sol.lambda(0) == doctest::Approx(0.5));
}

TEST_CASE("contradictory bounds are infeasible") {
  const auto qp = make_qp({2.0}, {0.0}, {{1.0}, {-1.0}}, {0.0, -1.0});
  const auto sol = solve(qp);
  CHECK(sol.status == QpStatus::Infeasible);
}

TEST_CASE("constant rows decide feasibility") {
  const auto ok = make_qp({2.0}, {0.0}, {{0.0}}, {0.5});
  CHECK(solve(ok).status == QpStatus::Optimal);
  const auto bad = make_qp({2.0}, {0.0}, {{0.0}}, {-0.5});
  CHECK(solve(bad).status == QpStatus::Infeasible);
}

TEST_CASE("KKT residual suite on random feasible QPs") {
  std::mt19937 rng(101);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> dim_d(1, 10);
  std::uniform_int_distribution<int> con_d(0, 20);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = dim_d(rng);
    const int m = con_d(rng);
    Eigen::MatrixXd mbase(n, n);
    for (int i = 0; i < n * n; ++i) mbase(i / n, i % n) = normal(rng);
    QuadraticProgram qp;
    qp.H = mbase.transpose() * mbase + 0.2 * Eigen::MatrixXd::Identity(n, n);
    qp.g.resize(n);
    for (int i = 0; i < n; ++i) qp.g(i) = normal(rng);
    qp.G.resize(m, n);
    qp.h.resize(m);
    Eigen::VectorXd interior(n);
    for (int i = 0; i < n; ++i) interior(i) = normal(rng);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) qp.G(i, j) = normal(rng);
      qp.h(i) = qp.G.row(i).dot(interior) + std::abs(normal(rng));
    }
    const auto sol = solve(qp);
    REQUIRE(sol.status == QpStatus::Optimal);
    const auto k = kkt_residuals(qp, sol);
    CHECK(k.primal <= 1e-6);
    CHECK(k.stationarity <= 1e-6);
    CHECK(k.complementarity <= 1e-6);
    CHECK(k.lambda_min >= -1e-9);
  }
}

TEST_CASE("2-d objective matches a grid-refinement oracle") {
  std::mt19937 rng(211);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd mbase(2, 2);
    for (int i = 0; i < 4; ++i) mbase(i / 2, i % 2) = normal(rng);
    QuadraticProgram qp;
    qp.H = mbase.transpose() * mbase + 0.3 * Eigen::MatrixXd::Identity(2, 2);
    qp.g.resize(2);
    qp.g << normal(rng), normal(rng);
    // A couple of random halfspaces plus a [-5, 5]^2 box.
    qp.G.resize(6, 2);
    qp.h.resize(6);
    qp.G << 1, 0, -1, 0, 0, 1, 0, -1, normal(rng), normal(rng), normal(rng),
        normal(rng);
    qp.h << 5, 5, 5, 5, std::abs(normal(rng)) + 0.5, std::abs(normal(rng)) + 0.5;

    const auto sol = solve(qp);
    REQUIRE(sol.status == QpStatus::Optimal);

    const auto objective_at = [&](double x, double y) {
      Eigen::Vector2d v(x, y);
      return 0.5 * v.dot(qp.H * v) + qp.g.dot(v);
    };
    const auto feasible = [&](double x, double y) {
      Eigen::Vector2d v(x, y);
      return ((qp.G * v - qp.h).array() <= 1e-9).all();
    };
    double best = std::numeric_limits<double>::infinity();
    double bx = 0.0, by = 0.0;
    for (double x = -5.0; x <= 5.0; x += 0.05) {
      for (double y = -5.0; y <= 5.0; y += 0.05) {
        if (feasible(x, y)) {
          const double o = objective_at(x, y);
          if (o < best) {
            best = o;
            bx = x;
            by = y;
          }
        }
      }
    }
    for (double x = bx - 0.06; x <= bx + 0.06; x += 1e-3) {
      for (double y = by - 0.06; y <= by + 0.06; y += 1e-3) {
        if (feasible(x, y)) best = std::min(best, objective_at(x, y));
      }
    }
    CHECK(sol.objective <= best + 1e-4);
    CHECK(sol.objective >= best - 1e-3);  // grid sits above the true optimum
  }
}

TEST_CASE("identical inputs give identical outputs") {
  const auto qp =
      make_qp({2.0, 0.3, 0.3, 1.0}, {-1.0, 0.7}, {{1.0, 1.0}, {-1.0, 0.2}},
              {0.8, 0.4});
  const auto a = solve(qp);
  const auto b = solve(qp);
  REQUIRE(a.status == b.status);
  CHECK(std::memcmp(a.x.data(), b.x.data(), sizeof(double) * 2) == 0);
  CHECK(a.objective == b.objective);
}
