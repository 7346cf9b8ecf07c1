#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cacc/numerics.hpp"

#include <cmath>
#include <random>

using namespace cacc::numerics;

namespace {

Matrix random_spd(std::mt19937& rng, int dim) {
  std::normal_distribution<double> normal;
  Matrix m(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = normal(rng);
  return m.transpose() * m + 0.1 * Matrix::Identity(dim, dim);
}

}  // namespace

TEST_CASE("cholesky scalar and identity") {
  Matrix a(1, 1);
  a << 4.0;
  CHECK(cholesky(a)(0, 0) == doctest::Approx(2.0));

  const Matrix eye = Matrix::Identity(3, 3);
  CHECK((cholesky(eye) - eye).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("cholesky 2x2 reconstructs") {
  Matrix a(2, 2);
  a << 4.0, 2.0, 2.0, 3.0;
  const Matrix l = cholesky(a);
  CHECK(l(0, 0) == doctest::Approx(2.0));
  CHECK(l(1, 0) == doctest::Approx(1.0));
  CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)));
  CHECK(l(0, 1) == doctest::Approx(0.0));
  CHECK((l * l.transpose() - a).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("cholesky rejects indefinite matrices") {
  Matrix a(2, 2);
  a << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(cholesky(a), NotPositiveDefinite);
}

TEST_CASE("cholesky reconstruction on random SPD matrices") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 1 + static_cast<int>(rng() % 8);
    const Matrix a = random_spd(rng, dim);
    const Matrix l = cholesky(a);
    const double err = (l * l.transpose() - a).lpNorm<Eigen::Infinity>();
    CHECK(err <= 1e-10 * a.lpNorm<Eigen::Infinity>());
  }
}

TEST_CASE("solve_psd identity and diagonal systems") {
  Vector b(2);
  b << 3.0, -1.0;
  const Vector x = solve_psd(Matrix::Identity(2, 2), b);
  CHECK(x(0) == doctest::Approx(3.0));
  CHECK(x(1) == doctest::Approx(-1.0));

  Matrix d(2, 2);
  d << 2.0, 0.0, 0.0, 4.0;
  Vector b2(2);
  b2 << 2.0, 4.0;
  const Vector x2 = solve_psd(d, b2);
  CHECK(x2(0) == doctest::Approx(1.0));
  CHECK(x2(1) == doctest::Approx(1.0));
}

TEST_CASE("solve_psd matches the explicit 2x2 inverse") {
  Matrix a(2, 2);
  a << 4.0, 2.0, 2.0, 3.0;
  Vector b(2);
  b << 1.0, 0.0;
  // inverse = [[3, -2], [-2, 4]] / 8
  const Vector x = solve_psd(a, b);
  CHECK(x(0) == doctest::Approx(3.0 / 8.0));
  CHECK(x(1) == doctest::Approx(-2.0 / 8.0));
}

TEST_CASE("solve_psd residual bound on random systems") {
  std::mt19937 rng(11);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 1 + static_cast<int>(rng() % 8);
    const Matrix a = random_spd(rng, dim);
    Vector b(dim);
    for (int i = 0; i < dim; ++i) b(i) = normal(rng);
    const Vector x = solve_psd(a, b);
    const double resid = (a * x - b).lpNorm<Eigen::Infinity>();
    CHECK(resid <= 1e-9 * std::max(1.0, b.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("minimize quadratic bowls") {
  const Objective f1 = [](const Vector& x, Vector& g) {
    g(0) = 2.0 * x(0);
    return x(0) * x(0);
  };
  Vector x0(1);
  x0 << 5.0;
  const auto r1 = minimize(f1, x0, 200, 1e-10);
  CHECK(std::abs(r1.x(0)) < 1e-6);

  const Objective f2 = [](const Vector& x, Vector& g) {
    g(0) = 2.0 * (x(0) - 3.0);
    g(1) = 2.0 * (x(1) + 1.0);
    return (x(0) - 3.0) * (x(0) - 3.0) + (x(1) + 1.0) * (x(1) + 1.0);
  };
  Vector y0 = Vector::Zero(2);
  const auto r2 = minimize(f2, y0, 200, 1e-10);
  CHECK(r2.x(0) == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(r2.x(1) == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("minimize solves Rosenbrock from the classic start") {
  const Objective rosen = [](const Vector& x, Vector& g) {
    const double a = x(0), b = x(1);
    g(0) = -400.0 * a * (b - a * a) - 2.0 * (1.0 - a);
    g(1) = 200.0 * (b - a * a);
    return 100.0 * (b - a * a) * (b - a * a) + (1.0 - a) * (1.0 - a);
  };
  Vector x0(2);
  x0 << -1.2, 1.0;
  const auto res = minimize(rosen, x0, 20000, 1e-10);
  CHECK(std::abs(res.x(0) - 1.0) < 1e-4);
  CHECK(std::abs(res.x(1) - 1.0) < 1e-4);
}

TEST_CASE("minimize throws on a non-finite start") {
  const Objective bad = [](const Vector&, Vector& g) {
    g.setZero();
    return std::numeric_limits<double>::quiet_NaN();
  };
  Vector x0 = Vector::Zero(2);
  CHECK_THROWS_AS(minimize(bad, x0), NonFiniteObjective);
}

TEST_CASE("minimize never increases the objective") {
  std::mt19937 rng(23);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 1 + static_cast<int>(rng() % 4);
    Vector c(dim);
    for (int i = 0; i < dim; ++i) c(i) = normal(rng);
    const Objective f = [&](const Vector& x, Vector& g) {
      // quartic bowl around c
      double val = 0.0;
      for (int i = 0; i < dim; ++i) {
        const double d = x(i) - c(i);
        val += d * d + 0.25 * d * d * d * d;
        g(i) = 2.0 * d + d * d * d;
      }
      return val;
    };
    Vector x0(dim);
    for (int i = 0; i < dim; ++i) x0(i) = normal(rng) * 3.0;
    Vector g0(dim);
    const double f0 = f(x0, g0);
    const auto res = minimize(f, x0, 3 + static_cast<int>(rng() % 50), 1e-12);
    CHECK(res.value <= f0 + 1e-15);
  }
}

TEST_CASE("fd_gradient basics") {
  const auto square = [](const Vector& x) { return x(0) * x(0); };
  Vector x(1);
  x << 1.0;
  CHECK(fd_gradient(square, x)(0) == doctest::Approx(2.0).epsilon(1e-6));

  const auto constant = [](const Vector&) { return 3.5; };
  Vector y = Vector::Zero(4);
  CHECK(fd_gradient(constant, y).lpNorm<Eigen::Infinity>() == 0.0);
}
