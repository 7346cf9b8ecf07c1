#pragma once

#include "cacc/numerics.hpp"

namespace cacc::qp {

using numerics::Matrix;
using numerics::Vector;

/// Dense convex QP: minimize 0.5 x'Hx + g'x + c0 subject to G x <= h.
struct QuadraticProgram {
  Matrix H;         // n x n, symmetric PSD
  Vector g;         // n
  Matrix G;         // m x n (m may be 0)
  Vector h;         // m
  double c0 = 0.0;  // constant cost offset
};

enum class QpStatus : uint8_t { Optimal, Infeasible, MaxIter };

struct QpSolution {
  Vector x;
  Vector lambda;          // multipliers per constraint row, 0 when inactive
  double objective = 0.0; // includes c0
  QpStatus status = QpStatus::Infeasible;
  int iterations = 0;
};

/// Primal active-set solver with a phase-1 feasibility start. Infeasibility
/// is certified by a phase-1 optimum above tol. H is repaired to positive
/// definite by an escalating diagonal shift starting at 1e-10.
QpSolution solve(const QuadraticProgram& qp, double tol = 1e-8);

}  // namespace cacc::qp
