#include "cacc/smpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cacc::smpc {

namespace {

constexpr double kEqualitySlack = 1e-9;  // paired-inequality encoding
constexpr double kStrictEps = 1e-4;      // strict side of the mode indicator
constexpr double kConsistencyTol = 1e-9; // matches the solver's constant-row tol

// Ego trajectory as affine functions of the input vector u(0..N-1):
// S(k) = s_const[k] + s_coef[k] u, v(k) = vc[k] + vg[k] u, same for x.
struct Condensed {
  std::vector<Eigen::Vector3d> s_const;
  std::vector<Matrix> s_coef;  // 3 x N each
  std::vector<double> vc, xc;
  std::vector<Eigen::RowVectorXd> vg, xg;
};

Condensed condense(const vehicle::VehicleState& state0, const Vector& a_pred,
                   const MpcConfig& config,
                   const vehicle::VehicleParams& params) {
  const int n = config.horizon;
  const double ts = config.t_s;
  const auto cm = vehicle::continuous_matrices(params);
  const Eigen::Matrix3d ad = Eigen::Matrix3d::Identity() + ts * cm.A;
  const Eigen::Vector3d bd = ts * cm.B;
  const Eigen::Vector3d dd = ts * cm.D;

  Condensed c;
  c.s_const.resize(n + 1);
  c.s_coef.resize(n + 1);
  c.vc.resize(n + 1);
  c.xc.resize(n + 1);
  c.vg.resize(n + 1);
  c.xg.resize(n + 1);

  c.s_const[0] << state0.delta_d, state0.delta_v, state0.a;
  c.s_coef[0] = Matrix::Zero(3, n);
  c.vc[0] = state0.v;
  c.xc[0] = state0.x;
  c.vg[0] = Eigen::RowVectorXd::Zero(n);
  c.xg[0] = Eigen::RowVectorXd::Zero(n);

  for (int k = 0; k < n; ++k) {
    c.s_const[k + 1] = ad * c.s_const[k] + dd * a_pred(k);
    c.s_coef[k + 1] = ad * c.s_coef[k];
    c.s_coef[k + 1].col(k) += bd;
    c.vc[k + 1] = c.vc[k] + ts * c.s_const[k](2);
    c.vg[k + 1] = c.vg[k] + ts * c.s_coef[k].row(2);
    c.xc[k + 1] = c.xc[k] + ts * c.vc[k];
    c.xg[k + 1] = c.xg[k] + ts * c.vg[k];
  }
  return c;
}

// Accumulates w * (coef u + offset)^2 into the quadratic cost.
void add_square(Matrix& h, Vector& g, double& c0, double w,
                const Eigen::RowVectorXd& coef, double offset) {
  h.noalias() += 2.0 * w * coef.transpose() * coef;
  g.noalias() += 2.0 * w * offset * coef.transpose();
  c0 += w * offset * offset;
}

struct RowSet {
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;

  void add(const Eigen::RowVectorXd& row, double b) {
    rows.push_back(row);
    rhs.push_back(b);
  }
};

// Everything about one scenario that candidates share: the adjusted forecast
// list, the condensed dynamics, the cost, and the mode-independent rows.
struct ScenarioBase {
  Scenario scenario;
  std::vector<PredecessorForecast> forecasts;  // nearest one adjusted
  Condensed dyn;
  Matrix h_cost;
  Vector g_cost;
  double c0 = 0.0;
  RowSet base_rows;
  double k0_cost = 0.0;     // u-independent cost at k = 0
  double prob_cost = 0.0;   // q * (-ln pi)
};

void add_hard_and_comfort_rows(RowSet& rows, const Condensed& dyn,
                               const ModeSequence* modes, double u_prev,
                               const MpcConfig& config,
                               const vehicle::VehicleParams& params) {
  const int n = config.horizon;
  const double ts = config.t_s;
  const auto unit = [&](int k) {
    Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n);
    e(k) = 1.0;
    return e;
  };

  for (int k = 0; k < n; ++k) {
    rows.add(unit(k), params.u_max);
    rows.add(-unit(k), -params.u_min);
  }
  // Input-rate (comfort) rows; steps commanded into emergency braking are
  // exempt, since the mode pins u(k) = u_min regardless of slew.
  for (int k = 0; k < n; ++k) {
    if (modes != nullptr && modes->delta[static_cast<size_t>(k)] == 1) continue;
    const Eigen::RowVectorXd diff =
        k == 0 ? unit(0) : Eigen::RowVectorXd(unit(k) - unit(k - 1));
    const double prev = k == 0 ? u_prev : 0.0;
    rows.add(diff, ts * params.u_max + prev);
    rows.add(-diff, -(ts * params.u_min + prev));
  }
  for (int k = 1; k <= n; ++k) {
    const Eigen::RowVectorXd a_row = dyn.s_coef[static_cast<size_t>(k)].row(2);
    const double a_c = dyn.s_const[static_cast<size_t>(k)](2);
    rows.add(a_row, params.a_max - a_c);
    rows.add(-a_row, a_c - params.a_min);
    rows.add(dyn.vg[static_cast<size_t>(k)],
             params.v_max - dyn.vc[static_cast<size_t>(k)]);
  }
}

void add_mode_rows(RowSet& rows, const Condensed& dyn, const ModeSequence& modes,
                   const MpcConfig& config,
                   const vehicle::VehicleParams& params) {
  const int n = config.horizon;
  for (int k = 0; k < n; ++k) {
    const Eigen::RowVectorXd d_row = dyn.s_coef[static_cast<size_t>(k)].row(0);
    const double d_c = dyn.s_const[static_cast<size_t>(k)](0);
    if (modes.delta[static_cast<size_t>(k)] == 1) {
      rows.add(d_row, -params.d_lower - d_c);
      Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n);
      e(k) = 1.0;
      rows.add(e, params.u_min + kEqualitySlack);
      rows.add(-e, -params.u_min + kEqualitySlack);
    } else {
      // Strict side; eps = 0 at k = 0 because S(0) is measured and an eps
      // band there would leave both modes infeasible on the boundary.
      const double eps = k == 0 ? 0.0 : kStrictEps;
      rows.add(-d_row, d_c + params.d_lower - eps);
    }
  }
}

qp::QuadraticProgram assemble(const ScenarioBase& base,
                              const ModeSequence& modes, double u_prev,
                              const MpcConfig& config,
                              const vehicle::VehicleParams& params) {
  const int n = config.horizon;
  RowSet rows;
  rows.rows.reserve(base.base_rows.rows.size() + 4 * static_cast<size_t>(n));
  rows.rhs.reserve(rows.rows.capacity());

  add_hard_and_comfort_rows(rows, base.dyn, &modes, u_prev, config, params);
  add_mode_rows(rows, base.dyn, modes, config, params);

  qp::QuadraticProgram prog;
  prog.H = base.h_cost;
  prog.g = base.g_cost;
  prog.c0 = base.c0;
  const Eigen::Index m = static_cast<Eigen::Index>(rows.rows.size());
  prog.G.resize(m, n);
  prog.h.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    prog.G.row(i) = rows.rows[static_cast<size_t>(i)];
    prog.h(i) = rows.rhs[static_cast<size_t>(i)];
  }
  return prog;
}

ScenarioBase make_scenario_base(const Scenario& scenario,
                                const vehicle::VehicleState& state0,
                                const std::vector<PredecessorForecast>& forecasts,
                                const MpcConfig& config,
                                const vehicle::VehicleParams& params) {
  const int n = config.horizon;

  ScenarioBase base;
  base.scenario = scenario;
  base.prob_cost = -config.prob_weight * scenario.log_prob;
  base.forecasts = forecasts;
  std::sort(base.forecasts.begin(), base.forecasts.end(),
            [](const auto& a, const auto& b) { return a.vehicle < b.vehicle; });
  PredecessorForecast& nearest = base.forecasts.back();
  nearest = apply_scenario(nearest, scenario, config.t_s);

  base.dyn = condense(state0, nearest.accelerations, config, params);

  base.h_cost = Matrix::Zero(n, n);
  base.g_cost = Vector::Zero(n);
  base.c0 = 0.0;

  const int ego = nearest.vehicle + 1;
  const double r_eff = static_cast<double>(base.forecasts.size());
  const double cd = config.lookahead_weight_d / r_eff;
  const double cv = config.lookahead_weight_v / r_eff;

  for (int k = 0; k < n; ++k) {
    const size_t sk = static_cast<size_t>(k);
    // (S(k) - R)' Q (S(k) - R)
    const Eigen::Vector3d off = base.dyn.s_const[sk] - config.state_ref;
    const Matrix& m3 = base.dyn.s_coef[sk];
    base.h_cost.noalias() +=
        2.0 * m3.transpose() * config.state_weight * m3;
    base.g_cost.noalias() +=
        2.0 * m3.transpose() * (config.state_weight * off);
    const double state_k0 = off.dot(config.state_weight * off);
    base.c0 += state_k0;
    double k0_total = k == 0 ? state_k0 : 0.0;

    for (const auto& fc : base.forecasts) {
      // Desired-distance term: predecessor position minus the telescoped
      // desired gaps of every vehicle between it and the ego (ego's own gap
      // uses the decision-variable velocity, keeping the term quadratic).
      double inter = 0.0;
      for (const auto& mid : base.forecasts) {
        if (mid.vehicle > fc.vehicle && mid.vehicle < ego) {
          inter += params.tau * mid.velocities(k) + params.d_s + params.l_v;
        }
      }
      const double const_d = fc.positions(k) - inter - params.d_s - params.l_v -
                             (base.dyn.xc[sk] + params.tau * base.dyn.vc[sk]);
      const Eigen::RowVectorXd coef_d =
          -(base.dyn.xg[sk] + params.tau * base.dyn.vg[sk]);
      add_square(base.h_cost, base.g_cost, base.c0, cd, coef_d, const_d);

      const double const_v = fc.velocities(k) - base.dyn.vc[sk];
      const Eigen::RowVectorXd coef_v = -base.dyn.vg[sk];
      add_square(base.h_cost, base.g_cost, base.c0, cv, coef_v, const_v);

      if (k == 0) {
        k0_total += cd * const_d * const_d + cv * const_v * const_v;
      }
    }
    if (k == 0) base.k0_cost = k0_total;
  }
  return base;
}

double emergency_step_bound(const MpcConfig& config,
                            const vehicle::VehicleParams& params) {
  // Valid lower bound on the per-step state cost when delta(k) = 1 forces
  // delta_d(k) <= -d_lower; only usable for diagonal Q.
  const Eigen::Matrix3d& q = config.state_weight;
  const double offdiag = std::abs(q(0, 1)) + std::abs(q(0, 2)) +
                         std::abs(q(1, 0)) + std::abs(q(1, 2)) +
                         std::abs(q(2, 0)) + std::abs(q(2, 1));
  if (offdiag > 1e-15) return 0.0;
  const double dist = std::max(0.0, config.state_ref(0) + params.d_lower);
  return q(0, 0) * dist * dist;
}

struct CandidateKey {
  double objective = std::numeric_limits<double>::infinity();
  int emergency = 0;
  size_t lex = 0;
  int node_rank = 0;

  bool beats(const CandidateKey& other) const {
    if (objective != other.objective) return objective < other.objective;
    if (emergency != other.emergency) return emergency < other.emergency;
    if (lex != other.lex) return lex < other.lex;
    return node_rank < other.node_rank;
  }
};

SmpcResult fallback_result(const vehicle::VehicleState& state0, double u_prev,
                           const Vector& a_pred, const MpcConfig& config,
                           const vehicle::VehicleParams& params) {
  const int n = config.horizon;
  SmpcResult res;
  res.all_infeasible = true;
  res.mode0 = vehicle::Mode::EmergencyBraking;
  res.objective = std::numeric_limits<double>::infinity();
  res.modes.delta.assign(static_cast<size_t>(n), 1);
  res.inputs = Vector::Zero(n);
  double u = u_prev;
  for (int k = 0; k < n; ++k) {
    u = std::max(params.u_min, u + config.t_s * params.u_min);
    res.inputs(k) = u;
  }
  res.u0 = res.inputs(0);

  const Condensed dyn = condense(state0, a_pred, config, params);
  res.planned_states = Matrix::Zero(3, n + 1);
  res.planned_velocities = Vector::Zero(n);
  for (int k = 0; k <= n; ++k) {
    res.planned_states.col(k) =
        dyn.s_const[static_cast<size_t>(k)] +
        dyn.s_coef[static_cast<size_t>(k)] * res.inputs;
    if (k >= 1) {
      res.planned_velocities(k - 1) =
          dyn.vc[static_cast<size_t>(k)] +
          dyn.vg[static_cast<size_t>(k)].dot(res.inputs);
    }
  }
  return res;
}

}  // namespace

std::vector<ModeSequence> enumerate_candidates(const MpcConfig& config) {
  const int n = config.horizon;
  if (n > 12) throw HorizonTooLarge();
  std::vector<ModeSequence> out;
  out.reserve(static_cast<size_t>(1) << n);
  for (size_t m = 0; m < (static_cast<size_t>(1) << n); ++m) {
    ModeSequence seq;
    seq.delta.resize(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
      seq.delta[static_cast<size_t>(k)] =
          static_cast<uint8_t>((m >> (n - 1 - k)) & 1u);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<Scenario> build_scenarios(const PredecessorForecast& forecast,
                                      const MpcConfig& config) {
  std::vector<Scenario> out;
  if (forecast.sigmas.size() == 0 ||
      forecast.sigmas.lpNorm<Eigen::Infinity>() <= 1e-12) {
    out.push_back(Scenario{0, 0.0});
    return out;
  }
  const double n = static_cast<double>(config.horizon);
  const double ln_tail = n * std::log(1.0 / 6.0);
  const double ln_mid = n * std::log(2.0 / 3.0);
  const double floor = std::log(config.chance_floor);
  for (const auto& [node, lp] :
       {std::pair{-1, ln_tail}, std::pair{0, ln_mid}, std::pair{1, ln_tail}}) {
    if (lp >= floor - 1e-12) out.push_back(Scenario{node, lp});
  }
  return out;
}

PredecessorForecast apply_scenario(const PredecessorForecast& forecast,
                                   const Scenario& scenario, double t_s) {
  static const double kSqrt3 = std::sqrt(3.0);
  PredecessorForecast out = forecast;
  const Eigen::Index n = forecast.velocities.size();
  out.velocities =
      forecast.velocities + scenario.node * kSqrt3 * forecast.sigmas;
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    out.positions(k + 1) =
        out.positions(k) +
        0.5 * t_s * (out.velocities(k) + out.velocities(k + 1));
    out.accelerations(k) =
        (out.velocities(k + 1) - out.velocities(k)) / t_s;
  }
  if (n >= 2) {
    out.accelerations(n - 1) = out.accelerations(n - 2);
  } else if (n == 1) {
    out.accelerations(0) = 0.0;
  }
  return out;
}

qp::QuadraticProgram build_qp(const ModeSequence& modes,
                              const Scenario& scenario,
                              const vehicle::VehicleState& state0,
                              double u_prev,
                              const std::vector<PredecessorForecast>& forecasts,
                              const MpcConfig& config,
                              const vehicle::VehicleParams& params) {
  const ScenarioBase base =
      make_scenario_base(scenario, state0, forecasts, config, params);
  return assemble(base, modes, u_prev, config, params);
}

SmpcResult solve_smpc(const vehicle::VehicleState& state0, double u_prev,
                      const std::vector<PredecessorForecast>& forecasts,
                      const MpcConfig& config,
                      const vehicle::VehicleParams& params) {
  const int n = config.horizon;
  const auto candidates = enumerate_candidates(config);

  std::vector<PredecessorForecast> sorted = forecasts;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.vehicle < b.vehicle; });
  const PredecessorForecast& nearest = sorted.back();

  const auto scenarios = build_scenarios(nearest, config);
  if (scenarios.empty()) {
    // Chance constraint filtered everything (p~ too high for a stochastic
    // forecast): no admissible uncertainty trajectory exists.
    return fallback_result(state0, u_prev, nearest.accelerations, config,
                           params);
  }
  std::vector<ScenarioBase> bases;
  bases.reserve(scenarios.size());
  for (const auto& sc : scenarios) {
    bases.push_back(make_scenario_base(sc, state0, sorted, config, params));
  }

  // delta(0) is fixed by the measured state; candidates disagreeing with it
  // have a violated constant row and are infeasible without a solve.
  const double indicator0 = state0.delta_d + params.d_lower;
  const bool allow_emergency0 = indicator0 <= kConsistencyTol;
  const bool allow_free0 = indicator0 >= -kConsistencyTol;

  const double eb_bound = emergency_step_bound(config, params);

  SmpcResult best;
  CandidateKey best_key;
  bool have_best = false;
  qp::QpSolution best_sol;
  int best_base = -1;

  SmpcResult result;
  result.diag.candidates =
      static_cast<int>(candidates.size() * std::max<size_t>(1, bases.size()));

  for (size_t ci = 0; ci < candidates.size(); ++ci) {
    const ModeSequence& modes = candidates[ci];
    const bool d0 = modes.delta[0] == 1;
    if ((d0 && !allow_emergency0) || (!d0 && !allow_free0)) {
      result.diag.infeasible += static_cast<int>(bases.size());
      continue;
    }
    int tail_emergency = 0;
    for (int k = 1; k < n; ++k) tail_emergency += modes.delta[static_cast<size_t>(k)];

    for (size_t si = 0; si < bases.size(); ++si) {
      const ScenarioBase& base = bases[si];
      if (have_best) {
        const double lb =
            base.k0_cost + base.prob_cost + eb_bound * tail_emergency;
        if (lb > best_key.objective) {
          ++result.diag.pruned;
          continue;
        }
      }
      const qp::QuadraticProgram prog =
          assemble(base, modes, u_prev, config, params);
      const qp::QpSolution sol = qp::solve(prog);
      ++result.diag.solved;
      if (sol.status == qp::QpStatus::MaxIter) {
        ++result.diag.maxiter;
        continue;
      }
      if (sol.status != qp::QpStatus::Optimal) {
        ++result.diag.infeasible;
        continue;
      }
      CandidateKey key{sol.objective + base.prob_cost,
                       modes.emergency_count(), ci, static_cast<int>(si)};
      if (!have_best || key.beats(best_key)) {
        have_best = true;
        best_key = key;
        best_sol = sol;
        best.modes = modes;
        best_base = static_cast<int>(si);
      }
    }
  }

  if (!have_best) {
    const Vector& a_pred = bases.front().forecasts.back().accelerations;
    SmpcResult fb = fallback_result(state0, u_prev, a_pred, config, params);
    fb.diag = result.diag;
    return fb;
  }

  const ScenarioBase& wbase = bases[static_cast<size_t>(best_base)];
  best.diag = result.diag;
  best.scenario = wbase.scenario;
  best.objective = best_key.objective;
  best.inputs = best_sol.x;
  best.u0 = best_sol.x(0);
  best.mode0 = best.modes.delta[0] == 1 ? vehicle::Mode::EmergencyBraking
                                        : vehicle::Mode::FreeFollowing;
  best.planned_states = Matrix::Zero(3, n + 1);
  best.planned_velocities = Vector::Zero(n);
  for (int k = 0; k <= n; ++k) {
    best.planned_states.col(k) =
        wbase.dyn.s_const[static_cast<size_t>(k)] +
        wbase.dyn.s_coef[static_cast<size_t>(k)] * best.inputs;
    if (k >= 1) {
      best.planned_velocities(k - 1) =
          wbase.dyn.vc[static_cast<size_t>(k)] +
          wbase.dyn.vg[static_cast<size_t>(k)].dot(best.inputs);
    }
  }
  return best;
}

SmpcResult solve_leader(double v0, double a0, double u_prev,
                        const Vector& v_ref, const MpcConfig& config,
                        const vehicle::VehicleParams& params) {
  const int n = config.horizon;
  vehicle::VehicleState state0;
  state0.a = a0;
  state0.v = v0;
  const Vector a_pred = Vector::Zero(n);  // no predecessor
  const Condensed dyn = condense(state0, a_pred, config, params);

  Matrix h_cost = Matrix::Zero(n, n);
  Vector g_cost = Vector::Zero(n);
  double c0 = 0.0;
  for (int k = 1; k <= n; ++k) {
    add_square(h_cost, g_cost, c0, 1.0, dyn.vg[static_cast<size_t>(k)],
               dyn.vc[static_cast<size_t>(k)] - v_ref(k - 1));
  }

  RowSet rows;
  add_hard_and_comfort_rows(rows, dyn, nullptr, u_prev, config, params);

  qp::QuadraticProgram prog;
  prog.H = h_cost;
  prog.g = g_cost;
  prog.c0 = c0;
  const Eigen::Index m = static_cast<Eigen::Index>(rows.rows.size());
  prog.G.resize(m, n);
  prog.h.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    prog.G.row(i) = rows.rows[static_cast<size_t>(i)];
    prog.h(i) = rows.rhs[static_cast<size_t>(i)];
  }

  const qp::QpSolution sol = qp::solve(prog);
  if (sol.status != qp::QpStatus::Optimal) {
    SmpcResult fb = fallback_result(state0, u_prev, a_pred, config, params);
    fb.mode0 = vehicle::Mode::FreeFollowing;
    return fb;
  }

  SmpcResult res;
  res.diag.candidates = 1;
  res.diag.solved = 1;
  res.objective = sol.objective;
  res.inputs = sol.x;
  res.u0 = sol.x(0);
  res.modes.delta.assign(static_cast<size_t>(n), 0);
  res.planned_states = Matrix::Zero(3, n + 1);
  res.planned_velocities = Vector::Zero(n);
  for (int k = 0; k <= n; ++k) {
    res.planned_states.col(k) = dyn.s_const[static_cast<size_t>(k)] +
                                dyn.s_coef[static_cast<size_t>(k)] * sol.x;
    if (k >= 1) {
      res.planned_velocities(k - 1) =
          dyn.vc[static_cast<size_t>(k)] +
          dyn.vg[static_cast<size_t>(k)].dot(sol.x);
    }
  }
  return res;
}

}  // namespace cacc::smpc
