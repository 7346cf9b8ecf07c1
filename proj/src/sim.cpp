#include "cacc/sim.hpp"

#include "cacc/gp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace cacc::sim {

namespace {

using numerics::Vector;

constexpr Eigen::Index kHistoryLen = 5;
constexpr Eigen::Index kMessagePlanLen = 7;

struct VehicleRuntime {
  vehicle::VehicleState state;
  double u_prev = 0.0;
  gp::VelocityHistory history;
  gp::GpHyperParams hyper;
  Vector plan;  // planned v(1..N) from the previous solve
  comms::PredecessorStore store;
};

struct PendingSample {
  int target_tick;
  int predecessor;
  int step;
  double predicted;
};

Vector plan_to_message(const Vector& plan) {
  Vector out(kMessagePlanLen);
  const Eigen::Index n = plan.size();
  for (Eigen::Index j = 0; j < kMessagePlanLen; ++j) {
    out(j) = plan(std::min(j, n - 1));
  }
  return out;
}

}  // namespace

void validate(const ScenarioConfig& config) {
  if (config.n_vehicles < 2) throw ConfigError("n_vehicles must be >= 2");
  if (config.duration_s <= 0.0) throw ConfigError("duration_s must be > 0");
  if (config.t_s <= 0.0) throw ConfigError("t_s must be > 0");
  if (std::abs(1.0 / config.rate_hz - config.t_s) > 1e-9) {
    throw ConfigError("communication rate must equal 1/t_s");
  }
  if (config.per < 0.0 || config.per > 1.0) {
    throw ConfigError("per must lie in [0, 1]");
  }
  if (config.lookahead < 1) throw ConfigError("lookahead must be >= 1");
  if (config.mpc.horizon < 1) throw ConfigError("horizon must be >= 1");
  if (config.mpc.horizon > 12) throw ConfigError("horizon must be <= 12");
  if (config.mpc.chance_floor <= 0.0 || config.mpc.chance_floor > 1.0) {
    throw ConfigError("chance_floor must lie in (0, 1]");
  }
  if (config.mpc.prob_weight < 0.0) throw ConfigError("prob_weight must be >= 0");
  if (config.mpc.lookahead_weight_d < 0.0 || config.mpc.lookahead_weight_v < 0.0) {
    throw ConfigError("look-ahead weights must be >= 0");
  }
  if (config.initial_speed < 0.0 || config.initial_speed > config.params.v_max) {
    throw ConfigError("initial_speed must lie in [0, v_max]");
  }
  if (config.params.tau <= 0.0 || config.params.f <= 0.0) {
    throw ConfigError("tau and f must be > 0");
  }
  if (config.params.a_min >= 0.0 || config.params.a_max <= 0.0) {
    throw ConfigError("a_min < 0 < a_max required");
  }
  if (config.params.d_lower <= 0.0) throw ConfigError("d_lower must be > 0");
}

double leader_reference(double t) {
  if (t < 15.0) return 27.0;
  if (t < 30.0) return 0.0;
  return 25.0;
}

ScenarioResult run_scenario(const ScenarioConfig& config) {
  validate(config);

  const int v_count = config.n_vehicles;
  const int n = config.mpc.horizon;
  const double ts = config.t_s;
  const int last_tick = static_cast<int>(std::lround(config.duration_s / ts));

  smpc::MpcConfig mpc = config.mpc;
  mpc.t_s = ts;
  mpc.lookahead = config.lookahead;

  const comms::ChannelConfig channel{config.per, config.rate_hz, config.seed};

  ScenarioResult result;
  result.config = config;
  result.traces.resize(v_count);
  result.emergency_s.assign(v_count, 0.0);
  result.min_gap_m.assign(v_count, std::numeric_limits<double>::infinity());
  result.gp_abs_err.resize(n);
  result.mpc_abs_err.resize(n);

  std::vector<VehicleRuntime> cars(v_count);
  for (int i = 0; i < v_count; ++i) {
    auto& car = cars[i];
    car.state.v = config.initial_speed;
    car.state.a = 0.0;
    const double spacing =
        vehicle::desired_gap(config.initial_speed, config.params) +
        config.params.l_v;
    car.state.x = -static_cast<double>(i) * spacing;
    car.state.delta_d = 0.0;
    car.state.delta_v = 0.0;
    car.history.times.resize(kHistoryLen);
    car.history.velocities.resize(kHistoryLen);
    for (Eigen::Index j = 0; j < kHistoryLen; ++j) {
      car.history.times(j) = -(kHistoryLen - 1 - j) * ts;
      car.history.velocities(j) = config.initial_speed;
    }
    car.plan = Vector::Constant(n, config.initial_speed);
  }

  std::vector<PendingSample> gp_pending;
  std::vector<PendingSample> mpc_pending;

  std::vector<comms::MbcMessage> messages(v_count);
  std::vector<std::vector<smpc::PredecessorForecast>> forecasts(v_count);
  std::vector<double> u_now(v_count, 0.0);
  std::vector<vehicle::Mode> mode_now(v_count, vehicle::Mode::FreeFollowing);
  std::vector<int> rx_now(v_count, 0);

  for (int tick = 0; tick <= last_tick; ++tick) {
    const double t = tick * ts;

    // (1) Broadcast formation: per-vehicle GP fit on the own history plus the
    // previously solved plan.
    for (int i = 0; i < v_count; ++i) {
      auto& car = cars[i];
      if (tick > 0) {
        for (Eigen::Index j = 0; j + 1 < kHistoryLen; ++j) {
          car.history.times(j) = car.history.times(j + 1);
          car.history.velocities(j) = car.history.velocities(j + 1);
        }
        car.history.times(kHistoryLen - 1) = t;
        car.history.velocities(kHistoryLen - 1) = car.state.v;
      }
      car.hyper = gp::fit(car.history, car.hyper);
      messages[i] = comms::MbcMessage{i,
                                      t,
                                      car.state.x,
                                      car.state.a,
                                      car.history,
                                      car.hyper,
                                      plan_to_message(car.plan)};
    }

    // (2) Channel draws and receiver-side estimation. Tick 0 is the
    // initialization handshake and always delivers.
    for (int i = 1; i < v_count; ++i) {
      auto& car = cars[i];
      forecasts[i].clear();
      rx_now[i] = 0;
      const int first = std::max(0, i - config.lookahead);
      for (int s = first; s < i; ++s) {
        const bool delivered =
            tick == 0 || comms::transmit(channel, s, i, tick) ==
                             comms::LinkOutcome::Delivered;
        if (delivered) {
          forecasts[i].push_back(car.store.on_receive(messages[s], t, n, ts));
          ++rx_now[i];
          // A fresh plan is the only point where a full MPC-sourced
          // prediction horizon exists; log its per-step errors here.
          for (Eigen::Index j = 0; j < kMessagePlanLen; ++j) {
            const int target = tick + static_cast<int>(j) + 1;
            const int step = static_cast<int>(j) + 1;
            if (target <= last_tick && step <= n) {
              mpc_pending.push_back(
                  PendingSample{target, s, step, messages[s].mpc_velocities(j)});
            }
          }
        } else {
          forecasts[i].push_back(car.store.on_loss(s, t, n, ts));
          ++result.gp_source_forecasts;
        }
        if (config.log_packets) {
          result.packet_log.push_back(
              PacketLogRow{tick, t, s, i, delivered ? 1 : 0});
        }
        // GP-source samples every tick from the stored (possibly stale)
        // model, mirroring what the receiver would predict on loss.
        Vector query(n);
        for (int h = 1; h <= n; ++h) query(h - 1) = t + h * ts;
        const auto& stored = car.store.last_message(s);
        const gp::GpPrediction pred =
            gp::predict(stored.velocity_history, stored.gp_params, query);
        for (int h = 1; h <= n; ++h) {
          const int target = tick + h;
          if (target <= last_tick) {
            gp_pending.push_back(PendingSample{target, s, h, pred.mean(h - 1)});
          }
        }
      }
    }

    // (3) Controls. Vehicles read this tick's forecasts and the ground-truth
    // gap and closing rate measured on board.
    {
      Vector ref(n);
      for (int h = 1; h <= n; ++h) ref(h - 1) = leader_reference(t + h * ts);
      const auto res = smpc::solve_leader(cars[0].state.v, cars[0].state.a,
                                          cars[0].u_prev, ref, mpc,
                                          config.params);
      u_now[0] = res.u0;
      mode_now[0] = vehicle::Mode::FreeFollowing;
      cars[0].plan = res.planned_velocities;
      if (res.all_infeasible) ++result.fallback_count;
      result.qps_solved += res.diag.solved;
      result.qp_maxiter_count += res.diag.maxiter;
    }
    for (int i = 1; i < v_count; ++i) {
      auto& car = cars[i];
      const auto& lead = cars[i - 1].state;
      vehicle::VehicleState s0 = car.state;
      const double true_gap = vehicle::gap(lead.x, car.state.x, config.params.l_v);
      s0.delta_d = true_gap - vehicle::desired_gap(car.state.v, config.params);
      s0.delta_v = lead.v - car.state.v;
      car.state.delta_d = s0.delta_d;
      car.state.delta_v = s0.delta_v;

      const auto res =
          smpc::solve_smpc(s0, car.u_prev, forecasts[i], mpc, config.params);
      u_now[i] = res.u0;
      mode_now[i] = res.mode0;
      car.plan = res.planned_velocities;
      if (res.all_infeasible) ++result.fallback_count;
      result.qps_solved += res.diag.solved;
      result.qp_maxiter_count += res.diag.maxiter;
    }

    // (4) Trace row, metrics, collision detection.
    result.times.push_back(t);
    bool collided = false;
    for (int i = 0; i < v_count; ++i) {
      auto& tr = result.traces[i];
      const auto& st = cars[i].state;
      double g = std::numeric_limits<double>::quiet_NaN();
      if (i > 0) {
        g = vehicle::gap(cars[i - 1].state.x, st.x, config.params.l_v);
        result.min_gap_m[i] = std::min(result.min_gap_m[i], g);
      }
      tr.x.push_back(st.x);
      tr.v.push_back(st.v);
      tr.a.push_back(st.a);
      tr.u.push_back(u_now[i]);
      tr.gap.push_back(g);
      tr.desired_gap.push_back(vehicle::desired_gap(st.v, config.params));
      tr.mode.push_back(static_cast<uint8_t>(mode_now[i]));
      tr.links_received.push_back(i == 0 ? 0 : rx_now[i]);
      if (mode_now[i] == vehicle::Mode::EmergencyBraking) {
        result.emergency_s[i] += ts;
      }
      if (!vehicle::check_hard(st, u_now[i], config.params).empty()) {
        ++result.hard_violations;
      }
      if (i > 0 && g <= 0.0) {
        result.collision = true;
        result.collision_tick = tick;
        result.collision_vehicle = i;
        collided = true;
      }
    }
    if (collided) break;

    // (5) Synchronous ground-truth step; velocities saturate at standstill.
    if (tick < last_tick) {
      for (int i = 0; i < v_count; ++i) {
        auto& st = cars[i].state;
        const double new_x = st.x + ts * st.v;
        const double new_v = std::max(0.0, st.v + ts * st.a);
        const double new_a = st.a + ts * config.params.f * (u_now[i] - st.a);
        st.x = new_x;
        st.v = new_v;
        st.a = new_a;
        cars[i].u_prev = u_now[i];
      }
    }
  }

  // Resolve prediction samples against the recorded ground truth.
  const int recorded = static_cast<int>(result.times.size());
  for (const auto& s : gp_pending) {
    if (s.target_tick < recorded) {
      const double truth = result.traces[s.predecessor].v[s.target_tick];
      result.gp_abs_err[s.step - 1].push_back(std::abs(s.predicted - truth));
    }
  }
  for (const auto& s : mpc_pending) {
    if (s.target_tick < recorded) {
      const double truth = result.traces[s.predecessor].v[s.target_tick];
      result.mpc_abs_err[s.step - 1].push_back(std::abs(s.predicted - truth));
    }
  }

  for (double e : result.emergency_s) result.emergency_total_s += e;
  return result;
}

std::vector<PredErrorRow> prediction_error_stats(const ScenarioResult& result) {
  std::vector<PredErrorRow> rows;
  const auto stats = [&](const std::vector<std::vector<double>>& buckets,
                         const std::string& source) {
    for (size_t k = 0; k < buckets.size(); ++k) {
      std::vector<double> errs = buckets[k];
      if (errs.empty()) {
        throw EmptySample("no " + source + " prediction samples at step " +
                          std::to_string(k + 1));
      }
      std::sort(errs.begin(), errs.end());
      double sum = 0.0;
      for (double e : errs) sum += e;
      const size_t rank =
          static_cast<size_t>(std::ceil(0.95 * static_cast<double>(errs.size())));
      rows.push_back(PredErrorRow{static_cast<int>(k + 1), source,
                                  sum / static_cast<double>(errs.size()),
                                  errs[std::max<size_t>(rank, 1) - 1],
                                  errs.size()});
    }
  };
  stats(result.gp_abs_err, "gp");
  stats(result.mpc_abs_err, "mpc");
  return rows;
}

std::uint64_t trial_seed(std::uint64_t base_seed, int trial) {
  // SplitMix-style sequence; independent of per and r so coinciding links
  // reuse loss streams across sweep cells.
  std::uint64_t z = base_seed + 0x9e3779b97f4a7c15ULL *
                                    (static_cast<std::uint64_t>(trial) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<SweepCell> run_sweep(const ScenarioConfig& base,
                                 const std::vector<double>& pers,
                                 const std::vector<int>& rs, int trials,
                                 int jobs) {
  if (trials < 1) throw ConfigError("trials must be >= 1");
  struct Task {
    size_t cell;
    int trial;
  };
  const size_t n_cells = pers.size() * rs.size();
  std::vector<Task> tasks;
  tasks.reserve(n_cells * static_cast<size_t>(trials));
  for (size_t c = 0; c < n_cells; ++c) {
    for (int k = 0; k < trials; ++k) tasks.push_back(Task{c, k});
  }

  struct TrialOutcome {
    double emergency = 0.0;
    double min_gap = 0.0;
    bool collision = false;
  };
  std::vector<TrialOutcome> outcomes(tasks.size());

  std::atomic<size_t> next{0};
  const auto worker = [&]() {
    while (true) {
      const size_t idx = next.fetch_add(1);
      if (idx >= tasks.size()) return;
      const Task task = tasks[idx];
      ScenarioConfig cfg = base;
      cfg.per = pers[task.cell / rs.size()];
      cfg.lookahead = rs[task.cell % rs.size()];
      cfg.seed = trial_seed(base.seed, task.trial);
      cfg.log_packets = false;
      const ScenarioResult res = run_scenario(cfg);
      double min_gap = std::numeric_limits<double>::infinity();
      for (size_t i = 1; i < res.min_gap_m.size(); ++i) {
        min_gap = std::min(min_gap, res.min_gap_m[i]);
      }
      outcomes[idx] =
          TrialOutcome{res.emergency_total_s, min_gap, res.collision};
    }
  };

  const int pool = std::max(1, jobs);
  if (pool == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(pool));
    for (int i = 0; i < pool; ++i) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }

  std::vector<SweepCell> cells;
  cells.reserve(n_cells);
  for (size_t c = 0; c < n_cells; ++c) {
    SweepCell cell;
    cell.per = pers[c / rs.size()];
    cell.r = rs[c % rs.size()];
    cell.trials = trials;
    cell.collision_count = 0;
    cell.worst_min_gap_m = std::numeric_limits<double>::infinity();
    double sum_e = 0.0, sum_g = 0.0;
    for (int k = 0; k < trials; ++k) {
      const auto& o = outcomes[c * static_cast<size_t>(trials) +
                               static_cast<size_t>(k)];
      cell.trial_emergency_s.push_back(o.emergency);
      sum_e += o.emergency;
      sum_g += o.min_gap;
      cell.worst_min_gap_m = std::min(cell.worst_min_gap_m, o.min_gap);
      if (o.collision) ++cell.collision_count;
    }
    cell.mean_emergency_s = sum_e / trials;
    cell.mean_min_gap_m = sum_g / trials;
    double var = 0.0;
    for (double e : cell.trial_emergency_s) {
      var += (e - cell.mean_emergency_s) * (e - cell.mean_emergency_s);
    }
    cell.std_emergency_s = trials > 1 ? std::sqrt(var / (trials - 1)) : 0.0;
    cells.push_back(std::move(cell));
  }
  return cells;
}

}  // namespace cacc::sim
