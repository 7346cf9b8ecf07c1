#pragma once

#include "cacc/gp.hpp"
#include "cacc/smpc.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

namespace cacc::comms {

using numerics::Vector;

/// The broadcast packet of model-based communication: current kinematics,
/// the 5-sample velocity window, the fitted GP hyperparameters and the
/// MPC-planned future velocities.
struct MbcMessage {
  int sender = 0;
  double send_time = 0.0;
  double position = 0.0;
  double acceleration = 0.0;
  gp::VelocityHistory velocity_history;  // 5 samples
  gp::GpHyperParams gp_params;
  Vector mpc_velocities;  // 7 planned values
};

/// Flat little-endian layout (see README): u32 sender, then f64 fields in
/// declaration order with 5 timestamps, 5 velocities, gamma, gamma_noise and
/// 7 planned velocities.
std::vector<std::uint8_t> serialize(const MbcMessage& msg);
MbcMessage deserialize(const std::vector<std::uint8_t>& bytes);

struct ChannelConfig {
  double per = 0.0;      // packet error rate
  double rate_hz = 10.0; // broadcasts per second, 1/t_c
  std::uint64_t seed = 0;
};

enum class LinkOutcome : uint8_t { Delivered, Lost };

/// Stateless per-link uniform draw in [0, 1): a SplitMix64-style mix of
/// (seed, sender, receiver, tick). Identical across platforms and safe to
/// evaluate in parallel; links not involved in a change keep their streams.
double link_uniform(std::uint64_t seed, int sender, int receiver,
                    std::int64_t tick);

/// Lost with probability per, i.i.d. per link per broadcast.
LinkOutcome transmit(const ChannelConfig& channel, int sender, int receiver,
                     std::int64_t tick);

struct NoPriorContact : std::runtime_error {
  NoPriorContact()
      : std::runtime_error("GP fallback requested before any reception") {}
};

/// Receiver-side book-keeping for one predecessor and the estimator that
/// switches between received MPC forecasts and the stored GP model.
class PredecessorStore {
 public:
  /// Ingests a fresh packet and returns the MPC-sourced forecast: planned
  /// velocities (held at the last value if the horizon outruns them),
  /// trapezoid-integrated positions and finite-difference accelerations.
  smpc::PredecessorForecast on_receive(const MbcMessage& msg, double now,
                                       int horizon, double t_s);

  /// GP fallback from the stored model of the given predecessor, queried at
  /// now + k t_s. Throws NoPriorContact when nothing was ever received.
  smpc::PredecessorForecast on_loss(int predecessor, double now, int horizon,
                                    double t_s) const;

  bool has(int predecessor) const { return stored_.count(predecessor) > 0; }
  const MbcMessage& last_message(int predecessor) const {
    return stored_.at(predecessor).msg;
  }
  /// Ticks since the last reception; 0 immediately after one.
  int staleness_ticks(int predecessor, double now, double t_s) const {
    const double age = now - stored_.at(predecessor).receive_time;
    return static_cast<int>(std::lround(age / t_s));
  }

 private:
  struct Entry {
    MbcMessage msg;
    double receive_time = 0.0;
  };
  std::map<int, Entry> stored_;
};

}  // namespace cacc::comms
