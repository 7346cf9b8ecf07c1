#include "cacc/comms.hpp"

#include <bit>
#include <cstring>

namespace cacc::comms {

namespace {

constexpr Eigen::Index kHistoryLen = 5;
constexpr Eigen::Index kPlanLen = 7;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, size_t& pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in.at(pos++)) << (8 * i);
  return v;
}

double get_f64(const std::vector<std::uint8_t>& in, size_t& pos) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in.at(pos++)) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::vector<std::uint8_t> serialize(const MbcMessage& msg) {
  if (msg.velocity_history.size() != kHistoryLen ||
      msg.mpc_velocities.size() != kPlanLen) {
    throw std::invalid_argument("MbcMessage carries 5 samples and 7 planned velocities");
  }
  std::vector<std::uint8_t> out;
  out.reserve(4 + 8 * (3 + 2 * kHistoryLen + 2 + kPlanLen));
  put_u32(out, static_cast<std::uint32_t>(msg.sender));
  put_f64(out, msg.send_time);
  put_f64(out, msg.position);
  put_f64(out, msg.acceleration);
  for (Eigen::Index i = 0; i < kHistoryLen; ++i) put_f64(out, msg.velocity_history.times(i));
  for (Eigen::Index i = 0; i < kHistoryLen; ++i) put_f64(out, msg.velocity_history.velocities(i));
  put_f64(out, msg.gp_params.gamma);
  put_f64(out, msg.gp_params.gamma_noise);
  for (Eigen::Index i = 0; i < kPlanLen; ++i) put_f64(out, msg.mpc_velocities(i));
  return out;
}

MbcMessage deserialize(const std::vector<std::uint8_t>& bytes) {
  size_t pos = 0;
  MbcMessage msg;
  msg.sender = static_cast<int>(get_u32(bytes, pos));
  msg.send_time = get_f64(bytes, pos);
  msg.position = get_f64(bytes, pos);
  msg.acceleration = get_f64(bytes, pos);
  msg.velocity_history.times.resize(kHistoryLen);
  msg.velocity_history.velocities.resize(kHistoryLen);
  for (Eigen::Index i = 0; i < kHistoryLen; ++i) msg.velocity_history.times(i) = get_f64(bytes, pos);
  for (Eigen::Index i = 0; i < kHistoryLen; ++i) msg.velocity_history.velocities(i) = get_f64(bytes, pos);
  msg.gp_params.gamma = get_f64(bytes, pos);
  msg.gp_params.gamma_noise = get_f64(bytes, pos);
  msg.mpc_velocities.resize(kPlanLen);
  for (Eigen::Index i = 0; i < kPlanLen; ++i) msg.mpc_velocities(i) = get_f64(bytes, pos);
  return msg;
}

double link_uniform(std::uint64_t seed, int sender, int receiver,
                    std::int64_t tick) {
  std::uint64_t h = mix(seed);
  h = mix(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(sender)));
  h = mix(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(receiver)));
  h = mix(h ^ static_cast<std::uint64_t>(tick));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

LinkOutcome transmit(const ChannelConfig& channel, int sender, int receiver,
                     std::int64_t tick) {
  const double u = link_uniform(channel.seed, sender, receiver, tick);
  return u < channel.per ? LinkOutcome::Lost : LinkOutcome::Delivered;
}

smpc::PredecessorForecast PredecessorStore::on_receive(const MbcMessage& msg,
                                                       double now, int horizon,
                                                       double t_s) {
  stored_[msg.sender] = Entry{msg, now};

  smpc::PredecessorForecast fc;
  fc.vehicle = msg.sender;
  fc.source = smpc::ForecastSource::ReceivedMpc;
  fc.velocities.resize(horizon);
  fc.positions.resize(horizon);
  fc.accelerations.resize(horizon);
  fc.sigmas = Vector::Zero(horizon);

  const Eigen::Index have = msg.mpc_velocities.size();
  for (int k = 0; k < horizon; ++k) {
    fc.velocities(k) = msg.mpc_velocities(std::min<Eigen::Index>(k, have - 1));
  }
  fc.positions(0) = msg.position;
  for (int k = 0; k + 1 < horizon; ++k) {
    fc.positions(k + 1) =
        fc.positions(k) + 0.5 * t_s * (fc.velocities(k) + fc.velocities(k + 1));
    fc.accelerations(k) = (fc.velocities(k + 1) - fc.velocities(k)) / t_s;
  }
  if (horizon >= 2) {
    fc.accelerations(horizon - 1) = fc.accelerations(horizon - 2);
  } else {
    fc.accelerations(0) = 0.0;
  }
  return fc;
}

smpc::PredecessorForecast PredecessorStore::on_loss(int predecessor, double now,
                                                    int horizon,
                                                    double t_s) const {
  const auto it = stored_.find(predecessor);
  if (it == stored_.end()) throw NoPriorContact();
  const MbcMessage& msg = it->second.msg;

  Vector query(horizon);
  for (int k = 0; k < horizon; ++k) query(k) = now + k * t_s;
  const gp::GpPrediction pred =
      gp::predict(msg.velocity_history, msg.gp_params, query);

  smpc::PredecessorForecast fc;
  fc.vehicle = predecessor;
  fc.source = smpc::ForecastSource::GpPredicted;
  fc.velocities = pred.mean;
  fc.sigmas = pred.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  fc.positions.resize(horizon);
  fc.accelerations.resize(horizon);
  for (int k = 0; k < horizon; ++k) {
    fc.positions(k) = gp::predict_position(msg.position, msg.send_time,
                                           msg.velocity_history, msg.gp_params,
                                           query(k));
  }
  for (int k = 0; k + 1 < horizon; ++k) {
    fc.accelerations(k) = (fc.velocities(k + 1) - fc.velocities(k)) / t_s;
  }
  if (horizon >= 2) {
    fc.accelerations(horizon - 1) = fc.accelerations(horizon - 2);
  } else {
    fc.accelerations(0) = 0.0;
  }
  return fc;
}

}  // namespace cacc::comms
