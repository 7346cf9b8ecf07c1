#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cacc/comms.hpp"

#include <cmath>
#include <random>

using namespace cacc::comms;
using cacc::gp::GpHyperParams;
using cacc::gp::VelocityHistory;
using cacc::numerics::Vector;
using cacc::smpc::ForecastSource;

namespace {

MbcMessage sample_message(int sender, double t0, double v0) {
  MbcMessage msg;
  msg.sender = sender;
  msg.send_time = t0;
  msg.position = 120.0;
  msg.acceleration = -0.25;
  msg.velocity_history.times.resize(5);
  msg.velocity_history.velocities.resize(5);
  for (int i = 0; i < 5; ++i) {
    msg.velocity_history.times(i) = t0 - 0.1 * (4 - i);
    msg.velocity_history.velocities(i) = v0;
  }
  msg.gp_params = GpHyperParams{0.7, 0.05};
  msg.mpc_velocities = Vector::Constant(7, v0);
  return msg;
}

}  // namespace

TEST_CASE("message serialization round trip") {
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int trial = 0; trial < 20; ++trial) {
    MbcMessage msg = sample_message(static_cast<int>(rng() % 10), u(rng), 25.0);
    for (int i = 0; i < 5; ++i) msg.velocity_history.velocities(i) = u(rng);
    for (int i = 0; i < 7; ++i) msg.mpc_velocities(i) = u(rng);
    msg.position = u(rng);
    msg.acceleration = u(rng);
    msg.gp_params.gamma = std::abs(u(rng)) + 0.1;
    msg.gp_params.gamma_noise = std::abs(u(rng)) * 0.01 + 0.001;

    const auto bytes = serialize(msg);
    CHECK(bytes.size() == 4u + 8u * 22u);
    const MbcMessage back = deserialize(bytes);
    CHECK(back.sender == msg.sender);
    CHECK(back.send_time == msg.send_time);
    CHECK(back.position == msg.position);
    CHECK(back.acceleration == msg.acceleration);
    CHECK((back.velocity_history.times - msg.velocity_history.times)
              .lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((back.velocity_history.velocities - msg.velocity_history.velocities)
              .lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(back.gp_params.gamma == msg.gp_params.gamma);
    CHECK(back.gp_params.gamma_noise == msg.gp_params.gamma_noise);
    CHECK((back.mpc_velocities - msg.mpc_velocities).lpNorm<Eigen::Infinity>() ==
          0.0);
  }
}

TEST_CASE("serialization insists on the fixed layout") {
  MbcMessage msg = sample_message(1, 0.0, 20.0);
  msg.mpc_velocities = Vector::Constant(5, 20.0);
  CHECK_THROWS_AS(serialize(msg), std::invalid_argument);
}

TEST_CASE("degenerate packet error rates") {
  const ChannelConfig ideal{0.0, 10.0, 99};
  const ChannelConfig dead{1.0, 10.0, 99};
  for (int tick = 1; tick <= 200; ++tick) {
    CHECK(transmit(ideal, 0, 1, tick) == LinkOutcome::Delivered);
    CHECK(transmit(dead, 0, 1, tick) == LinkOutcome::Lost);
  }
}

TEST_CASE("loss frequency matches the configured rate") {
  const ChannelConfig half{0.5, 10.0, 7};
  int delivered = 0;
  for (int tick = 1; tick <= 10000; ++tick) {
    if (transmit(half, 2, 3, tick) == LinkOutcome::Delivered) ++delivered;
  }
  CHECK(delivered >= 4800);
  CHECK(delivered <= 5200);
}

TEST_CASE("link streams are reproducible and distinct") {
  CHECK(link_uniform(42, 0, 1, 17) == link_uniform(42, 0, 1, 17));
  CHECK(link_uniform(42, 0, 1, 17) != link_uniform(42, 0, 2, 17));
  CHECK(link_uniform(42, 0, 1, 17) != link_uniform(42, 1, 0, 17));
  CHECK(link_uniform(42, 0, 1, 17) != link_uniform(43, 0, 1, 17));
  CHECK(link_uniform(42, 0, 1, 17) != link_uniform(42, 0, 1, 18));
  // Pinned values guard the documented stream against accidental change.
  CHECK(link_uniform(1, 0, 1, 1) == doctest::Approx(0.50751068941437227).epsilon(1e-12));
  CHECK(link_uniform(1, 0, 1, 2) == doctest::Approx(0.89374377671782068).epsilon(1e-12));
}

TEST_CASE("reception builds the MPC-sourced forecast") {
  PredecessorStore store;
  MbcMessage msg = sample_message(0, 1.0, 20.0);
  msg.position = 100.0;
  const auto fc = store.on_receive(msg, 1.0, 7, 0.1);
  CHECK(fc.source == ForecastSource::ReceivedMpc);
  CHECK(fc.vehicle == 0);
  CHECK(fc.sigmas.lpNorm<Eigen::Infinity>() == 0.0);
  for (int k = 0; k < 7; ++k) {
    CHECK(fc.velocities(k) == doctest::Approx(20.0));
    CHECK(fc.positions(k) == doctest::Approx(100.0 + 2.0 * k));
  }
  CHECK(store.staleness_ticks(0, 1.0, 0.1) == 0);
}

TEST_CASE("horizon padding holds the last planned value") {
  PredecessorStore store;
  MbcMessage msg = sample_message(0, 0.0, 20.0);
  for (int i = 0; i < 7; ++i) msg.mpc_velocities(i) = 20.0 + i;
  const auto same = store.on_receive(msg, 0.0, 7, 0.1);
  CHECK(same.velocities(6) == doctest::Approx(26.0));
  const auto padded = store.on_receive(msg, 0.0, 9, 0.1);
  CHECK(padded.velocities(7) == doctest::Approx(26.0));
  CHECK(padded.velocities(8) == doctest::Approx(26.0));
}

TEST_CASE("a decelerating plan yields concave positions and negative accelerations") {
  PredecessorStore store;
  MbcMessage msg = sample_message(0, 0.0, 27.0);
  for (int i = 0; i < 7; ++i) msg.mpc_velocities(i) = 27.0 - 4.0 * i * 0.1;
  const auto fc = store.on_receive(msg, 0.0, 7, 0.1);
  for (int k = 0; k + 1 < 7; ++k) {
    CHECK(fc.accelerations(k) < 0.0);
  }
  for (int k = 0; k + 2 < 7; ++k) {
    const double d1 = fc.positions(k + 1) - fc.positions(k);
    const double d2 = fc.positions(k + 2) - fc.positions(k + 1);
    CHECK(d2 < d1);
  }
}

TEST_CASE("loss without prior contact aborts") {
  PredecessorStore store;
  CHECK_THROWS_AS(store.on_loss(3, 0.0, 7, 0.1), NoPriorContact);
}

TEST_CASE("fresh GP fallback stays close to the received forecast") {
  PredecessorStore store;
  MbcMessage msg = sample_message(0, 1.0, 22.0);
  const auto received = store.on_receive(msg, 1.0, 7, 0.1);
  const auto fallback = store.on_loss(0, 1.0, 7, 0.1);
  CHECK(fallback.source == ForecastSource::GpPredicted);
  // Constant history, staleness zero: the GP mean at observed times matches
  // the stored velocities within a noise-scale error.
  CHECK(std::abs(fallback.velocities(0) - received.velocities(0)) <= 0.5);
  CHECK(fallback.sigmas.minCoeff() >= 0.0);
}

TEST_CASE("stored-model predictions match the history at its own timestamps") {
  // As in simulation use, the sender fits before broadcasting; the fitted
  // noise scale bounds the residual at the observed timestamps.
  PredecessorStore store;
  MbcMessage msg = sample_message(0, 1.0, 22.0);
  msg.gp_params = cacc::gp::fit(msg.velocity_history, GpHyperParams{});
  store.on_receive(msg, 1.0, 7, 0.1);
  const auto pred = cacc::gp::predict(msg.velocity_history, msg.gp_params,
                                      msg.velocity_history.times);
  const double tol = 3.0 * std::max(msg.gp_params.gamma_noise, 0.01);
  for (int i = 0; i < 5; ++i) {
    CHECK(std::abs(pred.mean(i) - msg.velocity_history.velocities(i)) <= tol);
  }
}

TEST_CASE("uncertainty grows with staleness") {
  PredecessorStore store;
  MbcMessage msg = sample_message(0, 1.0, 22.0);
  store.on_receive(msg, 1.0, 7, 0.1);
  const auto fresh = store.on_loss(0, 1.0, 7, 0.1);
  const auto stale = store.on_loss(0, 1.5, 7, 0.1);
  const auto staler = store.on_loss(0, 2.5, 7, 0.1);
  CHECK(stale.sigmas(0) >= fresh.sigmas(0) - 1e-12);
  CHECK(staler.sigmas(0) >= stale.sigmas(0) - 1e-12);
  CHECK(store.staleness_ticks(0, 2.5, 0.1) == 15);
}

TEST_CASE("long outages decay the forecast toward the zero-mean prior") {
  PredecessorStore store;
  MbcMessage msg = sample_message(0, 0.0, 22.0);
  msg.gp_params = GpHyperParams{0.5, 0.05};
  store.on_receive(msg, 0.0, 7, 0.1);
  const auto far = store.on_loss(0, 30.0, 7, 0.1);
  CHECK(far.velocities.lpNorm<Eigen::Infinity>() <= 0.1);
  CHECK(far.sigmas.minCoeff() >= 0.9);  // prior std is 1
}
