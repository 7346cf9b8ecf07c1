#include "cacc/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace cacc::io {

namespace {

void put(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

std::string trace_csv(const sim::ScenarioResult& result) {
  std::string out =
      "tick,t_s_elapsed,vehicle,x_m,v_mps,a_mps2,u_mps2,gap_m,desired_gap_m,"
      "mode,n_links_received\n";
  const size_t ticks = result.times.size();
  for (size_t k = 0; k < ticks; ++k) {
    for (size_t i = 0; i < result.traces.size(); ++i) {
      const auto& tr = result.traces[i];
      out += std::to_string(k);
      out += ',';
      put(out, result.times[k]);
      out += ',';
      out += std::to_string(i);
      out += ',';
      put(out, tr.x[k]);
      out += ',';
      put(out, tr.v[k]);
      out += ',';
      put(out, tr.a[k]);
      out += ',';
      put(out, tr.u[k]);
      out += ',';
      put(out, tr.gap[k]);
      out += ',';
      put(out, tr.desired_gap[k]);
      out += ',';
      out += std::to_string(static_cast<int>(tr.mode[k]));
      out += ',';
      out += std::to_string(tr.links_received[k]);
      out += '\n';
    }
  }
  return out;
}

std::string metrics_json(const sim::ScenarioResult& result) {
  nlohmann::ordered_json j;
  j["collision"] = result.collision;
  j["collision_tick"] =
      result.collision ? nlohmann::json(result.collision_tick) : nlohmann::json();
  j["collision_vehicle"] = result.collision
                               ? nlohmann::json(result.collision_vehicle)
                               : nlohmann::json();
  j["emergency_s"] = result.emergency_s;
  j["emergency_total_s"] = result.emergency_total_s;
  nlohmann::ordered_json gaps = nlohmann::ordered_json::array();
  for (size_t i = 0; i < result.min_gap_m.size(); ++i) {
    if (i == 0) {
      gaps.push_back(nullptr);  // the leader has no predecessor
    } else {
      gaps.push_back(result.min_gap_m[i]);
    }
  }
  j["min_gap_m"] = gaps;
  j["fallback_count"] = result.fallback_count;
  j["qp_maxiter_count"] = result.qp_maxiter_count;
  j["qps_solved"] = result.qps_solved;
  j["hard_violations"] = result.hard_violations;
  j["ticks"] = result.times.size();
  return j.dump(2) + "\n";
}

std::string sweep_csv(const std::vector<sim::SweepCell>& cells) {
  std::string out =
      "per,r,trials,mean_emergency_s,std_emergency_s,mean_min_gap_m,"
      "collision_count\n";
  for (const auto& c : cells) {
    put(out, c.per);
    out += ',';
    out += std::to_string(c.r);
    out += ',';
    out += std::to_string(c.trials);
    out += ',';
    put(out, c.mean_emergency_s);
    out += ',';
    put(out, c.std_emergency_s);
    out += ',';
    put(out, c.mean_min_gap_m);
    out += ',';
    out += std::to_string(c.collision_count);
    out += '\n';
  }
  return out;
}

std::string pred_error_csv(const std::vector<sim::PredErrorRow>& rows) {
  std::string out = "horizon_step,source,mean_abs_err_mps,p95_abs_err_mps\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step);
    out += ',';
    out += r.source;
    out += ',';
    put(out, r.mean_abs_err);
    out += ',';
    put(out, r.p95_abs_err);
    out += '\n';
  }
  return out;
}

std::string packet_log_csv(const sim::ScenarioResult& result) {
  std::string out = "tick,time_s,sender,receiver,delivered\n";
  for (const auto& row : result.packet_log) {
    out += std::to_string(row.tick);
    out += ',';
    put(out, row.time_s);
    out += ',';
    out += std::to_string(row.sender);
    out += ',';
    out += std::to_string(row.receiver);
    out += ',';
    out += std::to_string(row.delivered);
    out += '\n';
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fnv1a_hex(std::string_view bytes) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

}  // namespace cacc::io
