#include "cacc/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace cacc::config {

namespace {

using sim::ConfigError;

struct RawValue {
  std::string text;
  int line = 0;
};

using Section = std::map<std::string, RawValue>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& name, int line, const std::string& what) {
  throw ConfigError(name + ":" + std::to_string(line) + ": " + what);
}

double parse_number(const std::string& name, int line, const std::string& text) {
  try {
    size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) fail(name, line, "trailing characters in number '" + text + "'");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    fail(name, line, "expected a number, got '" + text + "'");
  }
}

std::vector<double> parse_list(const std::string& name, int line,
                               const std::string& text) {
  if (text.size() < 2 || text.front() != '[' || text.back() != ']') {
    fail(name, line, "expected a list like [a, b, c]");
  }
  std::vector<double> out;
  std::string inner = text.substr(1, text.size() - 2);
  std::stringstream ss(inner);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) fail(name, line, "empty list element");
    out.push_back(parse_number(name, line, item));
  }
  if (out.empty()) fail(name, line, "list must not be empty");
  return out;
}

class Reader {
 public:
  Reader(std::map<std::string, Section> sections, std::string name)
      : sections_(std::move(sections)), name_(std::move(name)) {}

  bool has(const std::string& sec, const std::string& key) const {
    const auto it = sections_.find(sec);
    return it != sections_.end() && it->second.count(key) > 0;
  }

  double number(const std::string& sec, const std::string& key, double dflt) {
    const RawValue* raw = take(sec, key);
    return raw ? parse_number(name_, raw->line, raw->text) : dflt;
  }

  int integer(const std::string& sec, const std::string& key, int dflt) {
    const RawValue* raw = take(sec, key);
    if (!raw) return dflt;
    const double v = parse_number(name_, raw->line, raw->text);
    if (v != std::floor(v)) fail(name_, raw->line, key + " must be an integer");
    return static_cast<int>(v);
  }

  std::uint64_t u64(const std::string& sec, const std::string& key,
                    std::uint64_t dflt) {
    const RawValue* raw = take(sec, key);
    if (!raw) return dflt;
    std::uint64_t v = 0;
    const auto res =
        std::from_chars(raw->text.data(), raw->text.data() + raw->text.size(), v);
    if (res.ec != std::errc{} || res.ptr != raw->text.data() + raw->text.size()) {
      fail(name_, raw->line, key + " must be an unsigned integer");
    }
    return v;
  }

  std::vector<double> list(const std::string& sec, const std::string& key,
                           std::vector<double> dflt) {
    const RawValue* raw = take(sec, key);
    return raw ? parse_list(name_, raw->line, raw->text) : std::move(dflt);
  }

  void finish() const {
    for (const auto& [sec, kv] : sections_) {
      for (const auto& [key, raw] : kv) {
        if (!consumed_.count(sec + "." + key)) {
          fail(name_, raw.line, "unknown key '" + key + "' in [" + sec + "]");
        }
      }
    }
  }

 private:
  const RawValue* take(const std::string& sec, const std::string& key) {
    consumed_.insert(sec + "." + key);
    const auto it = sections_.find(sec);
    if (it == sections_.end()) return nullptr;
    const auto kt = it->second.find(key);
    return kt == it->second.end() ? nullptr : &kt->second;
  }

  std::map<std::string, Section> sections_;
  std::string name_;
  std::set<std::string> consumed_;
};

std::map<std::string, Section> tokenize(const std::string& text,
                                        const std::string& name) {
  static const std::set<std::string> kKnown = {"scenario", "vehicle", "mpc",
                                               "channel", "sweep"};
  std::map<std::string, Section> sections;
  std::istringstream in(text);
  std::string line;
  std::string current;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(name, lineno, "unterminated section header");
      current = trim(line.substr(1, line.size() - 2));
      if (!kKnown.count(current)) fail(name, lineno, "unknown section [" + current + "]");
      sections[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(name, lineno, "expected key = value");
    if (current.empty()) fail(name, lineno, "key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) fail(name, lineno, "empty key or value");
    if (sections[current].count(key)) fail(name, lineno, "duplicate key '" + key + "'");
    sections[current][key] = RawValue{value, lineno};
  }
  return sections;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

FileConfig parse_config_text(const std::string& text, const std::string& name) {
  Reader r(tokenize(text, name), name);
  FileConfig out;
  auto& sc = out.scenario;

  sc.n_vehicles = r.integer("scenario", "n_vehicles", sc.n_vehicles);
  sc.duration_s = r.number("scenario", "duration_s", sc.duration_s);
  sc.t_s = r.number("scenario", "t_s", sc.t_s);
  sc.lookahead = r.integer("scenario", "lookahead", sc.lookahead);
  sc.seed = r.u64("scenario", "seed", sc.seed);
  sc.initial_speed = r.number("scenario", "initial_speed_mps", sc.initial_speed);

  auto& vp = sc.params;
  vp.tau = r.number("vehicle", "tau_s", vp.tau);
  vp.d_s = r.number("vehicle", "standstill_m", vp.d_s);
  vp.l_v = r.number("vehicle", "length_m", vp.l_v);
  vp.f = r.number("vehicle", "driveline_inv_s", vp.f);
  vp.a_min = r.number("vehicle", "a_min_mps2", vp.a_min);
  vp.a_max = r.number("vehicle", "a_max_mps2", vp.a_max);
  vp.u_min = r.number("vehicle", "u_min_mps2", vp.u_min);
  vp.u_max = r.number("vehicle", "u_max_mps2", vp.u_max);
  vp.v_max = r.number("vehicle", "v_max_mps", vp.v_max);
  vp.d_lower = r.number("vehicle", "d_lower_m", vp.d_lower);

  auto& mpc = sc.mpc;
  mpc.horizon = r.integer("mpc", "horizon", mpc.horizon);
  Eigen::Vector3d qdiag(1.0, 0.5, 0.1);
  qdiag(0) = r.number("mpc", "q_gap", qdiag(0));
  qdiag(1) = r.number("mpc", "q_rel_speed", qdiag(1));
  qdiag(2) = r.number("mpc", "q_accel", qdiag(2));
  mpc.state_weight = qdiag.asDiagonal();
  mpc.state_ref(0) = r.number("mpc", "ref_gap_err", 0.0);
  mpc.state_ref(1) = r.number("mpc", "ref_rel_speed", 0.0);
  mpc.state_ref(2) = r.number("mpc", "ref_accel", 0.0);
  mpc.prob_weight = r.number("mpc", "prob_weight", mpc.prob_weight);
  mpc.chance_floor =
      r.number("mpc", "chance_floor", std::pow(0.01, mpc.horizon));
  mpc.lookahead_weight_d =
      r.number("mpc", "lookahead_weight_d", mpc.lookahead_weight_d);
  mpc.lookahead_weight_v =
      r.number("mpc", "lookahead_weight_v", mpc.lookahead_weight_v);
  mpc.t_s = sc.t_s;
  mpc.lookahead = sc.lookahead;

  sc.per = r.number("channel", "per", sc.per);
  sc.rate_hz = r.number("channel", "rate_hz", sc.rate_hz);

  out.sweep.pers = r.list("sweep", "pers", out.sweep.pers);
  const std::vector<double> rs_raw =
      r.list("sweep", "rs", std::vector<double>{1.0});
  out.sweep.rs.clear();
  for (double v : rs_raw) out.sweep.rs.push_back(static_cast<int>(v));
  out.sweep.trials = r.integer("sweep", "trials", out.sweep.trials);

  r.finish();
  return out;
}

FileConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sim::ConfigError(path + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

std::string serialize_config(const FileConfig& config) {
  const auto& sc = config.scenario;
  const auto& vp = sc.params;
  const auto& mpc = sc.mpc;
  std::ostringstream out;
  out << "[scenario]\n"
      << "n_vehicles = " << sc.n_vehicles << "\n"
      << "duration_s = " << fmt(sc.duration_s) << "\n"
      << "t_s = " << fmt(sc.t_s) << "\n"
      << "lookahead = " << sc.lookahead << "\n"
      << "seed = " << sc.seed << "\n"
      << "initial_speed_mps = " << fmt(sc.initial_speed) << "\n\n"
      << "[vehicle]\n"
      << "tau_s = " << fmt(vp.tau) << "\n"
      << "standstill_m = " << fmt(vp.d_s) << "\n"
      << "length_m = " << fmt(vp.l_v) << "\n"
      << "driveline_inv_s = " << fmt(vp.f) << "\n"
      << "a_min_mps2 = " << fmt(vp.a_min) << "\n"
      << "a_max_mps2 = " << fmt(vp.a_max) << "\n"
      << "u_min_mps2 = " << fmt(vp.u_min) << "\n"
      << "u_max_mps2 = " << fmt(vp.u_max) << "\n"
      << "v_max_mps = " << fmt(vp.v_max) << "\n"
      << "d_lower_m = " << fmt(vp.d_lower) << "\n\n"
      << "[mpc]\n"
      << "horizon = " << mpc.horizon << "\n"
      << "q_gap = " << fmt(mpc.state_weight(0, 0)) << "\n"
      << "q_rel_speed = " << fmt(mpc.state_weight(1, 1)) << "\n"
      << "q_accel = " << fmt(mpc.state_weight(2, 2)) << "\n"
      << "ref_gap_err = " << fmt(mpc.state_ref(0)) << "\n"
      << "ref_rel_speed = " << fmt(mpc.state_ref(1)) << "\n"
      << "ref_accel = " << fmt(mpc.state_ref(2)) << "\n"
      << "prob_weight = " << fmt(mpc.prob_weight) << "\n"
      << "chance_floor = " << fmt(mpc.chance_floor) << "\n"
      << "lookahead_weight_d = " << fmt(mpc.lookahead_weight_d) << "\n"
      << "lookahead_weight_v = " << fmt(mpc.lookahead_weight_v) << "\n\n"
      << "[channel]\n"
      << "per = " << fmt(sc.per) << "\n"
      << "rate_hz = " << fmt(sc.rate_hz) << "\n\n"
      << "[sweep]\n"
      << "pers = [";
  for (size_t i = 0; i < config.sweep.pers.size(); ++i) {
    out << (i ? ", " : "") << fmt(config.sweep.pers[i]);
  }
  out << "]\nrs = [";
  for (size_t i = 0; i < config.sweep.rs.size(); ++i) {
    out << (i ? ", " : "") << config.sweep.rs[i];
  }
  out << "]\ntrials = " << config.sweep.trials << "\n";
  return out.str();
}

}  // namespace cacc::config
