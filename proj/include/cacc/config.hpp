#pragma once

#include "cacc/sim.hpp"

#include <string>
#include <vector>

namespace cacc::config {

struct SweepSpec {
  std::vector<double> pers{0.0};
  std::vector<int> rs{1};
  int trials = 1;
};

struct FileConfig {
  sim::ScenarioConfig scenario;
  SweepSpec sweep;
};

/// Parses the sectioned key-value format documented in the README
/// ([scenario], [vehicle], [mpc], [channel], [sweep]). Unknown keys and
/// malformed lines raise sim::ConfigError with file/line context.
FileConfig parse_config_text(const std::string& text, const std::string& name);
FileConfig parse_config_file(const std::string& path);

/// Canonical text form; parse_config_text(serialize_config(c)) == c.
std::string serialize_config(const FileConfig& config);

}  // namespace cacc::config
