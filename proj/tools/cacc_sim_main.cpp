#include "cacc/config.hpp"
#include "cacc/io.hpp"
#include "cacc/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using cacc::config::FileConfig;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

FileConfig load(const CommonOpts& opts) {
  FileConfig cfg = cacc::config::parse_config_file(opts.config_path);
  if (opts.seed) cfg.scenario.seed = *opts.seed;
  cacc::sim::validate(cfg.scenario);
  return cfg;
}

std::string run_id(const std::string& command, const FileConfig& cfg) {
  return cacc::io::fnv1a_hex(command + "\n" +
                             cacc::config::serialize_config(cfg));
}

void write_manifest(const CommonOpts& opts, const std::string& command,
                    const FileConfig& cfg, double wall_s,
                    const std::map<std::string, std::string>& artifacts) {
  nlohmann::ordered_json j;
  j["run_id"] = run_id(command, cfg);
  j["command"] = command;
  j["config_path"] = opts.config_path;
  j["out_dir"] = opts.out_dir;
  j["wall_clock_s"] = wall_s;
  j["config"] = cacc::config::serialize_config(cfg);
  nlohmann::ordered_json files;
  for (const auto& [name, checksum] : artifacts) files[name] = checksum;
  j["artifacts"] = files;
  cacc::io::write_file((fs::path(opts.out_dir) / "manifest.json").string(),
                       j.dump(2) + "\n");
}

int cmd_run(const CommonOpts& opts, bool packet_log) {
  const auto started = std::chrono::steady_clock::now();
  FileConfig cfg = load(opts);
  cfg.scenario.log_packets = packet_log;

  const auto result = cacc::sim::run_scenario(cfg.scenario);

  fs::create_directories(opts.out_dir);
  std::map<std::string, std::string> artifacts;
  const auto emit = [&](const std::string& name, const std::string& content) {
    cacc::io::write_file((fs::path(opts.out_dir) / name).string(), content);
    artifacts[name] = cacc::io::fnv1a_hex(content);
  };
  emit("trace.csv", cacc::io::trace_csv(result));
  emit("metrics.json", cacc::io::metrics_json(result));
  if (packet_log) emit("packets.csv", cacc::io::packet_log_csv(result));

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  write_manifest(opts, "run", cfg, wall, artifacts);

  if (result.fallback_count > 0 || result.qp_maxiter_count > 0) {
    std::cerr << "warning: " << result.fallback_count
              << " all-infeasible fallbacks, " << result.qp_maxiter_count
              << " QP iteration-budget hits\n";
  }
  if (result.collision) {
    std::cerr << "collision: vehicle " << result.collision_vehicle
              << " at tick " << result.collision_tick << "\n";
    return 2;
  }
  return 0;
}

int cmd_sweep(const CommonOpts& opts, bool resume) {
  const auto started = std::chrono::steady_clock::now();
  FileConfig cfg = load(opts);
  const auto& sweep = cfg.sweep;

  fs::create_directories(fs::path(opts.out_dir) / "cells");
  const std::string config_sum =
      cacc::io::fnv1a_hex(cacc::config::serialize_config(cfg));

  std::vector<cacc::sim::SweepCell> cells;
  for (double per : sweep.pers) {
    for (int r : sweep.rs) {
      char cell_name[64];
      std::snprintf(cell_name, sizeof(cell_name), "cell_per%g_r%d.json", per, r);
      const fs::path cell_path = fs::path(opts.out_dir) / "cells" / cell_name;

      if (resume && fs::exists(cell_path)) {
        std::ifstream in(cell_path);
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (!j.is_discarded() && j.value("config_checksum", "") == config_sum) {
          cacc::sim::SweepCell cell;
          cell.per = j.at("per");
          cell.r = j.at("r");
          cell.trials = j.at("trials");
          cell.mean_emergency_s = j.at("mean_emergency_s");
          cell.std_emergency_s = j.at("std_emergency_s");
          cell.mean_min_gap_m = j.at("mean_min_gap_m");
          cell.collision_count = j.at("collision_count");
          cell.worst_min_gap_m = j.at("worst_min_gap_m");
          cell.trial_emergency_s =
              j.at("trial_emergency_s").get<std::vector<double>>();
          cells.push_back(std::move(cell));
          continue;
        }
      }

      const auto computed = cacc::sim::run_sweep(
          cfg.scenario, {per}, {r}, sweep.trials, opts.jobs);
      const auto& cell = computed.front();
      nlohmann::ordered_json j;
      j["config_checksum"] = config_sum;
      j["per"] = cell.per;
      j["r"] = cell.r;
      j["trials"] = cell.trials;
      j["mean_emergency_s"] = cell.mean_emergency_s;
      j["std_emergency_s"] = cell.std_emergency_s;
      j["mean_min_gap_m"] = cell.mean_min_gap_m;
      j["collision_count"] = cell.collision_count;
      j["worst_min_gap_m"] = cell.worst_min_gap_m;
      j["trial_emergency_s"] = cell.trial_emergency_s;
      cacc::io::write_file(cell_path.string(), j.dump(2) + "\n");
      cells.push_back(cell);
    }
  }

  std::map<std::string, std::string> artifacts;
  const std::string csv = cacc::io::sweep_csv(cells);
  cacc::io::write_file((fs::path(opts.out_dir) / "sweep.csv").string(), csv);
  artifacts["sweep.csv"] = cacc::io::fnv1a_hex(csv);

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  write_manifest(opts, "sweep", cfg, wall, artifacts);
  return 0;
}

int cmd_pred_stats(const CommonOpts& opts) {
  const auto started = std::chrono::steady_clock::now();
  FileConfig cfg = load(opts);

  const auto result = cacc::sim::run_scenario(cfg.scenario);
  const auto rows = cacc::sim::prediction_error_stats(result);

  fs::create_directories(opts.out_dir);
  std::map<std::string, std::string> artifacts;
  const std::string csv = cacc::io::pred_error_csv(rows);
  cacc::io::write_file((fs::path(opts.out_dir) / "pred_error.csv").string(), csv);
  artifacts["pred_error.csv"] = cacc::io::fnv1a_hex(csv);

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  write_manifest(opts, "pred-stats", cfg, wall, artifacts);
  return result.collision ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CACC platoon simulator: GP model-based communication with "
               "hybrid stochastic MPC"};
  app.require_subcommand(1);

  CommonOpts opts;
  bool packet_log = false;
  bool resume = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", opts.config_path, "scenario config file")
        ->required();
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--seed", opts.seed, "override the config seed");
    cmd->add_option("--jobs", opts.jobs, "parallel workers for sweep trials");
  };

  CLI::App* run = app.add_subcommand("run", "run one scenario");
  add_common(run);
  run->add_flag("--packet-log", packet_log, "also write packets.csv");

  CLI::App* sweep = app.add_subcommand("sweep", "run a PER x lookahead sweep");
  add_common(sweep);
  sweep->add_flag("--resume", resume, "reuse completed cells by checksum");

  CLI::App* pred = app.add_subcommand("pred-stats",
                                      "velocity prediction error statistics");
  add_common(pred);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(opts, packet_log);
    if (sweep->parsed()) return cmd_sweep(opts, resume);
    if (pred->parsed()) return cmd_pred_stats(opts);
  } catch (const cacc::sim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const cacc::sim::EmptySample& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
