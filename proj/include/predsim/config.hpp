#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "predsim/bench.hpp"
#include "predsim/env.hpp"
#include "predsim/netsim.hpp"
#include "predsim/rnn.hpp"
#include "predsim/trace.hpp"

namespace predsim {

/// Settings for train-rnn and eval-rnn.
struct RnnJob {
  RnnSpec spec{};
  DatasetConfig data{};
  TrainConfig train{};
  /// Horizon the evaluation asks for; must match the model's.
  double eval_horizon_ms{40.0};
  std::size_t eval_stride{1};
};

struct ServiceConfig {
  std::string host{"127.0.0.1"};
  std::uint16_t port{8765};
  std::size_t queue_limit{8};
  double tick_ms{1000.0 / 133.0};
  /// Used when a hello omits inject_oneway_ms.
  double default_oneway_ms{0.0};
};

struct AppConfig {
  std::uint64_t seed{1};
  SessionConfig session{};
  std::optional<std::string> trace_file;
  std::optional<BenchPlan> bench;
  RnnJob rnn{};
  ServiceConfig service{};
};

/// Parses a config document. Unknown keys, wrong types and missing required
/// keys throw ConfigError naming the key. `seed_override` replaces the
/// top-level seed (which is otherwise required). Relative file paths are
/// resolved against `base_dir`.
AppConfig parse_config(const nlohmann::json& doc, std::optional<std::uint64_t> seed_override = {},
                       const std::filesystem::path& base_dir = {});
AppConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {});

/// Predictor section: {"kind": none|dead_reckoning|lagrange|poly|gru|lstm, ...}.
PredictorKind parse_predictor(const nlohmann::json& j, const std::string& where = "predictor",
                              const std::filesystem::path& base_dir = {});

nlohmann::json profile_to_json(const MotionProfile& p);
nlohmann::json noise_to_json(const NoiseModel& n);
nlohmann::json latency_to_json(const LatencyModel& l);
nlohmann::json env_to_json(const EnvConfig& e);
nlohmann::json session_config_to_json(const SessionConfig& c);

}  // namespace predsim
