#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "msta/adapters/adapters.h"
#include "msta/data/dataset.h"
#include "msta/descriptions/descriptions.h"
#include "msta/losses/losses.h"

namespace msta {

struct TrainConfig {
  std::int64_t batch_size = 8;
  double lr = 1e-3;
  std::int64_t epochs = 3;
  std::int64_t warmup_epochs = 1;
  double weight_decay = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double clip_norm = 1.0;
  bool augment = true;
  std::int64_t checkpoint_every = 0;  // epochs; 0 saves only at the end
  std::uint64_t seed = 0;
  void validate() const;
};

// Everything one command needs. Precedence: preset < config file < flags.
struct RunConfig {
  std::string preset = "tiny";
  std::string task = "base-to-novel";
  std::uint64_t seed = 0;
  ModelConfig model;
  AdapterConfig adapter;
  TrainConfig train;
  LossConfig loss;
  DataGenConfig data;
  std::int64_t n_desc = 2;
  std::string provider = "stub";
  ExternalProviderConfig external;
  std::int64_t eval_views = 3;
  std::vector<std::int64_t> shots{2, 4, 8, 16};

  // Copies `seed` into every seeded component.
  void set_seed(std::uint64_t value);
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  // Stable hex digest of to_json().
  std::string hash() const;
};

std::vector<std::string> preset_names();
RunConfig preset_config(const std::string& name);

// INI with [run] [model] [adapter] [train] [loss] [data] [descriptions]
// [eval] sections. Unknown keys are usage errors.
void apply_ini(RunConfig& config, const std::filesystem::path& path);
void apply_setting(RunConfig& config, const std::string& section, const std::string& key, const std::string& value);

// "a-b" -> (a, b); a single number means that layer alone.
std::pair<std::int64_t, std::int64_t> parse_layer_range(const std::string& text);

}  // namespace msta
