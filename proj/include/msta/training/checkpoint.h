#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "msta/encoders/model.h"

namespace msta {

struct NamedTensor {
  std::string name;
  Tensor value;
  bool trainable = false;
};

struct Checkpoint {
  std::string config_json;
  std::int64_t step = 0;
  std::string rng_state;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

Checkpoint capture_checkpoint(const DualEncoder& model, std::string config_json, std::int64_t step,
                              const std::mt19937_64& rng);
// Copies tensors into the model's parameters by name.
void restore_checkpoint(const Checkpoint& checkpoint, DualEncoder& model);
std::mt19937_64 restore_rng(const Checkpoint& checkpoint);

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace msta
