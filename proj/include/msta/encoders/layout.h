#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "msta/numerics/parameter.h"

namespace msta {

enum class InitKind { kKaiming, kZeros, kOnes, kNormal };

// Name, shape and initialiser of one parameter, known before any storage is
// allocated so large presets can be counted without materialising them.
struct ParameterSpec {
  std::string name;
  Shape shape;
  InitKind init = InitKind::kZeros;
  double stddev = 0.0;  // kNormal only
  bool trainable = true;
};

using ParameterLayout = std::vector<ParameterSpec>;

struct ParameterCount {
  std::int64_t total = 0;
  std::int64_t trainable = 0;
  double ratio() const { return total == 0 ? 0.0 : static_cast<double>(trainable) / total; }
};

ParameterCount count_parameters(const ParameterLayout& layout);
ParameterCount count_parameters(const ParameterList& params);

// Kaiming-normal uses fan_in = product of all but the last axis. Each tensor
// draws from its own stream seeded by (seed, name), so adding parameters never
// perturbs existing ones.
ParameterPtr materialize(const ParameterSpec& spec, std::uint64_t seed);
ParameterList materialize(const ParameterLayout& layout, std::uint64_t seed);

std::uint64_t seed_for(std::uint64_t seed, const std::string& name);

}  // namespace msta
