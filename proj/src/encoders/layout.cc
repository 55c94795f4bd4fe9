#include "msta/encoders/layout.h"

#include <cmath>

namespace msta {

std::uint64_t seed_for(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ull ^ (seed * 0x9E3779B97F4A7C15ull);
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

ParameterCount count_parameters(const ParameterLayout& layout) {
  ParameterCount c;
  for (const auto& s : layout) {
    const auto n = shape_numel(s.shape);
    c.total += n;
    if (s.trainable) c.trainable += n;
  }
  return c;
}

ParameterCount count_parameters(const ParameterList& params) {
  ParameterCount c;
  for (const auto& p : params) {
    c.total += p->numel();
    if (p->trainable()) c.trainable += p->numel();
  }
  return c;
}

ParameterPtr materialize(const ParameterSpec& spec, std::uint64_t seed) {
  Tensor value(spec.shape);
  std::mt19937_64 rng(seed_for(seed, spec.name));
  switch (spec.init) {
    case InitKind::kZeros:
      break;
    case InitKind::kOnes:
      value.fill(1.0);
      break;
    case InitKind::kKaiming:
    case InitKind::kNormal: {
      double stddev = spec.stddev;
      if (spec.init == InitKind::kKaiming) {
        std::int64_t fan_in = 1;
        for (std::size_t i = 0; i + 1 < spec.shape.size(); ++i) fan_in *= spec.shape[i];
        stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      }
      std::normal_distribution<double> dist(0.0, stddev);
      for (std::int64_t i = 0; i < value.numel(); ++i) value.set(i, dist(rng));
      break;
    }
  }
  return make_parameter(spec.name, std::move(value), spec.trainable);
}

ParameterList materialize(const ParameterLayout& layout, std::uint64_t seed) {
  ParameterList out;
  out.reserve(layout.size());
  for (const auto& s : layout) out.push_back(materialize(s, seed));
  return out;
}

}  // namespace msta
