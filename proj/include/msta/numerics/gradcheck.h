#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "msta/numerics/parameter.h"

namespace msta {

struct GradCheckEntry {
  std::string name;
  std::int64_t checked = 0;
  // max |analytic - numeric| over the checked entries, divided by the larger
  // of max |numeric| there and max |analytic| over the whole tensor.
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  double analytic_scale = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;  // sorted by decreasing error
  std::vector<std::string> frozen_with_gradient;
  double worst() const;
};

struct GradCheckOptions {
  double step = 1e-6;
  // Entries probed per tensor, chosen by a seeded draw; 0 probes everything.
  std::int64_t max_entries = 0;
  std::uint64_t seed = 0;
};

// Compares engine gradients of the scalar `f` against central differences
// (f(θ+h) - f(θ-h)) / 2h for every trainable parameter. Frozen parameters are
// excluded from the comparison and listed if they carry any nonzero gradient.
GradCheckReport check_gradients(const std::function<Var()>& f, const ParameterList& params,
                                const GradCheckOptions& options = {});

}  // namespace msta
