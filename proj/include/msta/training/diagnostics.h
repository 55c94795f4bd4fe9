#pragma once

#include "msta/numerics/gradcheck.h"
#include "msta/training/config.h"

namespace msta {

struct LossGradCheck {
  GradCheckReport report;
  std::int64_t trainable_tensors = 0;
  // Backbone tensors whose gradient buffer is nonzero after backward.
  std::vector<std::string> frozen_touched;
  bool passed(double tolerance) const {
    return report.worst() < tolerance && report.frozen_with_gradient.empty() && frozen_touched.empty();
  }
};

// Central differences against the engine gradient of the full training loss
// on a small seeded batch, in f64, for the model and adapters in `config`.
LossGradCheck check_loss_gradients(const RunConfig& config, const GradCheckOptions& options = {});

}  // namespace msta
