#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "msta/numerics/parameter.h"

namespace msta {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.001;
};

// Decoupled weight decay with bias-corrected moments. Only trainable
// parameters are tracked; frozen ones are rejected at construction.
class AdamW {
 public:
  AdamW(ParameterList params, AdamWConfig config = {});

  // Applies one update with learning rate `lr` using each parameter's grad.
  void step(double lr);
  std::int64_t steps() const { return steps_; }
  const ParameterList& parameters() const { return params_; }
  bool tracks(const std::string& name) const { return moments_.count(name) > 0; }

 private:
  struct Moments {
    Tensor m, v;
  };
  ParameterList params_;
  AdamWConfig config_;
  std::map<std::string, Moments> moments_;
  std::int64_t steps_ = 0;
};

// Linear warmup from 0 to `base` over `warmup` steps, then cosine decay to 0
// at `total`.
double lr_schedule(std::int64_t step, std::int64_t total, std::int64_t warmup, double base);

// Scales gradients in place so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_grad_norm(const ParameterList& params, double max_norm);

}  // namespace msta
