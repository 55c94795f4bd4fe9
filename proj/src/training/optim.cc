#include "msta/training/optim.h"

#include <cmath>

#include "msta/error.h"
#include "msta/numerics/ops.h"

namespace msta {

AdamW::AdamW(ParameterList params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    if (!p->trainable()) raise(ErrorKind::kState, "optimizer given frozen parameter " + p->name());
    if (moments_.count(p->name())) raise(ErrorKind::kState, "duplicate parameter " + p->name());
    moments_[p->name()] = {Tensor::zeros_like(p->value()), Tensor::zeros_like(p->value())};
  }
}

void AdamW::step(double lr) {
  for (const auto& p : params_) {
    if (p->has_grad() && !p->grad().all_finite()) {
      raise(ErrorKind::kNumeric, "non-finite gradient in " + p->name());
    }
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (const auto& p : params_) {
    auto& mo = moments_.at(p->name());
    Tensor& value = p->mutable_value();
    const Tensor grad = p->has_grad() ? p->grad() : Tensor::zeros_like(value);
    dispatch_dtype(value.dtype(), [&]<class T>() {
      auto w = value.data<T>();
      auto g = grad.data<T>();
      auto m = mo.m.data<T>();
      auto v = mo.v.data<T>();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i];
        m[i] = static_cast<T>(b1 * m[i] + (1.0 - b1) * gi);
        v[i] = static_cast<T>(b2 * v[i] + (1.0 - b2) * gi * gi);
        const double mhat = m[i] / c1, vhat = v[i] / c2;
        double wi = w[i];
        wi -= lr * config_.weight_decay * wi;
        wi -= lr * mhat / (std::sqrt(vhat) + config_.eps);
        w[i] = static_cast<T>(wi);
      }
    });
  }
}

double lr_schedule(std::int64_t step, std::int64_t total, std::int64_t warmup, double base) {
  if (step <= 0) return 0.0;
  if (warmup > 0 && step < warmup) return base * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total) return 0.0;
  const double span = static_cast<double>(std::max<std::int64_t>(total - warmup, 1));
  const double progress = static_cast<double>(step - warmup) / span;
  return 0.5 * base * (1.0 + std::cos(M_PI * progress));
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p->has_grad()) sq += squared_norm(p->grad());
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params) {
      if (!p->has_grad()) continue;
      Tensor& g = p->var().node().grad_buffer();
      for (std::int64_t i = 0; i < g.numel(); ++i) g.set(i, g.at(i) * factor);
    }
  }
  return norm;
}

}  // namespace msta
