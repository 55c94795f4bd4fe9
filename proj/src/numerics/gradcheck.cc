#include "msta/numerics/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "msta/error.h"
#include "msta/numerics/ops.h"

namespace msta {
namespace {

double evaluate(const std::function<Var()>& f) {
  const double v = f().value().item();
  if (!std::isfinite(v)) raise(ErrorKind::kNumeric, "gradient check: objective is not finite");
  return v;
}

}  // namespace

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_relative_error);
  return w;
}

GradCheckReport check_gradients(const std::function<Var()>& f, const ParameterList& params,
                                const GradCheckOptions& options) {
  for (const auto& p : params) p->zero_grad();
  Var root = f();
  if (!std::isfinite(root.value().item())) {
    raise(ErrorKind::kNumeric, "gradient check: objective is not finite");
  }
  backward(root);
  root = Var();

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (const auto& p : params) {
    const Tensor analytic = p->grad();
    if (!p->trainable()) {
      if (squared_norm(analytic) != 0.0) report.frozen_with_gradient.push_back(p->name());
      continue;
    }
    std::vector<std::int64_t> indices(static_cast<std::size_t>(p->numel()));
    std::iota(indices.begin(), indices.end(), 0);
    if (options.max_entries > 0 && p->numel() > options.max_entries) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(static_cast<std::size_t>(options.max_entries));
    }
    GradCheckEntry entry;
    entry.name = p->name();
    // The scale covers the whole tensor, so sampling never shrinks it.
    double max_analytic = 0.0, max_numeric = 0.0;
    for (std::int64_t i = 0; i < analytic.numel(); ++i) max_analytic = std::max(max_analytic, std::abs(analytic.at(i)));
    Tensor& value = p->mutable_value();
    for (auto i : indices) {
      const double original = value.at(i);
      value.set(i, original + options.step);
      const double up = evaluate(f);
      value.set(i, original - options.step);
      const double down = evaluate(f);
      value.set(i, original);
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic.at(i);
      max_numeric = std::max(max_numeric, std::abs(numeric));
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(a - numeric));
    }
    entry.checked = static_cast<std::int64_t>(indices.size());
    entry.analytic_scale = max_analytic;
    const double denom = std::max(max_analytic, max_numeric);
    entry.max_relative_error = denom > 0.0 ? entry.max_abs_error / denom : 0.0;
    report.entries.push_back(entry);
  }
  std::sort(report.entries.begin(), report.entries.end(),
            [](const auto& a, const auto& b) { return a.max_relative_error > b.max_relative_error; });
  return report;
}

}  // namespace msta
