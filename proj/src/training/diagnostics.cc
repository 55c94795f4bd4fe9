#include "msta/training/diagnostics.h"

#include <random>

#include "msta/descriptions/descriptions.h"
#include "msta/losses/losses.h"

namespace msta {

LossGradCheck check_loss_gradients(const RunConfig& config, const GradCheckOptions& options) {
  DTypeScope f64(DType::kF64);
  const ModelConfig& mc = config.model;
  DualEncoder model(mc);
  // One class of each kind, so both pair directions and a plain class appear.
  const std::vector<std::string> classes{"class_00_fwd", "class_01_rev", "class_02_obj"};
  StubProvider stub(config.seed);
  DescriptionBank bank(model, generate_descriptions(stub, classes, config.n_desc), classes);
  inject(model, config.adapter);

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> pixel(0.0, 1.0);
  std::vector<Tensor> videos;
  for (int i = 0; i < 2; ++i) {
    Tensor v({mc.frames, mc.height, mc.width, 3});
    for (std::int64_t k = 0; k < v.numel(); ++k) v.set(k, pixel(rng));
    videos.push_back(std::move(v));
  }
  const std::vector<std::int64_t> labels{0, 2};
  auto f = [&] { return total_loss(model, videos, labels, classes, bank, config.loss).total; };

  LossGradCheck out;
  out.report = check_gradients(f, model.parameters(), options);
  out.trainable_tensors = static_cast<std::int64_t>(model.trainable_parameters().size());
  for (const auto& p : model.backbone_parameters()) {
    if (p->has_grad()) out.frozen_touched.push_back(p->name());
  }
  return out;
}

}  // namespace msta
