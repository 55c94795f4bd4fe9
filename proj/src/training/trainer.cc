#include "msta/training/trainer.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "msta/error.h"
#include "msta/training/optim.h"

namespace msta {

std::vector<std::string> class_names(const DatasetManifest& manifest, const std::vector<std::int64_t>& classes) {
  std::vector<std::string> out;
  for (auto c : classes) {
    if (c < 0 || c >= manifest.class_count()) raise(ErrorKind::kConfig, "class index " + std::to_string(c) + " out of range");
    out.push_back(manifest.classes[static_cast<std::size_t>(c)]);
  }
  return out;
}

Tensor training_clip(const Tensor& video, std::int64_t frames, std::mt19937_64& rng, bool augment_clip) {
  const std::int64_t span = video.dim(0) - frames;
  if (span < 0) raise(ErrorKind::kDimension, "clip shorter than the model window");
  const auto start = std::uniform_int_distribution<std::int64_t>(0, span)(rng);
  const std::uint64_t aug_seed = rng();
  Tensor clip = temporal_crop(video, start, frames);
  if (augment_clip) clip = augment(clip, aug_seed);
  return clip.cast(default_dtype());
}

TrainResult train(DualEncoder& model, const Dataset& dataset, const std::vector<std::uint64_t>& ids,
                  const std::vector<std::int64_t>& classes, const DescriptionBank& descriptions,
                  const TrainConfig& config, const LossConfig& loss, const TrainHooks& hooks) {
  config.validate();
  loss.validate();
  std::map<std::int64_t, std::int64_t> position;
  for (std::size_t i = 0; i < classes.size(); ++i) position[classes[i]] = static_cast<std::int64_t>(i);
  for (auto id : ids) {
    if (!position.count(dataset.sample(id).label)) {
      raise(ErrorKind::kConfig, "training sample " + std::to_string(id) + " belongs to a class outside the training set");
    }
  }
  const auto names = class_names(dataset.manifest(), classes);
  const ParameterList params = model.trainable_parameters();
  AdamW optimizer(params, {config.beta1, config.beta2, 1e-8, config.weight_decay});

  TrainResult result;
  result.rng.seed(config.seed);
  const auto n = static_cast<std::int64_t>(ids.size());
  const std::int64_t per_epoch = n == 0 ? 0 : (n + config.batch_size - 1) / config.batch_size;
  const std::int64_t total = per_epoch * config.epochs;
  const std::int64_t warmup = per_epoch * config.warmup_epochs;

  std::vector<std::uint64_t> order = ids;
  std::int64_t step = 0;
  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), result.rng);
    double epoch_sum = 0.0;
    for (std::int64_t b = 0; b < per_epoch; ++b) {
      std::vector<Tensor> clips;
      std::vector<std::int64_t> labels;
      for (std::int64_t i = b * config.batch_size; i < std::min(n, (b + 1) * config.batch_size); ++i) {
        const auto& s = dataset.sample(order[static_cast<std::size_t>(i)]);
        clips.push_back(training_clip(s.video, model.config().frames, result.rng, config.augment));
        labels.push_back(position.at(s.label));
      }
      ForwardOptions options;
      options.training = true;
      options.rng = &result.rng;
      for (const auto& p : params) p->zero_grad();
      LossTerms terms = total_loss(model, clips, labels, names, descriptions, loss, options);
      if (!std::isfinite(terms.breakdown.total)) {
        raise(ErrorKind::kNumeric, "non-finite loss at " + format_loss_line(step, terms.breakdown));
      }
      backward(terms.total);
      terms.total = Var();
      clip_grad_norm(params, config.clip_norm);
      ++step;
      optimizer.step(lr_schedule(step, total, warmup, config.lr));
      result.steps.push_back(terms.breakdown);
      epoch_sum += terms.breakdown.total;
      if (hooks.log) *hooks.log << format_loss_line(step, terms.breakdown) << '\n';
    }
    result.epoch_loss.push_back(per_epoch ? epoch_sum / static_cast<double>(per_epoch) : 0.0);
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch + 1, step, result.rng);
  }
  for (const auto& p : params) {
    p->zero_grad();
    if (!p->value().all_finite()) raise(ErrorKind::kNumeric, "parameter " + p->name() + " became non-finite");
  }
  result.total_steps = step;
  return result;
}

}  // namespace msta
