#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <vector>

#include "msta/data/dataset.h"
#include "msta/descriptions/descriptions.h"
#include "msta/losses/losses.h"
#include "msta/training/config.h"

namespace msta {

struct TrainHooks {
  std::ostream* log = nullptr;  // receives one loss line per step
  std::function<void(std::int64_t epoch, std::int64_t step, const std::mt19937_64& rng)> on_epoch_end;
};

struct TrainResult {
  std::vector<LossBreakdown> steps;
  std::vector<double> epoch_loss;  // mean total loss per epoch
  std::int64_t total_steps = 0;
  std::mt19937_64 rng;
};

// Class names in `classes` order; their positions are the training labels.
std::vector<std::string> class_names(const DatasetManifest& manifest, const std::vector<std::int64_t>& classes);

// Random crop of `frames` consecutive frames, converted to the default dtype.
Tensor training_clip(const Tensor& video, std::int64_t frames, std::mt19937_64& rng, bool augment);

// Trains the adapter parameters of `model` on samples `ids`. Labels are
// remapped to positions in `classes`; `descriptions` must be indexed the same way.
TrainResult train(DualEncoder& model, const Dataset& dataset, const std::vector<std::uint64_t>& ids,
                  const std::vector<std::int64_t>& classes, const DescriptionBank& descriptions,
                  const TrainConfig& config, const LossConfig& loss, const TrainHooks& hooks = {});

}  // namespace msta
