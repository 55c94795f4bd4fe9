#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "msta/data/dataset.h"
#include "msta/encoders/model.h"

namespace msta {

struct Metrics {
  double top1 = 0.0;  // percent
  double top5 = -1.0;  // percent; negative when fewer than 10 classes
  std::map<std::int64_t, double> per_class;  // dataset class index -> percent
  std::int64_t samples = 0;
  std::int64_t views = 1;
};

// 2ab / (a + b); zero when both are zero.
double harmonic_mean(double base, double novel);

// Template features "a video of {cls}." through the (adapted) text branch.
std::vector<Tensor> class_text_features(const DualEncoder& model, const std::vector<std::string>& names,
                                        const ForwardOptions& options = {});

// Cosine similarity to every class feature, averaged over `views` evenly
// spaced temporal crops of the clip.
std::vector<double> class_scores(const DualEncoder& model, const Tensor& video,
                                 const std::vector<Tensor>& text_features, std::int64_t views,
                                 const ForwardOptions& options = {});

// Class positions sorted by decreasing score (ties keep the lower position first).
std::vector<std::int64_t> rank_classes(const std::vector<double>& scores);

std::vector<std::int64_t> classify(const DualEncoder& model, const Tensor& video,
                                   const std::vector<std::string>& class_names, std::int64_t views,
                                   const ForwardOptions& options = {});

// Top-1/top-5 over samples `ids`, choosing among `classes` (dataset indices).
// Every sample's label must be one of `classes`.
Metrics evaluate(const DualEncoder& model, const Dataset& dataset, const std::vector<std::uint64_t>& ids,
                 const std::vector<std::int64_t>& classes, std::int64_t views, const ForwardOptions& options = {});

// Mean of per-class accuracies over `subset`.
double subset_accuracy(const Metrics& metrics, const std::vector<std::int64_t>& subset);

}  // namespace msta
