#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msta/descriptions/descriptions.h"
#include "msta/numerics/ops.h"

namespace msta {

struct LossConfig {
  double temperature = 0.07;  // τ
  double alpha = 1.0;         // weight of the consistency term
  void validate() const;
};

// -log softmax(cos(x, w_k) / τ)[target] over the class features w_k.
Var ce_loss(const Var& video_feature, const std::vector<Var>& class_features, std::int64_t target,
            double temperature);

// 2 - cos(w_c, D_s) - cos(w_c, D_t). D_s and D_t are constants.
Var cc_loss(const Var& class_feature, const Tensor& spatio, const Tensor& temporal);

struct LossBreakdown {
  double ce = 0.0;
  double cc = 0.0;
  double total = 0.0;
};

struct LossTerms {
  Var total;
  LossBreakdown breakdown;
};

// Mean cross-entropy over the batch plus α times the mean consistency term
// over the distinct classes present in the batch.
LossTerms combine_losses(const std::vector<Var>& video_features, std::span<const std::int64_t> labels,
                         const std::vector<Var>& class_features, const DescriptionBank& descriptions,
                         const LossConfig& config);

// Encodes the batch and the class templates with the adapted model, then
// combines the losses. Description embeddings come from the frozen branch.
LossTerms total_loss(const DualEncoder& model, std::span<const Tensor> videos,
                     std::span<const std::int64_t> labels, const std::vector<std::string>& class_names,
                     const DescriptionBank& descriptions, const LossConfig& config,
                     const ForwardOptions& options = {});

// step=<i> ce=<v> cc=<v> total=<v>
std::string format_loss_line(std::int64_t step, const LossBreakdown& breakdown);

}  // namespace msta
