#include "msta/losses/losses.h"

#include <cmath>
#include <cstdio>
#include <set>

#include "msta/error.h"

namespace msta {

void LossConfig::validate() const {
  if (!(temperature > 0.0)) raise(ErrorKind::kConfig, "temperature must be positive");
  if (!(alpha >= 0.0)) raise(ErrorKind::kConfig, "alpha must be non-negative");
}

Var ce_loss(const Var& video_feature, const std::vector<Var>& class_features, std::int64_t target,
            double temperature) {
  if (class_features.empty()) raise(ErrorKind::kConfig, "no class features");
  std::vector<Var> sims;
  sims.reserve(class_features.size());
  for (const auto& w : class_features) sims.push_back(cosine_similarity(video_feature, w));
  return softmax_cross_entropy(scale(stack(sims), 1.0 / temperature), target);
}

Var cc_loss(const Var& class_feature, const Tensor& spatio, const Tensor& temporal) {
  Var cs = cosine_similarity(class_feature, Var(spatio));
  Var ct = cosine_similarity(class_feature, Var(temporal));
  return sub(Var(Tensor::scalar(2.0, class_feature.value().dtype())), add(cs, ct));
}

LossTerms combine_losses(const std::vector<Var>& video_features, std::span<const std::int64_t> labels,
                         const std::vector<Var>& class_features, const DescriptionBank& descriptions,
                         const LossConfig& config) {
  config.validate();
  if (video_features.empty() || video_features.size() != labels.size()) {
    raise(ErrorKind::kDimension, "batch needs one label per video feature");
  }
  std::vector<Var> ce_terms;
  std::set<std::int64_t> present;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ce_terms.push_back(ce_loss(video_features[i], class_features, labels[i], config.temperature));
    present.insert(labels[i]);
  }
  Var ce = mean_of(ce_terms);

  LossTerms out;
  out.breakdown.ce = ce.value().item();
  if (config.alpha == 0.0) {
    out.total = ce;
    out.breakdown.total = out.breakdown.ce;
    return out;
  }
  std::vector<Var> cc_terms;
  for (auto c : present) {
    const auto& d = descriptions.at(c);
    cc_terms.push_back(cc_loss(class_features[static_cast<std::size_t>(c)], d.spatio, d.temporal));
  }
  Var cc = mean_of(cc_terms);
  out.total = add(ce, scale(cc, config.alpha));
  out.breakdown.cc = cc.value().item();
  out.breakdown.total = out.total.value().item();
  return out;
}

LossTerms total_loss(const DualEncoder& model, std::span<const Tensor> videos,
                     std::span<const std::int64_t> labels, const std::vector<std::string>& class_names,
                     const DescriptionBank& descriptions, const LossConfig& config,
                     const ForwardOptions& options) {
  std::vector<Var> class_features;
  class_features.reserve(class_names.size());
  for (const auto& name : class_names) class_features.push_back(model.encode_text(template_sentence(name), options));
  std::vector<Var> video_features;
  video_features.reserve(videos.size());
  for (const auto& v : videos) video_features.push_back(model.encode_video(v, options));
  return combine_losses(video_features, labels, class_features, descriptions, config);
}

std::string format_loss_line(std::int64_t step, const LossBreakdown& b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "step=%lld ce=%.9g cc=%.9g total=%.9g", static_cast<long long>(step), b.ce, b.cc,
                b.total);
  return buf;
}

}  // namespace msta
