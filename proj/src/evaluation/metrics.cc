#include "msta/evaluation/metrics.h"

#include <algorithm>
#include <numeric>

#include "msta/descriptions/descriptions.h"
#include "msta/error.h"
#include "msta/numerics/ops.h"

namespace msta {

double harmonic_mean(double base, double novel) {
  if (base < 0.0 || novel < 0.0) raise(ErrorKind::kConfig, "accuracies must be non-negative");
  if (base + novel == 0.0) return 0.0;
  return 2.0 * base * novel / (base + novel);
}

std::vector<Tensor> class_text_features(const DualEncoder& model, const std::vector<std::string>& names,
                                        const ForwardOptions& options) {
  std::vector<Tensor> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(model.encode_text(template_sentence(n), options).value());
  return out;
}

std::vector<double> class_scores(const DualEncoder& model, const Tensor& video,
                                 const std::vector<Tensor>& text_features, std::int64_t views,
                                 const ForwardOptions& options) {
  const auto starts = view_starts(video.dim(0), model.config().frames, views);
  std::vector<double> scores(text_features.size(), 0.0);
  for (auto s : starts) {
    const Tensor x = model.encode_video(temporal_crop(video, s, model.config().frames).cast(default_dtype()), options).value();
    for (std::size_t k = 0; k < text_features.size(); ++k) scores[k] += cosine_similarity(x, text_features[k]);
  }
  for (double& v : scores) v /= static_cast<double>(starts.size());
  return scores;
}

std::vector<std::int64_t> rank_classes(const std::vector<double>& scores) {
  std::vector<std::int64_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<std::int64_t> classify(const DualEncoder& model, const Tensor& video,
                                   const std::vector<std::string>& class_names, std::int64_t views,
                                   const ForwardOptions& options) {
  if (class_names.empty()) raise(ErrorKind::kConfig, "no classes to rank");
  return rank_classes(class_scores(model, video, class_text_features(model, class_names, options), views, options));
}

Metrics evaluate(const DualEncoder& model, const Dataset& dataset, const std::vector<std::uint64_t>& ids,
                 const std::vector<std::int64_t>& classes, std::int64_t views, const ForwardOptions& options) {
  const auto& m = dataset.manifest();
  std::vector<std::string> names;
  std::map<std::int64_t, std::int64_t> position;
  for (auto c : classes) {
    if (c < 0 || c >= m.class_count()) raise(ErrorKind::kConfig, "unknown class index " + std::to_string(c));
    position[c] = static_cast<std::int64_t>(names.size());
    names.push_back(m.classes[static_cast<std::size_t>(c)]);
  }
  const auto features = class_text_features(model, names, options);
  Metrics out;
  out.views = views;
  std::map<std::int64_t, std::pair<std::int64_t, std::int64_t>> counts;  // class -> (correct, total)
  std::int64_t top1 = 0, top5 = 0;
  for (auto id : ids) {
    const auto& s = dataset.sample(id);
    auto it = position.find(s.label);
    if (it == position.end()) raise(ErrorKind::kConfig, "sample " + std::to_string(id) + " has a label outside the class set");
    const auto ranking = rank_classes(class_scores(model, s.video, features, views, options));
    const bool hit = ranking.front() == it->second;
    top1 += hit;
    top5 += std::find(ranking.begin(), ranking.begin() + std::min<std::size_t>(5, ranking.size()), it->second) !=
            ranking.begin() + std::min<std::size_t>(5, ranking.size());
    auto& [correct, total] = counts[s.label];
    correct += hit;
    ++total;
  }
  out.samples = static_cast<std::int64_t>(ids.size());
  if (!ids.empty()) {
    out.top1 = 100.0 * static_cast<double>(top1) / static_cast<double>(ids.size());
    if (classes.size() >= 10) out.top5 = 100.0 * static_cast<double>(top5) / static_cast<double>(ids.size());
  }
  for (const auto& [c, ct] : counts) out.per_class[c] = 100.0 * static_cast<double>(ct.first) / static_cast<double>(ct.second);
  return out;
}

double subset_accuracy(const Metrics& metrics, const std::vector<std::int64_t>& subset) {
  double sum = 0.0;
  std::int64_t n = 0;
  for (auto c : subset) {
    auto it = metrics.per_class.find(c);
    if (it == metrics.per_class.end()) continue;
    sum += it->second;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace msta
