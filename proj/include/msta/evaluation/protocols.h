#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "msta/evaluation/metrics.h"
#include "msta/training/config.h"
#include "msta/training/trainer.h"

namespace msta {

// Stub or external provider, as configured.
std::unique_ptr<DescriptionProvider> make_provider(const RunConfig& config);

// Description sets for every class of `manifest`. With a non-empty `store`
// the sets are cached there.
std::vector<ClassDescriptionSet> describe_classes(const RunConfig& config, const DatasetManifest& manifest,
                                                  const std::filesystem::path& store = {});

struct TrainedModel {
  std::unique_ptr<DualEncoder> model;
  std::shared_ptr<AdapterSet> adapters;
  TrainResult result;
};

// Fresh backbone + adapters from `config`, trained on `ids` over `classes`.
TrainedModel train_model(const RunConfig& config, const Dataset& dataset, const std::vector<std::uint64_t>& ids,
                         const std::vector<std::int64_t>& classes,
                         const std::vector<ClassDescriptionSet>& descriptions, const TrainHooks& hooks = {});

// Members of `ids` whose label is in `classes`, order kept.
std::vector<std::uint64_t> ids_in_classes(const Dataset& dataset, const std::vector<std::uint64_t>& ids,
                                          const std::vector<std::int64_t>& classes);

struct BaseToNovelReport {
  double base = 0.0;
  double novel = 0.0;
  double hm = 0.0;
  Metrics base_metrics;
  Metrics novel_metrics;
  ParameterCount params;
  std::vector<double> epoch_loss;
};

nlohmann::ordered_json report_json(const BaseToNovelReport& report);

// Train on base classes, then score base test clips among base classes and
// novel test clips among novel classes. `trained` receives the model if given.
BaseToNovelReport run_base_to_novel(const RunConfig& config, const Dataset& dataset,
                                    const std::vector<ClassDescriptionSet>& descriptions,
                                    TrainedModel* trained = nullptr, const TrainHooks& hooks = {});

struct FewShotRow {
  std::int64_t shots = 0;
  Metrics metrics;
  std::vector<std::uint64_t> train_ids;
};

// One run per K in config.shots, each on its own K-per-class subset.
std::vector<FewShotRow> run_few_shot(const RunConfig& config, const Dataset& dataset,
                                     const std::vector<ClassDescriptionSet>& descriptions);

// Train on every training clip, score the test split over all classes.
Metrics run_supervised(const RunConfig& config, const Dataset& dataset,
                       const std::vector<ClassDescriptionSet>& descriptions, TrainedModel* trained = nullptr);

struct ZeroShotReport {
  Metrics frozen;   // same backbone with adapters switched off
  Metrics adapted;
};

// Train on all of `source`, score every clip of `target` single-view.
// The two datasets must not share a class name.
ZeroShotReport run_zero_shot_transfer(const RunConfig& config, const Dataset& source, const Dataset& target,
                                      const std::vector<ClassDescriptionSet>& source_descriptions);

struct AblationCell {
  std::string axis;
  std::string value;
  RunConfig config;
  BaseToNovelReport report;
};

// Axis keys: variant, dims, lambda, alpha, n_desc, layers.
std::vector<std::string> ablation_axes();
std::vector<std::pair<std::string, RunConfig>> ablation_cells(const RunConfig& base, const std::string& axis);

// Every cell of every requested axis on one dataset generated from `base`.
// `on_cell` fires after each cell finishes.
std::vector<AblationCell> run_ablations(const RunConfig& base, const std::vector<std::string>& axes,
                                        DescriptionProvider& provider,
                                        const std::function<void(const AblationCell&)>& on_cell = {});

std::string format_ablation_table(const std::vector<AblationCell>& cells);
nlohmann::ordered_json ablation_records(const std::vector<AblationCell>& cells);

}  // namespace msta
