#include "msta/evaluation/protocols.h"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "msta/error.h"

namespace msta {

std::unique_ptr<DescriptionProvider> make_provider(const RunConfig& config) {
  if (config.provider == "stub") return std::make_unique<StubProvider>(config.seed);
  if (config.provider == "external") return std::make_unique<ExternalProvider>(config.external);
  raise(ErrorKind::kConfig, "unknown description provider " + config.provider);
}

std::vector<ClassDescriptionSet> describe_classes(const RunConfig& config, const DatasetManifest& manifest,
                                                  const std::filesystem::path& store) {
  auto provider = make_provider(config);
  if (store.empty()) return generate_descriptions(*provider, manifest.classes, config.n_desc);
  return generate_cached(*provider, manifest.classes, config.n_desc, store);
}

TrainedModel train_model(const RunConfig& config, const Dataset& dataset, const std::vector<std::uint64_t>& ids,
                         const std::vector<std::int64_t>& classes,
                         const std::vector<ClassDescriptionSet>& descriptions, const TrainHooks& hooks) {
  config.validate();
  TrainedModel out;
  out.model = std::make_unique<DualEncoder>(config.model);
  out.adapters = inject(*out.model, config.adapter);
  const auto names = class_names(dataset.manifest(), classes);
  DescriptionBank bank;
  if (config.loss.alpha != 0.0) bank = DescriptionBank(*out.model, descriptions, names);
  out.result = train(*out.model, dataset, ids, classes, bank, config.train, config.loss, hooks);
  return out;
}

std::vector<std::uint64_t> ids_in_classes(const Dataset& dataset, const std::vector<std::uint64_t>& ids,
                                          const std::vector<std::int64_t>& classes) {
  const std::set<std::int64_t> keep(classes.begin(), classes.end());
  std::vector<std::uint64_t> out;
  for (auto id : ids) {
    if (keep.count(dataset.sample(id).label)) out.push_back(id);
  }
  return out;
}

nlohmann::ordered_json report_json(const BaseToNovelReport& report) {
  nlohmann::ordered_json j;
  j["base"] = report.base;
  j["novel"] = report.novel;
  j["hm"] = report.hm;
  return j;
}

namespace {

void require_disjoint(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b, const std::string& what) {
  const std::set<std::int64_t> sa(a.begin(), a.end());
  for (auto c : b) {
    if (sa.count(c)) raise(ErrorKind::kConfig, what + " share class " + std::to_string(c));
  }
}

std::vector<std::int64_t> all_classes(const DatasetManifest& m) {
  std::vector<std::int64_t> out(static_cast<std::size_t>(m.class_count()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::int64_t>(i);
  return out;
}

}  // namespace

BaseToNovelReport run_base_to_novel(const RunConfig& config, const Dataset& dataset,
                                    const std::vector<ClassDescriptionSet>& descriptions, TrainedModel* trained,
                                    const TrainHooks& hooks) {
  const auto& m = dataset.manifest();
  if (m.base_classes.empty() || m.novel_classes.empty()) raise(ErrorKind::kConfig, "dataset has no base/novel split");
  require_disjoint(m.base_classes, m.novel_classes, "base and novel splits");

  auto run = train_model(config, dataset, ids_in_classes(dataset, m.train_ids, m.base_classes), m.base_classes,
                         descriptions, hooks);
  BaseToNovelReport r;
  r.base_metrics = evaluate(*run.model, dataset, ids_in_classes(dataset, m.test_ids, m.base_classes), m.base_classes,
                            config.eval_views);
  r.novel_metrics = evaluate(*run.model, dataset, ids_in_classes(dataset, m.test_ids, m.novel_classes),
                             m.novel_classes, config.eval_views);
  r.base = r.base_metrics.top1;
  r.novel = r.novel_metrics.top1;
  r.hm = harmonic_mean(r.base, r.novel);
  r.params = count_parameters(run.model->parameters());
  r.epoch_loss = run.result.epoch_loss;
  if (trained) *trained = std::move(run);
  return r;
}

std::vector<FewShotRow> run_few_shot(const RunConfig& config, const Dataset& dataset,
                                     const std::vector<ClassDescriptionSet>& descriptions) {
  const auto& m = dataset.manifest();
  const auto classes = all_classes(m);
  std::vector<FewShotRow> rows;
  for (auto k : config.shots) {
    FewShotRow row;
    row.shots = k;
    row.train_ids = few_shot_subset(m, k, config.seed);
    auto run = train_model(config, dataset, row.train_ids, classes, descriptions);
    row.metrics = evaluate(*run.model, dataset, m.test_ids, classes, config.eval_views);
    rows.push_back(std::move(row));
  }
  return rows;
}

Metrics run_supervised(const RunConfig& config, const Dataset& dataset,
                       const std::vector<ClassDescriptionSet>& descriptions, TrainedModel* trained) {
  const auto& m = dataset.manifest();
  const auto classes = all_classes(m);
  auto run = train_model(config, dataset, m.train_ids, classes, descriptions);
  Metrics out = evaluate(*run.model, dataset, m.test_ids, classes, config.eval_views);
  if (trained) *trained = std::move(run);
  return out;
}

ZeroShotReport run_zero_shot_transfer(const RunConfig& config, const Dataset& source, const Dataset& target,
                                      const std::vector<ClassDescriptionSet>& source_descriptions) {
  const std::set<std::string> seen(source.manifest().classes.begin(), source.manifest().classes.end());
  for (const auto& c : target.manifest().classes) {
    if (seen.count(c)) raise(ErrorKind::kConfig, "source and target datasets share class " + c);
  }
  const auto& sm = source.manifest();
  std::vector<std::uint64_t> source_ids = sm.train_ids;
  source_ids.insert(source_ids.end(), sm.val_ids.begin(), sm.val_ids.end());
  source_ids.insert(source_ids.end(), sm.test_ids.begin(), sm.test_ids.end());
  std::sort(source_ids.begin(), source_ids.end());
  auto run = train_model(config, source, source_ids, all_classes(sm), source_descriptions);

  std::vector<std::uint64_t> target_ids;
  for (const auto& s : target.samples()) target_ids.push_back(s.id);
  const auto target_classes = all_classes(target.manifest());
  ZeroShotReport r;
  ForwardOptions off;
  off.use_adapters = false;
  r.frozen = evaluate(*run.model, target, target_ids, target_classes, 1, off);
  r.adapted = evaluate(*run.model, target, target_ids, target_classes, 1);
  return r;
}

std::vector<std::string> ablation_axes() { return {"variant", "dims", "lambda", "alpha", "n_desc", "layers"}; }

std::vector<std::pair<std::string, RunConfig>> ablation_cells(const RunConfig& base, const std::string& axis) {
  std::vector<std::pair<std::string, RunConfig>> cells;
  auto add = [&](const std::string& label, auto&& edit) {
    RunConfig c = base;
    edit(c);
    cells.emplace_back(label, std::move(c));
  };
  if (axis == "variant") {
    for (auto v : {MstaVariant::kTextOnly, MstaVariant::kVisionOnly, MstaVariant::kNoSharedLayer, MstaVariant::kFull}) {
      add(msta_variant_name(v), [&](RunConfig& c) {
        c.adapter.kind = AdapterKind::kMsta;
        c.adapter.variant = v;
      });
    }
  } else if (axis == "dims") {
    for (std::int64_t d : {64, 128, 256, 512}) add(std::to_string(d), [&](RunConfig& c) { c.adapter.dims = d; });
  } else if (axis == "lambda") {
    for (double l : {0.001, 0.005, 0.01, 0.05}) add(fmt::format("{}", l), [&](RunConfig& c) { c.adapter.lambda = l; });
  } else if (axis == "alpha") {
    for (double a : {0.1, 1.0, 5.0}) add(fmt::format("{}", a), [&](RunConfig& c) { c.loss.alpha = a; });
  } else if (axis == "n_desc") {
    for (std::int64_t n : {2, 4, 8}) add(std::to_string(n), [&](RunConfig& c) { c.n_desc = n; });
  } else if (axis == "layers") {
    const std::vector<std::pair<std::int64_t, std::int64_t>> ranges{{1, 6}, {1, 12}, {7, 12}, {8, 12}, {10, 12}};
    for (auto [a, b] : ranges) {
      add(fmt::format("{}-{}", a, b), [&](RunConfig& c) {
        // Ranges up to layer 12 need a 12-layer backbone.
        if (c.model.layers < 12) {
          const auto seed = c.model.seed;
          c.model = ModelConfig::preset_named("tiny12");
          c.model.seed = seed;
        }
        c.adapter.first_layer = a;
        c.adapter.last_layer = b;
      });
    }
  } else {
    raise(ErrorKind::kConfig, "unknown ablation axis " + axis);
  }
  return cells;
}

std::vector<AblationCell> run_ablations(const RunConfig& base, const std::vector<std::string>& axes,
                                        DescriptionProvider& provider,
                                        const std::function<void(const AblationCell&)>& on_cell) {
  std::vector<std::vector<std::pair<std::string, RunConfig>>> plan;
  for (const auto& a : axes) plan.push_back(ablation_cells(base, a));
  for (const auto& cells : plan) {
    for (const auto& [label, c] : cells) c.validate();
  }
  const Dataset dataset = generate_dataset(base.data);
  std::map<std::int64_t, std::vector<ClassDescriptionSet>> descriptions;
  std::vector<AblationCell> out;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    for (auto& [label, c] : plan[i]) {
      auto it = descriptions.find(c.n_desc);
      if (it == descriptions.end()) {
        it = descriptions.emplace(c.n_desc, generate_descriptions(provider, dataset.manifest().classes, c.n_desc)).first;
      }
      AblationCell cell{axes[i], label, c, run_base_to_novel(c, dataset, it->second)};
      if (on_cell) on_cell(cell);
      out.push_back(std::move(cell));
    }
  }
  return out;
}

std::string format_ablation_table(const std::vector<AblationCell>& cells) {
  std::ostringstream os;
  os << fmt::format("{:<8} {:<16} {:>7} {:>7} {:>7} {:>12} {:>12} {:>8}\n", "axis", "value", "base", "novel", "HM",
                    "trainable", "total", "ratio%");
  for (const auto& c : cells) {
    const auto& r = c.report;
    os << fmt::format("{:<8} {:<16} {:>7.1f} {:>7.1f} {:>7.1f} {:>12} {:>12} {:>8.3f}\n", c.axis, c.value, r.base,
                      r.novel, r.hm, r.params.trainable, r.params.total, 100.0 * r.params.ratio());
  }
  return os.str();
}

nlohmann::ordered_json ablation_records(const std::vector<AblationCell>& cells) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    nlohmann::ordered_json j;
    j["axis"] = c.axis;
    j["value"] = c.value;
    j["config_hash"] = c.config.hash();
    j["seed"] = c.config.seed;
    j["metrics"] = report_json(c.report);
    j["trainable_parameters"] = c.report.params.trainable;
    j["total_parameters"] = c.report.params.total;
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace msta
