// msta: command-line driver for data generation, training, evaluation and
// the ablation grid.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "msta/error.h"
#include "msta/evaluation/protocols.h"
#include "msta/training/checkpoint.h"
#include "msta/training/diagnostics.h"
#include "msta/util/binary_io.h"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace msta {
namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonFlags {
  std::string preset = "tiny";
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha, lambda, dropout, lr;
  std::optional<std::int64_t> dims, n_desc, epochs, batch, views;
  std::string layers;
  int threads = 1;
  std::string out;
};

void add_common(CLI::App* app, CommonFlags& f, const std::string& default_preset, bool needs_out) {
  f.preset = default_preset;
  app->add_option("--preset", f.preset, "named preset")->capture_default_str();
  app->add_option("--config", f.config, "INI file applied over the preset")->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "seed for every seeded component");
  app->add_option("--alpha", f.alpha, "consistency loss weight");
  app->add_option("--lambda", f.lambda, "adapter scale");
  app->add_option("--dims", f.dims, "shared layer width");
  app->add_option("--n-desc,--n", f.n_desc, "description sentences per class and kind");
  app->add_option("--dropout", f.dropout, "adapter dropout");
  app->add_option("--layers", f.layers, "adapter layer range a-b");
  app->add_option("--epochs", f.epochs, "training epochs");
  app->add_option("--lr", f.lr, "peak learning rate");
  app->add_option("--batch", f.batch, "batch size");
  app->add_option("--views", f.views, "temporal views at evaluation");
  app->add_option("--threads", f.threads, "worker threads (computation is single-threaded)")->check(CLI::PositiveNumber);
  auto* out = app->add_option("--out", f.out, "output directory");
  if (needs_out) out->required();
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig c = preset_config(f.preset);
  if (!f.config.empty()) apply_ini(c, f.config);
  if (f.seed) c.set_seed(*f.seed);
  if (f.alpha) c.loss.alpha = *f.alpha;
  if (f.lambda) c.adapter.lambda = *f.lambda;
  if (f.dims) c.adapter.dims = *f.dims;
  if (f.n_desc) c.n_desc = *f.n_desc;
  if (f.dropout) c.adapter.dropout = *f.dropout;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.lr) c.train.lr = *f.lr;
  if (f.batch) c.train.batch_size = *f.batch;
  if (f.views) c.eval_views = *f.views;
  if (!f.layers.empty()) {
    const auto [a, b] = parse_layer_range(f.layers);
    c.adapter.first_layer = a;
    c.adapter.last_layer = b;
  }
  if (c.train.warmup_epochs > c.train.epochs) c.train.warmup_epochs = c.train.epochs;
  // Contradictions are reported before any compute starts.
  try {
    c.validate();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) raise(ErrorKind::kUsage, e.what());
    throw;
  }
  return c;
}

std::string compiler_version() {
#if defined(__clang__)
  return fmt::format("clang {}.{}.{}", __clang_major__, __clang_minor__, __clang_patchlevel__);
#elif defined(__GNUC__)
  return fmt::format("gcc {}.{}.{}", __GNUC__, __GNUC_MINOR__, __GNUC_PATCHLEVEL__);
#else
  return "unknown";
#endif
}

struct Provenance {
  std::string command;
  std::vector<std::string> argv;
  ordered_json inputs = ordered_json::object();
  ordered_json outputs = ordered_json::array();
  ordered_json results = ordered_json::object();
};

void write_run_json(const fs::path& dir, const Provenance& p, const RunConfig& config, int threads) {
  ordered_json j;
  j["format"] = "msta-run";
  j["command"] = p.command;
  j["argv"] = p.argv;
  j["config_hash"] = config.hash();
  j["seed"] = config.seed;
  j["threads"] = threads;
  j["versions"] = {{"msta", kVersion},
                   {"compiler", compiler_version()},
                   {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                                 NLOHMANN_JSON_VERSION_PATCH)},
                   {"cli11", CLI11_VERSION},
                   {"fmt", FMT_VERSION}};
  j["inputs"] = p.inputs;
  j["outputs"] = p.outputs;
  j["results"] = p.results;
  j["config"] = config.to_json();
  write_file((dir / "run.json").string(), j.dump(2) + "\n");
}

fs::path prepare_out(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) raise(ErrorKind::kIo, "cannot create output directory " + out + ": " + ec.message());
  return dir;
}

Dataset dataset_for(const RunConfig& config, const std::string& data_dir, Provenance& p) {
  if (data_dir.empty()) {
    p.inputs["data"] = "generated";
    return generate_dataset(config.data);
  }
  p.inputs["data"] = data_dir;
  // A manifest path names its dataset directory.
  const fs::path path(data_dir);
  Dataset ds = load_dataset(fs::is_regular_file(path) ? path.parent_path() : path);
  const auto& m = ds.manifest();
  if (m.frames < config.model.frames || m.height != config.model.height || m.width != config.model.width) {
    raise(ErrorKind::kUsage, fmt::format("dataset clips {}x{}x{} do not fit the model window {}x{}x{}", m.frames,
                                         m.height, m.width, config.model.frames, config.model.height,
                                         config.model.width));
  }
  return ds;
}

std::vector<ClassDescriptionSet> descriptions_for(const RunConfig& config, const DatasetManifest& manifest,
                                                  const std::string& store, Provenance& p) {
  if (store.empty()) {
    p.inputs["descriptions"] = config.provider;
    return describe_classes(config, manifest);
  }
  p.inputs["descriptions"] = store;
  return load_descriptions(store);
}

std::string metrics_row(const std::string& label, const Metrics& m) {
  const std::string top5 = m.top5 < 0.0 ? "-" : fmt::format("{:.1f}", m.top5);
  return fmt::format("{:<12} {:>7.1f} {:>7} {:>8} {:>6}\n", label, m.top1, top5, m.samples, m.views);
}

std::string metrics_header() { return fmt::format("{:<12} {:>7} {:>7} {:>8} {:>6}\n", "", "top1", "top5", "samples", "views"); }

ordered_json metrics_json(const Metrics& m) {
  ordered_json j;
  j["top1"] = m.top1;
  j["top5"] = m.top5 < 0.0 ? ordered_json() : ordered_json(m.top5);
  j["samples"] = m.samples;
  j["views"] = m.views;
  ordered_json per = ordered_json::object();
  for (const auto& [c, acc] : m.per_class) per[std::to_string(c)] = acc;
  j["per_class"] = per;
  return j;
}

void print_b2n(const BaseToNovelReport& r) {
  std::cout << fmt::format("{:>7} {:>7} {:>7}\n{:>7.1f} {:>7.1f} {:>7.1f}\n", "base", "novel", "HM", r.base, r.novel, r.hm);
}

// Training classes and clips for the configured task.
std::pair<std::vector<std::int64_t>, std::vector<std::uint64_t>> training_split(const RunConfig& c, const Dataset& ds) {
  const auto& m = ds.manifest();
  if (c.task == "base-to-novel") return {m.base_classes, ids_in_classes(ds, m.train_ids, m.base_classes)};
  std::vector<std::int64_t> all(static_cast<std::size_t>(m.class_count()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::int64_t>(i);
  if (c.task == "few-shot") return {all, few_shot_subset(m, c.shots.front(), c.seed)};
  return {all, m.train_ids};
}

struct GenFlags {
  std::int64_t classes = 0, per_class = 0, offset = -1, frames = 0, size = 0;
  double pairs = -1.0;
  std::string name;
};

int cmd_gen_data(const CommonFlags& f, const GenFlags& g, Provenance& p) {
  RunConfig c = resolve(f);
  if (g.classes > 0) c.data.classes = g.classes;
  if (g.per_class > 0) c.data.per_class = g.per_class;
  if (g.offset >= 0) c.data.class_offset = g.offset;
  if (g.frames > 0) c.data.frames = g.frames;
  if (g.size > 0) c.data.size = g.size;
  if (g.pairs >= 0.0) c.data.temporal_pair_fraction = g.pairs;
  if (!g.name.empty()) c.data.name = g.name;
  try {
    c.validate();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) raise(ErrorKind::kUsage, e.what());
    throw;
  }
  const fs::path dir = prepare_out(f.out);
  Dataset ds = generate_dataset(c.data);
  save_dataset(ds, dir);
  const auto& m = ds.manifest();
  std::cout << fmt::format("dataset {}: {} classes, {} clips ({} train, {} test), {} temporal pairs\n", m.name,
                           m.class_count(), ds.samples().size(), m.train_ids.size(), m.test_ids.size(),
                           m.temporal_pairs.size());
  if (!m.temporal_pairs.empty()) {
    std::cout << fmt::format("frame-average oracle on pairs: {:.1f}%\n", 100.0 * m.oracle_pair_accuracy);
  }
  p.outputs = {"manifest.json", m.data_file};
  p.results["clips"] = ds.samples().size();
  p.results["oracle_pair_accuracy"] = m.oracle_pair_accuracy;
  write_run_json(dir, p, c, f.threads);
  return 0;
}

int cmd_describe_gen(const CommonFlags& f, const std::string& data_dir, const std::string& provider,
                     const std::string& endpoint, const std::string& model, Provenance& p) {
  RunConfig c = resolve(f);
  if (!provider.empty()) c.provider = provider;
  if (!endpoint.empty()) c.external.endpoint = endpoint;
  if (!model.empty()) c.external.model = model;
  const fs::path dir = prepare_out(f.out);
  Dataset ds = dataset_for(c, data_dir, p);
  const auto sets = describe_classes(c, ds.manifest());
  save_descriptions(dir / "descriptions.txt", sets);
  std::cout << fmt::format("{} classes, {} sentences each kind, provider {}\n", sets.size(), c.n_desc, c.provider);
  p.outputs = {"descriptions.txt"};
  write_run_json(dir, p, c, f.threads);
  return 0;
}

int cmd_train(const CommonFlags& f, const std::string& data_dir, const std::string& store, Provenance& p) {
  RunConfig c = resolve(f);
  const fs::path dir = prepare_out(f.out);
  Dataset ds = dataset_for(c, data_dir, p);
  const auto descriptions = descriptions_for(c, ds.manifest(), store, p);
  const auto [classes, ids] = training_split(c, ds);

  std::ofstream log(dir / "train.log");
  if (!log) raise(ErrorKind::kIo, "cannot write " + (dir / "train.log").string());
  const std::string config_json = c.to_json().dump();
  TrainedModel run;
  TrainHooks hooks;
  hooks.log = &log;
  const DualEncoder* live = nullptr;
  ordered_json outputs = {"train.log", "checkpoint.bin"};
  hooks.on_epoch_end = [&](std::int64_t epoch, std::int64_t step, const std::mt19937_64& rng) {
    std::cout << fmt::format("epoch {} step {}\n", epoch, step) << std::flush;
    const auto every = c.train.checkpoint_every;
    if (live && every > 0 && epoch % every == 0 && epoch < c.train.epochs) {
      const std::string name = fmt::format("checkpoint_epoch{}.bin", epoch);
      save_checkpoint(dir / name, capture_checkpoint(*live, config_json, step, rng));
      outputs.push_back(name);
    }
  };
  // The hook needs the model before training starts, so build it here.
  run.model = std::make_unique<DualEncoder>(c.model);
  run.adapters = inject(*run.model, c.adapter);
  live = run.model.get();
  DescriptionBank bank;
  if (c.loss.alpha != 0.0) bank = DescriptionBank(*run.model, descriptions, class_names(ds.manifest(), classes));
  run.result = train(*run.model, ds, ids, classes, bank, c.train, c.loss, hooks);
  save_checkpoint(dir / "checkpoint.bin", capture_checkpoint(*run.model, config_json, run.result.total_steps, run.result.rng));

  const auto count = count_parameters(run.model->parameters());
  std::cout << fmt::format("trained {} steps on {} clips; final epoch loss {:.6f}\n", run.result.total_steps,
                           ids.size(), run.result.epoch_loss.empty() ? 0.0 : run.result.epoch_loss.back());
  std::cout << fmt::format("trainable {} / total {} ({:.3f}%)\n", count.trainable, count.total, 100.0 * count.ratio());
  p.outputs = outputs;
  p.results["steps"] = run.result.total_steps;
  p.results["epoch_loss"] = run.result.epoch_loss;
  write_run_json(dir, p, c, f.threads);
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& checkpoint_path, const std::string& data_dir, Provenance& p) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  RunConfig c = RunConfig::from_json(nlohmann::json::parse(ck.config_json));
  if (f.views) c.eval_views = *f.views;
  c.validate();
  p.inputs["checkpoint"] = checkpoint_path;
  const fs::path dir = prepare_out(f.out);
  Dataset ds = dataset_for(c, data_dir, p);
  DualEncoder model(c.model);
  inject(model, c.adapter);
  restore_checkpoint(ck, model);
  const auto& m = ds.manifest();
  ordered_json results;
  if (c.task == "base-to-novel") {
    BaseToNovelReport r;
    r.base_metrics = evaluate(model, ds, ids_in_classes(ds, m.test_ids, m.base_classes), m.base_classes, c.eval_views);
    r.novel_metrics =
        evaluate(model, ds, ids_in_classes(ds, m.test_ids, m.novel_classes), m.novel_classes, c.eval_views);
    r.base = r.base_metrics.top1;
    r.novel = r.novel_metrics.top1;
    r.hm = harmonic_mean(r.base, r.novel);
    print_b2n(r);
    results = report_json(r);
  } else {
    std::vector<std::int64_t> all(static_cast<std::size_t>(m.class_count()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::int64_t>(i);
    const Metrics mt = evaluate(model, ds, m.test_ids, all, c.eval_views);
    std::cout << metrics_header() << metrics_row("test", mt);
    results = metrics_json(mt);
  }
  write_file((dir / "metrics.json").string(), results.dump(2) + "\n");
  p.outputs = {"metrics.json"};
  p.results = results;
  write_run_json(dir, p, c, f.threads);
  return 0;
}

int cmd_zeroshot(const CommonFlags& f, const std::string& source_dir, const std::string& target_dir,
                 const std::string& store, Provenance& p) {
  RunConfig c = resolve(f);
  const fs::path dir = prepare_out(f.out);
  Dataset source = dataset_for(c, source_dir, p);
  Dataset target;
  if (target_dir.empty()) {
    DataGenConfig tc = c.data;
    tc.name = c.data.name + "-transfer";
    tc.seed = c.data.seed + 1;
    tc.class_offset = c.data.class_offset + c.data.classes;
    target = generate_dataset(tc);
    p.inputs["target"] = "generated";
  } else {
    target = load_dataset(target_dir);
    p.inputs["target"] = target_dir;
  }
  const auto descriptions = descriptions_for(c, source.manifest(), store, p);
  const auto r = run_zero_shot_transfer(c, source, target, descriptions);
  std::cout << metrics_header() << metrics_row("frozen", r.frozen) << metrics_row("adapted", r.adapted);
  ordered_json results{{"frozen", metrics_json(r.frozen)}, {"adapted", metrics_json(r.adapted)}};
  write_file((dir / "zeroshot.json").string(), results.dump(2) + "\n");
  p.outputs = {"zeroshot.json"};
  p.results = results;
  write_run_json(dir, p, c, f.threads);
  return 0;
}

int cmd_fewshot(const CommonFlags& f, const std::vector<std::int64_t>& shots, const std::string& data_dir,
                const std::string& store, Provenance& p) {
  RunConfig c = resolve(f);
  if (!shots.empty()) c.shots = shots;
  const fs::path dir = prepare_out(f.out);
  Dataset ds = dataset_for(c, data_dir, p);
  const auto descriptions = descriptions_for(c, ds.manifest(), store, p);
  const auto rows = run_few_shot(c, ds, descriptions);
  std::cout << metrics_header();
  ordered_json results = ordered_json::array();
  for (const auto& r : rows) {
    std::cout << metrics_row(fmt::format("K={}", r.shots), r.metrics);
    ordered_json j = metrics_json(r.metrics);
    j["shots"] = r.shots;
    results.push_back(j);
  }
  write_file((dir / "fewshot.json").string(), results.dump(2) + "\n");
  p.outputs = {"fewshot.json"};
  p.results["rows"] = rows.size();
  write_run_json(dir, p, c, f.threads);
  return 0;
}

int cmd_ablate(const CommonFlags& f, std::vector<std::string> axes, Provenance& p) {
  RunConfig c = resolve(f);
  if (axes.empty()) axes = ablation_axes();
  for (const auto& a : axes) {
    try {
      for (const auto& [label, cell] : ablation_cells(c, a)) cell.validate();
    } catch (const Error& e) {
      raise(ErrorKind::kUsage, e.what());
    }
  }
  const fs::path dir = prepare_out(f.out);
  auto provider = make_provider(c);
  const auto cells = run_ablations(c, axes, *provider, [](const AblationCell& cell) {
    std::cerr << fmt::format("done {} = {}: HM {:.1f}\n", cell.axis, cell.value, cell.report.hm);
  });
  const std::string table = format_ablation_table(cells);
  std::cout << table;
  write_file((dir / "ablation.txt").string(), table);
  write_file((dir / "ablation.json").string(), ablation_records(cells).dump(2) + "\n");
  p.outputs = {"ablation.txt", "ablation.json"};
  p.results["cells"] = cells.size();
  write_run_json(dir, p, c, f.threads);
  return 0;
}

int cmd_grad_check(const CommonFlags& f, std::int64_t max_entries, double tolerance, Provenance& p) {
  RunConfig c = resolve(f);
  GradCheckOptions opt;
  opt.max_entries = max_entries;
  opt.seed = c.seed;
  const auto r = check_loss_gradients(c, opt);
  for (const auto& e : r.report.entries) {
    std::cout << fmt::format("{:<32} checked {:>5} rel {:.3e} abs {:.3e}\n", e.name, e.checked, e.max_relative_error,
                             e.max_abs_error);
  }
  const bool ok = r.passed(tolerance);
  std::cout << fmt::format("trainable tensors {}; max relative error {:.3e} (tolerance {:.1e}); frozen gradients {}\n",
                           r.trainable_tensors, r.report.worst(), tolerance,
                           r.report.frozen_with_gradient.empty() && r.frozen_touched.empty() ? "none" : "present");
  if (!f.out.empty()) {
    const fs::path dir = prepare_out(f.out);
    ordered_json results{{"max_relative_error", r.report.worst()}, {"tolerance", tolerance}, {"passed", ok}};
    write_file((dir / "gradcheck.json").string(), results.dump(2) + "\n");
    p.outputs = {"gradcheck.json"};
    p.results = results;
    write_run_json(dir, p, c, f.threads);
  }
  if (!ok) raise(ErrorKind::kNumeric, fmt::format("gradient check failed: max relative error {:.3e}", r.report.worst()));
  return 0;
}

int cmd_count_params(const CommonFlags& f, Provenance& p) {
  RunConfig c = resolve(f);
  ParameterLayout layout = DualEncoder::backbone_layout(c.model);
  for (auto& spec : layout) spec.trainable = false;
  const auto adapters = adapter_layout(c.model, c.adapter);
  layout.insert(layout.end(), adapters.begin(), adapters.end());
  const auto count = count_parameters(layout);
  std::cout << fmt::format("{:<10} {:>14}\n{:<10} {:>14}\n{:<10} {:>14}\n{:<10} {:>14.6f}\n", "backbone",
                           count.total - count.trainable, "trainable", count.trainable, "total", count.total, "ratio",
                           count.ratio());
  if (!f.out.empty()) {
    const fs::path dir = prepare_out(f.out);
    p.results = {{"trainable", count.trainable}, {"total", count.total}, {"ratio", count.ratio()}};
    write_run_json(dir, p, c, f.threads);
  }
  return 0;
}

std::string one_line(std::string s) {
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

int report_error(std::string_view kind, int code, const std::string& message) {
  std::cerr << "error kind=" << kind << " exit=" << code << " message=" << nlohmann::json(one_line(message)).dump()
            << "\n";
  return code;
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-modal spatio-temporal adapters on synthetic video"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Provenance prov;
  prov.argv.assign(argv, argv + argc);

  CommonFlags gen_f, desc_f, train_f, eval_f, zs_f, fs_f, abl_f, gc_f, cp_f;
  GenFlags gen_g;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen, gen_f, "tiny", true);
  gen->add_option("--classes", gen_g.classes, "class count");
  gen->add_option("--per-class", gen_g.per_class, "clips per class");
  gen->add_option("--frames", gen_g.frames, "frames per clip (at least the model window)");
  gen->add_option("--size", gen_g.size, "frame height and width (must match the model)");
  gen->add_option("--temporal-pairs", gen_g.pairs, "fraction of classes generated as reversed twins")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--class-offset", gen_g.offset, "first class number in names");
  gen->add_option("--name", gen_g.name, "dataset name");

  std::string desc_data, desc_provider, desc_endpoint, desc_model;
  auto* desc = app.add_subcommand("describe-gen", "generate the description store");
  add_common(desc, desc_f, "tiny", true);
  desc->add_option("--data,--classes", desc_data, "dataset directory or its manifest.json")
      ->check(CLI::ExistingPath);
  desc->add_option("--provider", desc_provider, "stub or external")->check(CLI::IsMember({"stub", "external"}));
  desc->add_option("--endpoint", desc_endpoint, "chat-completion URL for the external provider");
  desc->add_option("--llm-model", desc_model, "model name sent to the external provider");

  std::string train_data, train_store;
  auto* tr = app.add_subcommand("train", "train adapters and write a checkpoint");
  add_common(tr, train_f, "base2novel-tiny", true);
  tr->add_option("--data", train_data, "dataset directory")->check(CLI::ExistingDirectory);
  tr->add_option("--descriptions", train_store, "description store")->check(CLI::ExistingFile);

  std::string eval_ck, eval_data;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev, eval_f, "tiny", true);
  ev->add_option("--checkpoint", eval_ck, "checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", eval_data, "dataset directory")->check(CLI::ExistingDirectory);

  std::string zs_source, zs_target, zs_store;
  auto* zs = app.add_subcommand("zeroshot", "train on one dataset, evaluate on a class-disjoint one");
  add_common(zs, zs_f, "zeroshot-tiny", true);
  zs->add_option("--source", zs_source, "training dataset directory")->check(CLI::ExistingDirectory);
  zs->add_option("--target", zs_target, "evaluation dataset directory")->check(CLI::ExistingDirectory);
  zs->add_option("--descriptions", zs_store, "description store for the source classes")->check(CLI::ExistingFile);

  std::vector<std::int64_t> fs_shots;
  std::string fs_data, fs_store;
  auto* few = app.add_subcommand("fewshot", "K-shot runs over the shot grid");
  add_common(few, fs_f, "fewshot-tiny", true);
  few->add_option("--shots", fs_shots, "shot counts")->delimiter(',');
  few->add_option("--data", fs_data, "dataset directory")->check(CLI::ExistingDirectory);
  few->add_option("--descriptions", fs_store, "description store")->check(CLI::ExistingFile);

  std::vector<std::string> abl_axes;
  auto* abl = app.add_subcommand("ablate", "ablation grid, one axis varied at a time");
  add_common(abl, abl_f, "tiny", true);
  abl->add_option("--axes", abl_axes, "subset of variant,dims,lambda,alpha,n_desc,layers")->delimiter(',');

  std::int64_t gc_entries = 3;
  double gc_tol = 1e-4;
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of the training loss gradient");
  add_common(gc, gc_f, "tiny", false);
  gc->add_option("--max-entries", gc_entries, "entries probed per tensor (0 = all)")->capture_default_str();
  gc->add_option("--tolerance", gc_tol, "maximum relative error")->capture_default_str();

  auto* cp = app.add_subcommand("count-params", "parameter counts without allocating weights");
  add_common(cp, cp_f, "tiny", false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(error_kind_name(ErrorKind::kUsage), 2, e.what());
  }

  auto* sub = app.get_subcommands().front();
  prov.command = sub->get_name();
  if (sub == gen) return cmd_gen_data(gen_f, gen_g, prov);
  if (sub == desc) return cmd_describe_gen(desc_f, desc_data, desc_provider, desc_endpoint, desc_model, prov);
  if (sub == tr) return cmd_train(train_f, train_data, train_store, prov);
  if (sub == ev) return cmd_eval(eval_f, eval_ck, eval_data, prov);
  if (sub == zs) return cmd_zeroshot(zs_f, zs_source, zs_target, zs_store, prov);
  if (sub == few) return cmd_fewshot(fs_f, fs_shots, fs_data, fs_store, prov);
  if (sub == abl) return cmd_ablate(abl_f, abl_axes, prov);
  if (sub == gc) return cmd_grad_check(gc_f, gc_entries, gc_tol, prov);
  return cmd_count_params(cp_f, prov);
}

}  // namespace
}  // namespace msta

int main(int argc, char** argv) {
  try {
    return msta::run(argc, argv);
  } catch (const msta::Error& e) {
    return msta::report_error(msta::error_kind_name(e.kind()), msta::exit_code_for(e.kind()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return msta::report_error("format", 3, e.what());
  } catch (const std::exception& e) {
    return msta::report_error("internal", 3, e.what());
  }
}
