#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "msta/error.h"
#include "msta/training/checkpoint.h"
#include "msta/training/optim.h"
#include "msta/training/trainer.h"
#include "msta/util/binary_io.h"

namespace msta {
namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("msta_train_" + std::to_string(::getpid()) + "_" + name);
}

void set_grad(const ParameterPtr& p, std::initializer_list<double> g) {
  Tensor& buf = p->var().node().grad_buffer();
  std::size_t i = 0;
  for (double v : g) buf.set(static_cast<std::int64_t>(i++), v);
  p->var().node().has_grad = true;
}

TEST(AdamW, ZeroGradientAndDecayIsFixedPoint) {
  DTypeScope f64(DType::kF64);
  auto p = make_parameter("w", Tensor::from_values({3}, {1.0, -2.0, 0.5}), true);
  AdamW opt({p}, {0.9, 0.98, 1e-8, 0.0});
  set_grad(p, {0.0, 0.0, 0.0});
  opt.step(0.1);
  EXPECT_EQ(p->value().to_vector(), (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(AdamW, MatchesHandComputedUpdates) {
  DTypeScope f64(DType::kF64);
  auto p = make_parameter("w", Tensor::from_values({1}, {0.7}), true);
  AdamW opt({p}, {0.9, 0.98, 1e-8, 0.001});
  // Independent recomputation of two steps.
  double w = 0.7, m = 0.0, v = 0.0;
  const double lr = 0.01;
  int t = 0;
  for (double g : {0.3, -0.2}) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.98 * v + 0.02 * g * g;
    const double mhat = m / (1 - std::pow(0.9, t)), vhat = v / (1 - std::pow(0.98, t));
    w = w - lr * 0.001 * w - lr * mhat / (std::sqrt(vhat) + 1e-8);
    set_grad(p, {g});
    opt.step(lr);
    EXPECT_NEAR(p->value().item(), w, 1e-12);
  }
  // First step moves by almost exactly lr (normalised moment) plus decay.
  EXPECT_NEAR(0.7 - 0.01 * 0.001 * 0.7 - 0.01, 0.7 - 0.01 * 0.001 * 0.7 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-9);
}

TEST(AdamW, RejectsFrozenParametersAndNonFiniteGradients) {
  auto frozen = make_parameter("f", Tensor({2}), false);
  EXPECT_THROW(AdamW({frozen}), Error);
  auto p = make_parameter("w", Tensor({2}), true);
  AdamW opt({p});
  EXPECT_TRUE(opt.tracks("w"));
  EXPECT_FALSE(opt.tracks("f"));
  set_grad(p, {1.0, NAN});
  try {
    opt.step(0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
    EXPECT_NE(std::string(e.what()).find("w"), std::string::npos);
  }
}

TEST(LrSchedule, WarmupAndCosineEndpoints) {
  EXPECT_EQ(lr_schedule(0, 100, 10, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(5, 100, 10, 0.1), 0.05);
  EXPECT_DOUBLE_EQ(lr_schedule(10, 100, 10, 0.1), 0.1);
  EXPECT_NEAR(lr_schedule(55, 100, 10, 0.1), 0.05, 1e-12);
  EXPECT_NEAR(lr_schedule(99, 100, 10, 0.1), 0.0, 1e-4);
  EXPECT_EQ(lr_schedule(100, 100, 10, 0.1), 0.0);
  double prev = 1.0;
  for (int s = 10; s <= 100; ++s) {
    EXPECT_LE(lr_schedule(s, 100, 10, 0.1), prev + 1e-15);
    prev = lr_schedule(s, 100, 10, 0.1);
  }
}

TEST(ClipGradNorm, ScalesToMaximum) {
  DTypeScope f64(DType::kF64);
  auto a = make_parameter("a", Tensor({2}), true);
  auto b = make_parameter("b", Tensor({1}), true);
  set_grad(a, {3.0, 0.0});
  set_grad(b, {4.0});
  EXPECT_DOUBLE_EQ(clip_grad_norm({a, b}, 1.0), 5.0);
  EXPECT_NEAR(a->grad().at(0), 0.6, 1e-15);
  EXPECT_NEAR(b->grad().at(0), 0.8, 1e-15);
  EXPECT_NEAR(clip_grad_norm({a, b}, 1.0), 1.0, 1e-15);
  EXPECT_NEAR(clip_grad_norm({a, b}, 2.0), 1.0, 1e-15);
  EXPECT_NEAR(b->grad().at(0), 0.8, 1e-15);
}

struct TinySetup {
  RunConfig config;
  Dataset dataset;
  std::vector<std::int64_t> classes;
  std::vector<std::string> names;
  std::vector<ClassDescriptionSet> descriptions;

  explicit TinySetup(std::uint64_t seed) {
    config = preset_config("tiny");
    config.set_seed(seed);
    config.model.layers = 2;
    config.adapter.dims = 16;
    config.data.classes = 4;
    config.data.per_class = 6;
    config.train.batch_size = 4;
    config.train.epochs = 3;
    dataset = generate_dataset(config.data);
    for (std::int64_t c = 0; c < 4; ++c) classes.push_back(c);
    names = class_names(dataset.manifest(), classes);
    StubProvider stub(seed);
    descriptions = generate_descriptions(stub, names, 2);
  }

  struct Run {
    std::unique_ptr<DualEncoder> model;
    TrainResult result;
    Checkpoint initial;
  };

  Run run(const TrainConfig& tc) const {
    Run r;
    r.model = std::make_unique<DualEncoder>(config.model);
    inject(*r.model, config.adapter);
    r.initial = capture_checkpoint(*r.model, "{}", 0, std::mt19937_64(0));
    DescriptionBank bank(*r.model, descriptions, names);
    r.result = train(*r.model, dataset, dataset.manifest().train_ids, classes, bank, tc, config.loss);
    return r;
  }
};

TEST(Train, ZeroEpochsLeavesInitialisation) {
  TinySetup s(0);
  TrainConfig tc = s.config.train;
  tc.epochs = 0;
  tc.warmup_epochs = 0;
  auto r = s.run(tc);
  auto after = capture_checkpoint(*r.model, "{}", 0, std::mt19937_64(0));
  EXPECT_EQ(serialize_checkpoint(after), serialize_checkpoint(r.initial));
  EXPECT_EQ(r.result.total_steps, 0);
}

TEST(Train, DeterministicFrozenBackboneAndLogFormat) {
  TinySetup s(1);
  auto a = s.run(s.config.train);
  auto b = s.run(s.config.train);
  ASSERT_EQ(a.result.steps.size(), b.result.steps.size());
  EXPECT_EQ(std::bit_cast<std::uint64_t>(a.result.steps.back().total),
            std::bit_cast<std::uint64_t>(b.result.steps.back().total));
  EXPECT_EQ(serialize_checkpoint(capture_checkpoint(*a.model, "{}", 1, a.result.rng)),
            serialize_checkpoint(capture_checkpoint(*b.model, "{}", 1, b.result.rng)));
  for (const auto& p : a.model->parameters()) {
    const auto* init = a.initial.find(p->name());
    ASSERT_NE(init, nullptr);
    if (p->name() == "msta.2.temporal_up.bias") {
      // Last layer: the class token only sees the spatial path, so this bias gets no gradient.
      EXPECT_TRUE(p->value().bit_equal(init->value));
    } else if (p->trainable()) {
      EXPECT_FALSE(p->value().bit_equal(init->value)) << p->name();
      EXPECT_TRUE(p->value().all_finite());
    } else {
      EXPECT_TRUE(p->value().bit_equal(init->value)) << p->name();
    }
  }
  std::ostringstream log;
  TrainHooks hooks;
  hooks.log = &log;
  DualEncoder m(s.config.model);
  inject(m, s.config.adapter);
  DescriptionBank bank(m, s.descriptions, s.names);
  TrainConfig one = s.config.train;
  one.epochs = 1;
  train(m, s.dataset, s.dataset.manifest().train_ids, s.classes, bank, one, s.config.loss, hooks);
  EXPECT_EQ(log.str().rfind("step=1 ce=", 0), 0u) << log.str();
}

TEST(Train, RejectsSamplesOutsideTheClassSet) {
  TinySetup s(2);
  DualEncoder m(s.config.model);
  inject(m, s.config.adapter);
  DescriptionBank bank(m, s.descriptions, s.names);
  std::vector<std::int64_t> two{0, 1};
  DescriptionBank small(m, {s.descriptions[0], s.descriptions[1]}, {s.names[0], s.names[1]});
  EXPECT_THROW(train(m, s.dataset, s.dataset.manifest().train_ids, two, small, s.config.train, s.config.loss), Error);
}

TEST(Checkpoint, RoundTripAndRngState) {
  TinySetup s(3);
  DualEncoder m(s.config.model);
  inject(m, s.config.adapter);
  std::mt19937_64 rng(99);
  rng.discard(17);
  auto c = capture_checkpoint(m, s.config.to_json().dump(), 42, rng);
  auto path = temp_path("ck.bin");
  save_checkpoint(path, c);
  auto loaded = load_checkpoint(path);
  EXPECT_EQ(serialize_checkpoint(loaded), serialize_checkpoint(c));
  EXPECT_EQ(loaded.step, 42);
  auto restored = restore_rng(loaded);
  EXPECT_EQ(restored(), rng());
  EXPECT_EQ(RunConfig::from_json(nlohmann::json::parse(loaded.config_json)).to_json(), s.config.to_json());

  DualEncoder other(s.config.model);
  RunConfig shifted = s.config;
  shifted.set_seed(77);
  DualEncoder fresh(shifted.model);
  inject(fresh, shifted.adapter);
  restore_checkpoint(loaded, fresh);
  for (const auto& p : fresh.parameters()) EXPECT_TRUE(p->value().bit_equal(loaded.find(p->name())->value));
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptionAndMismatchErrors) {
  TinySetup s(4);
  DualEncoder m(s.config.model);
  inject(m, s.config.adapter);
  const std::string bytes = serialize_checkpoint(capture_checkpoint(m, "{}", 0, std::mt19937_64(1)));
  try {
    deserialize_checkpoint(bytes.substr(0, bytes.size() / 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
  EXPECT_THROW(deserialize_checkpoint("XXXX" + bytes.substr(4)), Error);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(deserialize_checkpoint(bad_version), Error);

  RunConfig wider = s.config;
  wider.adapter.dims = 8;
  DualEncoder w(wider.model);
  inject(w, wider.adapter);
  try {
    restore_checkpoint(deserialize_checkpoint(bytes), w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
    EXPECT_NE(std::string(e.what()).find("msta.1."), std::string::npos) << e.what();
  }
}

TEST(RunConfig, PresetsIniAndJsonRoundTrip) {
  for (const auto& name : preset_names()) {
    auto c = preset_config(name);
    EXPECT_NO_THROW(c.validate()) << name;
    EXPECT_EQ(RunConfig::from_json(c.to_json()).to_json(), c.to_json()) << name;
  }
  EXPECT_THROW(preset_config("nope"), Error);
  auto path = temp_path("cfg.ini");
  write_file(path.string(), "[run]\npreset = fewshot-tiny\n[adapter]\nlambda = 0.01\nlayers = 9-12\n[loss]\nalpha = 5\n");
  RunConfig c = preset_config("tiny");
  apply_ini(c, path);
  EXPECT_EQ(c.preset, "fewshot-tiny");
  EXPECT_EQ(c.model.layers, 12);
  EXPECT_DOUBLE_EQ(c.adapter.lambda, 0.01);
  EXPECT_EQ(c.adapter.first_layer, 9);
  EXPECT_DOUBLE_EQ(c.loss.alpha, 5.0);
  write_file(path.string(), "[adapter]\nlamda = 0.01\n");
  try {
    apply_ini(c, path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUsage);
  }
  std::filesystem::remove(path);
  EXPECT_EQ(parse_layer_range("8-12"), (std::pair<std::int64_t, std::int64_t>{8, 12}));
  RunConfig a = preset_config("tiny"), b = preset_config("tiny");
  EXPECT_EQ(a.hash(), b.hash());
  b.adapter.lambda = 0.01;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(RunConfig, ShippedConfigFilesLoad) {
  std::int64_t seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(std::filesystem::path(MSTA_SOURCE_DIR) / "configs")) {
    if (entry.path().extension() != ".ini") continue;
    RunConfig c;
    EXPECT_NO_THROW(apply_ini(c, entry.path())) << entry.path();
    EXPECT_NO_THROW(c.validate()) << entry.path();
    EXPECT_EQ(c.loss.alpha, 1.0);
    EXPECT_EQ(c.n_desc, 2);
    ++seen;
  }
  EXPECT_EQ(seen, 4);
}

}  // namespace
}  // namespace msta
