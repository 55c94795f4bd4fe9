#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "msta/error.h"
#include "msta/evaluation/protocols.h"
#include "msta/numerics/ops.h"

namespace msta {
namespace {

// Small enough that a full train + evaluate cycle takes well under a second.
RunConfig quick_config(std::uint64_t seed = 0) {
  RunConfig c = preset_config("tiny");
  c.set_seed(seed);
  c.model.layers = 2;
  c.adapter.dims = 8;
  c.data.classes = 4;
  c.data.per_class = 8;
  c.train.epochs = 1;
  c.train.warmup_epochs = 0;
  c.train.batch_size = 4;
  c.eval_views = 1;
  c.shots = {1, 2};
  return c;
}

TEST(HarmonicMean, PublishedRowsAndProperties) {
  EXPECT_NEAR(harmonic_mean(78.5, 66.5), 72.0, 0.05);
  EXPECT_NEAR(harmonic_mean(77.5, 57.9), 66.3, 0.05);
  EXPECT_NEAR(harmonic_mean(96.0, 72.9), 82.9, 0.05);
  EXPECT_DOUBLE_EQ(harmonic_mean(40.0, 40.0), 40.0);
  EXPECT_EQ(harmonic_mean(0.0, 0.0), 0.0);
  for (double a : {1.0, 10.0, 55.5, 99.0}) {
    for (double b : {2.0, 33.0, 70.0}) {
      EXPECT_DOUBLE_EQ(harmonic_mean(a, b), harmonic_mean(b, a));
      EXPECT_LE(harmonic_mean(a, b), (a + b) / 2.0);
    }
  }
}

class ClassifyTest : public ::testing::Test {
 protected:
  RunConfig config = quick_config(3);
  Dataset dataset = generate_dataset(config.data);
  DualEncoder model{config.model};
  std::vector<std::string> names = dataset.manifest().classes;
};

TEST_F(ClassifyTest, SingleViewIsDeterministic) {
  const auto& v = dataset.samples().front().video;
  EXPECT_EQ(classify(model, v, names, 1), classify(model, v, names, 1));
  EXPECT_THROW(classify(model, v, {}, 1), Error);
}

TEST_F(ClassifyTest, TwoViewScoresAverageSingleViewScores) {
  const auto& v = dataset.samples()[5].video;
  const auto text = class_text_features(model, names);
  const auto two = class_scores(model, v, text, 2);
  const auto starts = view_starts(v.dim(0), config.model.frames, 2);
  ASSERT_EQ(starts.size(), 2u);
  for (std::size_t k = 0; k < names.size(); ++k) {
    double sum = 0.0;
    for (auto s : starts) {
      const Tensor x = model.encode_video(temporal_crop(v, s, config.model.frames)).value();
      const Tensor& w = text[k];
      double dot = 0.0, nx = 0.0, nw = 0.0;
      for (std::int64_t i = 0; i < x.numel(); ++i) {
        dot += x.at(i) * w.at(i);
        nx += x.at(i) * x.at(i);
        nw += w.at(i) * w.at(i);
      }
      sum += dot / std::sqrt(nx * nw);
    }
    EXPECT_NEAR(two[k], sum / 2.0, 1e-6);
  }
}

TEST_F(ClassifyTest, OwnFeatureRanksFirstAndScaleInvariance) {
  const auto& v = dataset.samples()[2].video;
  auto text = class_text_features(model, names);
  const Tensor own = model.encode_video(temporal_crop(v, view_starts(v.dim(0), config.model.frames, 1)[0],
                                                      config.model.frames))
                         .value();
  text.insert(text.begin() + 2, own);
  EXPECT_EQ(rank_classes(class_scores(model, v, text, 1)).front(), 2);

  auto scaled = text;
  for (std::size_t k = 0; k < scaled.size(); ++k) {
    for (std::int64_t i = 0; i < scaled[k].numel(); ++i) scaled[k].set(i, scaled[k].at(i) * (0.5 + static_cast<double>(k)));
  }
  EXPECT_EQ(rank_classes(class_scores(model, v, text, 1)), rank_classes(class_scores(model, v, scaled, 1)));
}

TEST(RankClasses, TiesKeepLowerPositionFirst) {
  EXPECT_EQ(rank_classes({0.1, 0.5, 0.5, -1.0}), (std::vector<std::int64_t>{1, 2, 0, 3}));
}

TEST(Evaluate, RejectsForeignLabelsAndReportsTop5OnlyWithTenClasses) {
  RunConfig c = quick_config(1);
  Dataset ds = generate_dataset(c.data);
  DualEncoder model(c.model);
  EXPECT_THROW(evaluate(model, ds, ds.manifest().test_ids, {0, 1}, 1), Error);
  EXPECT_THROW(evaluate(model, ds, ds.manifest().test_ids, {0, 1, 2, 99}, 1), Error);
  const auto m = evaluate(model, ds, ds.manifest().test_ids, {0, 1, 2, 3}, 1);
  EXPECT_LT(m.top5, 0.0);
  EXPECT_EQ(m.samples, static_cast<std::int64_t>(ds.manifest().test_ids.size()));

  c.data.classes = 10;
  c.data.per_class = 4;
  Dataset big = generate_dataset(c.data);
  std::vector<std::int64_t> all(10);
  for (int i = 0; i < 10; ++i) all[static_cast<std::size_t>(i)] = i;
  const auto m10 = evaluate(model, big, big.manifest().test_ids, all, 1);
  EXPECT_GE(m10.top5, m10.top1);
  EXPECT_LE(m10.top5, 100.0);
}

TEST(BaseToNovel, ZeroLambdaMatchesFrozenModelAndSchema) {
  RunConfig c = quick_config(2);
  c.adapter.lambda = 0.0;
  Dataset ds = generate_dataset(c.data);
  const auto descriptions = describe_classes(c, ds.manifest());
  TrainedModel trained;
  const auto r = run_base_to_novel(c, ds, descriptions, &trained);
  const auto& m = ds.manifest();
  DualEncoder frozen(c.model);
  const auto fb = evaluate(frozen, ds, ids_in_classes(ds, m.test_ids, m.base_classes), m.base_classes, 1);
  const auto fn = evaluate(frozen, ds, ids_in_classes(ds, m.test_ids, m.novel_classes), m.novel_classes, 1);
  EXPECT_EQ(r.base, fb.top1);
  EXPECT_EQ(r.novel, fn.top1);
  EXPECT_DOUBLE_EQ(r.hm, harmonic_mean(fb.top1, fn.top1));
  const auto j = report_json(r);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"base", "novel", "hm"}));
  EXPECT_GT(r.params.trainable, 0);
  ASSERT_NE(trained.model, nullptr);
}

TEST(BaseToNovel, OverlappingSplitsAbort) {
  RunConfig c = quick_config(2);
  Dataset ds = generate_dataset(c.data);
  ds.mutable_manifest().novel_classes.push_back(ds.manifest().base_classes.front());
  try {
    run_base_to_novel(c, ds, describe_classes(c, ds.manifest()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(FewShot, GridRowsFullSubsetAndSeededRerun) {
  RunConfig c = quick_config(4);
  Dataset ds = generate_dataset(c.data);
  const auto descriptions = describe_classes(c, ds.manifest());
  const auto rows = run_few_shot(c, ds, descriptions);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].train_ids.size(), 4u);
  const auto again = run_few_shot(c, ds, descriptions);
  EXPECT_EQ(rows[1].metrics.top1, again[1].metrics.top1);
  EXPECT_EQ(rows[1].metrics.per_class, again[1].metrics.per_class);

  // K equal to the per-class training count selects every training clip.
  const auto per_class_train = static_cast<std::int64_t>(ds.manifest().train_ids.size()) / c.data.classes;
  c.shots = {per_class_train};
  const auto full = run_few_shot(c, ds, descriptions);
  EXPECT_EQ(full[0].train_ids, ds.manifest().train_ids);
  const auto supervised = run_supervised(c, ds, descriptions);
  EXPECT_EQ(full[0].metrics.top1, supervised.top1);
  EXPECT_EQ(full[0].metrics.per_class, supervised.per_class);
}

TEST(ZeroShot, DisjointnessFrozenRowAndBruteForceAccuracy) {
  RunConfig c = quick_config(5);
  Dataset source = generate_dataset(c.data);
  DataGenConfig tc = c.data;
  tc.seed = 6;
  tc.class_offset = c.data.classes;
  Dataset target = generate_dataset(tc);
  const auto descriptions = describe_classes(c, source.manifest());
  EXPECT_THROW(run_zero_shot_transfer(c, source, source, descriptions), Error);

  const auto r = run_zero_shot_transfer(c, source, target, descriptions);
  EXPECT_EQ(r.adapted.samples, static_cast<std::int64_t>(target.samples().size()));
  EXPECT_EQ(r.frozen.views, 1);

  // Recompute the adapted accuracy with classify() over every target clip.
  std::vector<std::uint64_t> ids;
  for (const auto& s : source.samples()) ids.push_back(s.id);
  std::vector<std::int64_t> classes{0, 1, 2, 3};
  auto trained = train_model(c, source, ids, classes, descriptions);
  std::int64_t correct = 0;
  for (const auto& s : target.samples()) {
    correct += classify(*trained.model, s.video, target.manifest().classes, 1).front() == s.label;
  }
  EXPECT_DOUBLE_EQ(r.adapted.top1, 100.0 * static_cast<double>(correct) / static_cast<double>(target.samples().size()));

  ForwardOptions off;
  off.use_adapters = false;
  std::int64_t frozen_correct = 0;
  for (const auto& s : target.samples()) {
    frozen_correct += classify(*trained.model, s.video, target.manifest().classes, 1, off).front() == s.label;
  }
  EXPECT_DOUBLE_EQ(r.frozen.top1,
                   100.0 * static_cast<double>(frozen_correct) / static_cast<double>(target.samples().size()));
}

TEST(Ablation, ExactCellSets) {
  const RunConfig base = preset_config("tiny");
  auto labels = [&](const std::string& axis) {
    std::vector<std::string> out;
    for (const auto& [l, c] : ablation_cells(base, axis)) out.push_back(l);
    return out;
  };
  EXPECT_EQ(labels("variant"), (std::vector<std::string>{"text-only", "vision-only", "no-shared", "full"}));
  EXPECT_EQ(labels("dims"), (std::vector<std::string>{"64", "128", "256", "512"}));
  EXPECT_EQ(labels("lambda"), (std::vector<std::string>{"0.001", "0.005", "0.01", "0.05"}));
  EXPECT_EQ(labels("alpha"), (std::vector<std::string>{"0.1", "1", "5"}));
  EXPECT_EQ(labels("n_desc"), (std::vector<std::string>{"2", "4", "8"}));
  EXPECT_EQ(labels("layers"), (std::vector<std::string>{"1-6", "1-12", "7-12", "8-12", "10-12"}));
  for (const auto& [l, c] : ablation_cells(base, "layers")) {
    EXPECT_EQ(c.model.layers, 12);
    EXPECT_NO_THROW(c.validate()) << l;
  }
  EXPECT_THROW(ablation_cells(base, "depth"), Error);
}

TEST(Ablation, RunsCellsAndEmitsTableAndRecords) {
  RunConfig c = quick_config(7);
  StubProvider stub(7);
  std::vector<std::string> seen;
  const auto cells = run_ablations(c, {"alpha", "n_desc"}, stub, [&](const AblationCell& cell) {
    seen.push_back(cell.axis + "=" + cell.value);
  });
  ASSERT_EQ(cells.size(), 6u);
  EXPECT_EQ(seen.front(), "alpha=0.1");
  EXPECT_EQ(cells[4].config.n_desc, 4);
  const std::string table = format_ablation_table(cells);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 7);
  const auto records = ablation_records(cells);
  ASSERT_EQ(records.size(), 6u);
  for (const auto& r : records) {
    EXPECT_GT(r["trainable_parameters"].get<std::int64_t>(), 0);
    EXPECT_TRUE(r["metrics"].contains("hm"));
    EXPECT_EQ(r["config_hash"].get<std::string>().size(), 16u);
  }
  // Descriptions change the loss targets, parameter counts do not.
  EXPECT_EQ(records[3]["trainable_parameters"], records[5]["trainable_parameters"]);
}

}  // namespace
}  // namespace msta
