#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "msta/adapters/adapters.h"
#include "msta/error.h"
#include "msta/losses/losses.h"
#include "msta/numerics/gradcheck.h"
#include "test_support.h"

namespace msta {
namespace {

using testing::random_tensor;

Var vec(std::initializer_list<double> v) { return Var(Tensor::from_values({static_cast<std::int64_t>(v.size())}, v)); }

TEST(CeLoss, UniformLogitsGiveLogC) {
  DTypeScope f64(DType::kF64);
  std::vector<Var> w(5, vec({0.3, -1.0, 2.0}));
  EXPECT_NEAR(ce_loss(vec({1.0, 4.0, -2.0}), w, 3, 0.07).value().item(), std::log(5.0), 1e-12);
}

TEST(CeLoss, HandSoftmaxAndScaleInvariance) {
  DTypeScope f64(DType::kF64);
  std::vector<Var> w{vec({1.0, 0.0}), vec({0.0, 1.0})};
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  EXPECT_NEAR(ce_loss(vec({1.0, 0.0}), w, 0, 1.0).value().item(), expected, 1e-12);
  EXPECT_NEAR(expected, 0.3133, 5e-5);
  std::mt19937_64 rng(1);
  Var x(random_tensor({4}, rng));
  std::vector<Var> many{Var(random_tensor({4}, rng)), Var(random_tensor({4}, rng)), Var(random_tensor({4}, rng))};
  EXPECT_NEAR(ce_loss(x, many, 1, 0.07).value().item(), ce_loss(scale(x, 2.0), many, 1, 0.07).value().item(), 1e-12);
  EXPECT_THROW(ce_loss(vec({0.0, 0.0}), w, 0, 1.0), Error);
}

TEST(CeLoss, DecreasesAsTargetSimilarityGrows) {
  DTypeScope f64(DType::kF64);
  std::vector<Var> w{vec({1.0, 0.0, 0.0}), vec({0.0, 1.0, 0.0})};
  // Moving x toward w_0 within the plane orthogonal to w_1 keeps sim(x, w_1) at zero.
  double previous = INFINITY;
  for (double t : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    const double loss = ce_loss(vec({t, 0.0, 1.0}), w, 0, 0.5).value().item();
    EXPECT_LT(loss, previous);
    EXPECT_GE(loss, 0.0);
    previous = loss;
  }
}

TEST(CcLoss, TrivialConfigurations) {
  DTypeScope f64(DType::kF64);
  Tensor d = Tensor::from_values({3}, {1.0, 2.0, -1.0});
  Tensor neg = Tensor::from_values({3}, {-1.0, -2.0, 1.0});
  EXPECT_NEAR(cc_loss(Var(d), d, d).value().item(), 0.0, 1e-12);
  EXPECT_NEAR(cc_loss(vec({2.0, -1.0, 0.0}), d, d).value().item(), 2.0, 1e-12);
  EXPECT_NEAR(cc_loss(Var(neg), d, d).value().item(), 4.0, 1e-12);
  EXPECT_THROW(cc_loss(vec({0.0, 0.0, 0.0}), d, d), Error);
}

TEST(CcLoss, BoundedAndScaleInvariant) {
  DTypeScope f64(DType::kF64);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor w = random_tensor({6}, rng), s = random_tensor({6}, rng), t = random_tensor({6}, rng);
    const double v = cc_loss(Var(w), s, t).value().item();
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 4.0);
    Tensor s3 = s;
    for (std::int64_t i = 0; i < 6; ++i) s3.set(i, 3.0 * s.at(i));
    EXPECT_NEAR(cc_loss(scale(Var(w), 0.5), s3, t).value().item(), v, 1e-12);
  }
}

struct Crafted {
  std::vector<Var> videos{vec({1.0, 0.0}), vec({0.0, 2.0}), vec({1.0, 1.0})};
  std::vector<std::int64_t> labels{0, 1, 0};
  std::vector<Var> classes{vec({1.0, 0.0}), vec({0.0, 1.0})};
  DescriptionBank bank;
  Crafted() {
    bank.insert({0, Tensor::from_values({2}, {1.0, 1.0}), Tensor::from_values({2}, {1.0, 0.0})});
    bank.insert({1, Tensor::from_values({2}, {0.0, 1.0}), Tensor::from_values({2}, {-1.0, 0.0})});
  }
};

TEST(TotalLoss, HandComputedTerms) {
  DTypeScope f64(DType::kF64);
  Crafted b;
  LossConfig config{1.0, 1.0};
  auto terms = combine_losses(b.videos, b.labels, b.classes, b.bank, config);
  // Cosine logits per sample: (1,0), (0,1), (r,r) with r = 1/sqrt 2.
  const double confident = std::log(1.0 + std::exp(-1.0));
  const double ce = (confident + confident + std::log(2.0)) / 3.0;
  const double r = 1.0 / std::sqrt(2.0);
  const double cc = ((2.0 - r - 1.0) + (2.0 - 1.0 - 0.0)) / 2.0;
  EXPECT_NEAR(terms.breakdown.ce, ce, 1e-12);
  EXPECT_NEAR(terms.breakdown.cc, cc, 1e-12);
  EXPECT_NEAR(terms.breakdown.total, ce + cc, 1e-6);
  EXPECT_DOUBLE_EQ(terms.total.value().item(), terms.breakdown.total);
}

TEST(TotalLoss, AlphaZeroAndLinearity) {
  DTypeScope f64(DType::kF64);
  Crafted b;
  auto at = [&](double alpha) { return combine_losses(b.videos, b.labels, b.classes, b.bank, {0.07, alpha}).breakdown; };
  EXPECT_EQ(at(0.0).total, at(0.0).ce);
  const auto one = at(1.0), two = at(2.0);
  EXPECT_NEAR(two.total - two.ce, 2.0 * (one.total - one.ce), 1e-12);
}

TEST(TotalLoss, MissingDescriptionsIsConfigError) {
  Crafted b;
  DescriptionBank partial;
  partial.insert({0, Tensor::from_values({2}, {1.0, 1.0}), Tensor::from_values({2}, {1.0, 0.0})});
  try {
    combine_losses(b.videos, b.labels, b.classes, partial, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
  EXPECT_NO_THROW(combine_losses(b.videos, b.labels, b.classes, partial, {0.07, 0.0}));
  EXPECT_THROW(combine_losses(b.videos, b.labels, b.classes, b.bank, {0.0, 1.0}), Error);
}

TEST(TotalLoss, LogLineFormat) {
  EXPECT_EQ(format_loss_line(12, {0.5, 0.25, 0.75}), "step=12 ce=0.5 cc=0.25 total=0.75");
}

TEST(TotalLoss, AdapterGradientsMatchFiniteDifferencesAndFrozenStayZero) {
  DTypeScope f64(DType::kF64);
  ModelConfig c = ModelConfig::preset_named("tiny");
  DualEncoder model(c);
  std::vector<std::string> classes{"class_00_fwd", "class_01_rev", "class_02_obj"};
  StubProvider stub;
  DescriptionBank bank(model, generate_descriptions(stub, classes, 2), classes);
  AdapterConfig ac;
  ac.dims = 4;
  ac.dropout = 0.0;
  ac.lambda = 0.05;
  inject(model, ac);
  std::mt19937_64 rng(5);
  std::vector<Tensor> videos{random_tensor({c.frames, c.height, c.width, 3}, rng),
                             random_tensor({c.frames, c.height, c.width, 3}, rng)};
  std::vector<std::int64_t> labels{0, 2};
  auto f = [&] { return total_loss(model, videos, labels, classes, bank, {0.07, 1.0}).total; };
  GradCheckOptions opt;
  opt.max_entries = 3;
  auto report = check_gradients(f, model.parameters(), opt);
  EXPECT_EQ(report.entries.size(), model.trainable_parameters().size());
  EXPECT_LT(report.worst(), 1e-4) << report.entries.front().name;
  EXPECT_TRUE(report.frozen_with_gradient.empty());
  for (const auto& p : model.backbone_parameters()) EXPECT_FALSE(p->has_grad()) << p->name();
}

}  // namespace
}  // namespace msta
