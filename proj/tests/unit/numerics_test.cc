#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "msta/error.h"
#include "msta/numerics/gradcheck.h"
#include "msta/numerics/ops.h"
#include "test_support.h"

namespace msta {
namespace {

using testing::numeric_gradient;
using testing::random_tensor;
using testing::relative_error;

class F64 : public ::testing::Test {
 protected:
  DTypeScope scope_{DType::kF64};
};

TEST(Tensor, ShapeAndValues) {
  Tensor t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6);
  EXPECT_EQ(t.dim(-1), 3);
  EXPECT_DOUBLE_EQ(t.at(4), 5.0);
  EXPECT_THROW(Tensor::from_values({2, 2}, {1, 2, 3}), Error);
  EXPECT_THROW(t.reshaped({4, 2}), Error);
}

TEST_F(F64, LinearIdentityAndHandProduct) {
  Var x(Tensor::from_values({2}, {1, 0}));
  Var eye(Tensor::from_values({2, 2}, {1, 0, 0, 1}));
  Var zero(Tensor::from_values({2}, {0, 0}));
  auto y = linear(x, eye, zero).value();
  EXPECT_EQ(y.to_vector(), (std::vector<double>{1, 0}));

  Var x2(Tensor::from_values({2}, {1, 2}));
  Var w(Tensor::from_values({2, 2}, {1, 1, 1, -1}));
  EXPECT_EQ(linear(x2, w, zero).value().to_vector(), (std::vector<double>{3, -1}));
}

TEST_F(F64, LinearShapeMismatchNamesBothShapes) {
  Var x(Tensor({3, 4}));
  Var w(Tensor({5, 2}));
  try {
    linear(x, w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
    EXPECT_NE(std::string(e.what()).find("[3,4]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[5,2]"), std::string::npos);
  }
}

TEST_F(F64, Conv3dTemporalIdentityKernel) {
  std::mt19937_64 rng(3);
  Var x(random_tensor({3, 2, 2, 4}, rng));
  Tensor k({1, 4, 4});
  for (int i = 0; i < 4; ++i) k.set(i * 4 + i, 1.0);
  auto y = conv3d_temporal(x, Var(k)).value();
  EXPECT_TRUE(y.bit_equal(x.value()));
}

TEST_F(F64, Conv3dTemporalHandConvolution) {
  Var x(Tensor::from_values({3, 1, 1, 1}, {1, 2, 3}));
  Var k(Tensor::from_values({3, 1, 1}, {1, 1, 1}));
  EXPECT_EQ(conv3d_temporal(x, k).value().to_vector(), (std::vector<double>{3, 6, 5}));
}

TEST_F(F64, Conv3dTemporalRejectsEvenKernelAndAllowsLongKernel) {
  Var x(Tensor({2, 1, 1, 1}));
  try {
    conv3d_temporal(x, Var(Tensor({2, 1, 1})));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
  Var x2(Tensor::from_values({2, 1, 1, 1}, {1, 2}));
  Var k5(Tensor::from_values({5, 1, 1}, {1, 1, 1, 1, 1}));
  EXPECT_EQ(conv3d_temporal(x2, k5).value().to_vector(), (std::vector<double>{3, 3}));
}

TEST_F(F64, GeluValues) {
  EXPECT_EQ(gelu(Var(Tensor::from_values({1}, {0.0}))).value().at(0), 0.0);
  EXPECT_NEAR(gelu(Var(Tensor::from_values({1}, {10.0}))).value().at(0), 10.0, 1e-12);
  // 0.5 * 1 * (1 + erf(1/sqrt 2)) = Phi(1)
  EXPECT_NEAR(gelu(Var(Tensor::from_values({1}, {1.0}))).value().at(0), 0.8413447460685429, 1e-12);
}

TEST_F(F64, CosineSimilarityExamples) {
  auto v = [](std::initializer_list<double> xs) {
    return Tensor::from_values({static_cast<std::int64_t>(xs.size())}, xs);
  };
  EXPECT_NEAR(cosine_similarity(v({3, -1, 2}), v({3, -1, 2})), 1.0, 1e-15);
  EXPECT_EQ(cosine_similarity(v({1, 0}), v({0, 1})), 0.0);
  EXPECT_NEAR(cosine_similarity(v({1, 1}), v({1, 0})), 1.0 / std::sqrt(2.0), 1e-15);
  try {
    cosine_similarity(v({0, 0}), v({1, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerate);
  }
}

TEST_F(F64, SoftmaxCrossEntropyExamples) {
  Var uniform(Tensor::from_values({4}, {0.3, 0.3, 0.3, 0.3}));
  EXPECT_NEAR(softmax_cross_entropy(uniform, 1).value().item(), std::log(4.0), 1e-12);
  Var confident(Tensor::from_values({3}, {0, 0, 200}));
  EXPECT_NEAR(softmax_cross_entropy(confident, 2).value().item(), 0.0, 1e-12);
  // log(e + e^2 + e^3) - 3
  Var l(Tensor::from_values({3}, {1, 2, 3}));
  const double expected = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
  EXPECT_NEAR(softmax_cross_entropy(l, 2).value().item(), expected, 1e-12);
  EXPECT_NEAR(expected, 0.4076, 5e-5);
  try {
    softmax_cross_entropy(l, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIndex);
  }
}

TEST_F(F64, SoftmaxSumsToOneAndIsShiftInvariant) {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    Tensor logits = random_tensor({7}, rng, 3.0);
    auto p = softmax(Var(logits)).value();
    double total = 0;
    for (auto v : p.to_vector()) total += v;
    EXPECT_NEAR(total, 1.0, 1e-6);
    Tensor shifted = logits;
    for (std::int64_t i = 0; i < shifted.numel(); ++i) shifted.set(i, shifted.at(i) + 11.5);
    auto q = softmax(Var(shifted)).value();
    for (std::int64_t i = 0; i < p.numel(); ++i) EXPECT_NEAR(p.at(i), q.at(i), 1e-12);
  }
}

TEST_F(F64, CosineSymmetricAndBounded) {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(100 + seed);
    Tensor a = random_tensor({9}, rng), b = random_tensor({9}, rng);
    const double ab = cosine_similarity(a, b);
    EXPECT_EQ(ab, cosine_similarity(b, a));
    EXPECT_LE(std::abs(ab), 1.0 + 1e-9);
    Tensor a3 = a;
    for (std::int64_t i = 0; i < a3.numel(); ++i) a3.set(i, 3.0 * a3.at(i));
    EXPECT_NEAR(cosine_similarity(a3, b), ab, 1e-12);
  }
}

// Random scalar readout r·op(inputs) so every output entry contributes.
double readout(const Tensor& out, const Tensor& weights) {
  double acc = 0;
  for (std::int64_t i = 0; i < out.numel(); ++i) acc += out.at(i) * weights.at(i);
  return acc;
}

struct OpCase {
  const char* name;
  std::vector<Shape> shapes;
  std::function<Var(std::vector<Var>&)> op;
};

class OpGradient : public F64, public ::testing::WithParamInterface<int> {};

std::vector<OpCase> op_cases() {
  return {
      {"linear", {{3, 4}, {4, 5}, {5}}, [](auto& v) { return linear(v[0], v[1], v[2]); }},
      {"linear_batched", {{2, 3, 4}, {4, 2}, {2}}, [](auto& v) { return linear(v[0], v[1], v[2]); }},
      {"conv3d", {{4, 2, 3, 3}, {3, 3, 2}, {2}}, [](auto& v) { return conv3d_temporal(v[0], v[1], v[2]); }},
      {"gelu", {{11}}, [](auto& v) { return gelu(v[0]); }},
      {"layer_norm", {{3, 6}, {6}, {6}}, [](auto& v) { return layer_norm(v[0], v[1], v[2]); }},
      {"attention", {{5, 4}, {5, 4}, {5, 4}}, [](auto& v) { return attention(v[0], v[1], v[2], 2); }},
      {"attention_causal", {{5, 4}, {5, 4}, {5, 4}},
       [](auto& v) { return attention(v[0], v[1], v[2], 2, AttentionMask{true, 3}); }},
      {"softmax", {{2, 5}}, [](auto& v) { return softmax(v[0]); }},
      {"cosine", {{6}, {6}}, [](auto& v) { return cosine_similarity(v[0], v[1]); }},
      {"cross_entropy", {{5}}, [](auto& v) { return softmax_cross_entropy(v[0], 2); }},
      {"mul_scale_by", {{4}, {4}, {}}, [](auto& v) { return scale_by(mul(v[0], v[1]), v[2]); }},
      {"concat_slice", {{2, 3}, {1, 3}},
       [](auto& v) { return slice_rows(concat_rows({v[0], v[1]}), 1, 2); }},
      {"embedding", {{6, 3}}, [](auto& v) {
         const std::int64_t ids[] = {1, 4, 1, 0};
         return embedding(v[0], ids);
       }},
      {"mean_of", {{3}, {3}}, [](auto& v) { return mean_of({v[0], v[1], v[0]}); }},
  };
}

TEST_P(OpGradient, MatchesCentralDifferences) {
  const int seed = GetParam();
  for (const auto& c : op_cases()) {
    std::mt19937_64 rng(1000 * seed + 7);
    std::vector<Var> inputs;
    for (const auto& s : c.shapes) inputs.emplace_back(random_tensor(s, rng), true);
    Var out = c.op(inputs);
    Tensor weights = random_tensor(out.shape(), rng);
    Var loss = sum(mul(out, Var(weights)));
    backward(loss);
    for (auto& in : inputs) {
      auto f = [&] { return readout(c.op(inputs).value(), weights); };
      auto numeric = numeric_gradient(f, in);
      EXPECT_LT(relative_error(in.grad(), numeric), 1e-6) << c.name << " seed " << seed;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradient, ::testing::Range(0, 20));

TEST_F(F64, CheckGradientsLinearFunctionIsExact) {
  std::mt19937_64 rng(5);
  auto w = make_parameter("w", random_tensor({3, 2}, rng), true);
  auto frozen = make_parameter("frozen", random_tensor({2}, rng), false);
  Var x(random_tensor({4, 3}, rng));
  auto report = check_gradients([&] { return sum(linear(x, w->var(), frozen->var())); }, {w, frozen});
  ASSERT_EQ(report.entries.size(), 1u);
  EXPECT_EQ(report.entries[0].name, "w");
  EXPECT_LT(report.worst(), 1e-9);
  EXPECT_TRUE(report.frozen_with_gradient.empty());
}

TEST_F(F64, CheckGradientsPropagatesNonFiniteObjective) {
  auto w = make_parameter("w", Tensor::from_values({1}, {1.0}), true);
  auto f = [&] { return scale(sum(w->var()), std::numeric_limits<double>::infinity()); };
  EXPECT_THROW(check_gradients(f, {w}), Error);
}

TEST(Autograd, FrozenLeafReceivesNoGradient) {
  auto frozen = make_parameter("f", Tensor::from_values({2}, {1, 2}), false);
  auto live = make_parameter("l", Tensor::from_values({2}, {3, 4}), true);
  backward(sum(mul(frozen->var(), live->var())));
  EXPECT_FALSE(frozen->has_grad());
  EXPECT_EQ(live->grad().to_vector(), (std::vector<double>{1, 2}));
}

}  // namespace
}  // namespace msta
