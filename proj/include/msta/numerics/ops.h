#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "msta/numerics/autograd.h"

namespace msta {

enum class Activation { kGelu, kRelu };

// x[..., d_in] @ w[d_in, d_out] + b[d_out]. `b` may be undefined.
Var linear(const Var& x, const Var& w, const Var& b = Var());

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
// s * x for a scalar variable s.
Var scale_by(const Var& x, const Var& s);

Var gelu(const Var& x);
Var relu(const Var& x);
Var activation(const Var& x, Activation kind);

// Normalises over the last axis of x[N, d].
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

struct AttentionMask {
  bool causal = false;
  // Keys at positions >= valid_keys are masked out; -1 keeps every key.
  std::int64_t valid_keys = -1;
};

// Multi-head scaled dot-product attention over q, k, v of shape [N, d].
Var attention(const Var& q, const Var& k, const Var& v, std::int64_t heads,
              AttentionMask mask = {});

// Softmax along the last axis.
Var softmax(const Var& x);

// Temporal convolution with a (kt, 1, 1) kernel: x[T, Hp, Wp, c_in],
// kernel[kt, c_in, c_out], bias[c_out]. Zero padding (kt - 1) / 2 keeps T.
Var conv3d_temporal(const Var& x, const Var& kernel, const Var& bias = Var());

Var embedding(const Var& table, std::span<const std::int64_t> ids);

Var reshape(const Var& x, Shape shape);
// Rows [begin, begin + count) along axis 0.
Var slice_rows(const Var& x, std::int64_t begin, std::int64_t count);
// Row i of x[N, ...] with the leading axis dropped.
Var row(const Var& x, std::int64_t index);
Var concat_rows(const std::vector<Var>& parts);
// Stacks same-shape values along a new leading axis.
Var stack(const std::vector<Var>& parts);

Var sum(const Var& x);
Var mean(const Var& x);
// Elementwise mean of same-shape values.
Var mean_of(const std::vector<Var>& parts);

Var dropout(const Var& x, double p, std::mt19937_64& rng);

// Scalar cosine similarity of two vectors. Zero-norm input is an error.
Var cosine_similarity(const Var& a, const Var& b);
double cosine_similarity(const Tensor& a, const Tensor& b);

// -log softmax(logits)[target] for logits[C].
Var softmax_cross_entropy(const Var& logits, std::int64_t target);

// Sum of squares over every element.
double squared_norm(const Tensor& t);

}  // namespace msta
