#include "msta/numerics/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "msta/error.h"

namespace msta {
namespace {

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    raise(ErrorKind::kConfig, std::string(op) + ": mixed dtypes " + dtype_name(a.dtype()) +
                                  " and " + dtype_name(b.dtype()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    raise(ErrorKind::kDimension, std::string(op) + ": shape mismatch " +
                                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  require_same_dtype(a, b, op);
}

bool wants_grad(const Node& self, std::size_t i) {
  return self.inputs.size() > i && self.inputs[i] && self.inputs[i]->requires_grad;
}

// C[M,N] += A[M,K] B[K,N]. Four rows of C and four steps of K are updated
// per pass over a row of B; each C entry still sums over K in order.
template <class T>
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c) {
  std::int64_t i = 0;
  for (; i + 4 <= m; i += 4) {
    T* __restrict c0 = c + i * n;
    T* __restrict c1 = c0 + n;
    T* __restrict c2 = c1 + n;
    T* __restrict c3 = c2 + n;
    const T* a0 = a + i * k;
    const T* a1 = a0 + k;
    const T* a2 = a1 + k;
    const T* a3 = a2 + k;
    std::int64_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const T* __restrict b0 = b + p * n;
      const T* __restrict b1 = b0 + n;
      const T* __restrict b2 = b1 + n;
      const T* __restrict b3 = b2 + n;
      const T x00 = a0[p], x01 = a0[p + 1], x02 = a0[p + 2], x03 = a0[p + 3];
      const T x10 = a1[p], x11 = a1[p + 1], x12 = a1[p + 2], x13 = a1[p + 3];
      const T x20 = a2[p], x21 = a2[p + 1], x22 = a2[p + 2], x23 = a2[p + 3];
      const T x30 = a3[p], x31 = a3[p + 1], x32 = a3[p + 2], x33 = a3[p + 3];
      for (std::int64_t j = 0; j < n; ++j) {
        const T y0 = b0[j], y1 = b1[j], y2 = b2[j], y3 = b3[j];
        c0[j] = c0[j] + x00 * y0 + x01 * y1 + x02 * y2 + x03 * y3;
        c1[j] = c1[j] + x10 * y0 + x11 * y1 + x12 * y2 + x13 * y3;
        c2[j] = c2[j] + x20 * y0 + x21 * y1 + x22 * y2 + x23 * y3;
        c3[j] = c3[j] + x30 * y0 + x31 * y1 + x32 * y2 + x33 * y3;
      }
    }
    for (; p < k; ++p) {
      const T* __restrict bp = b + p * n;
      const T x0 = a0[p], x1 = a1[p], x2 = a2[p], x3 = a3[p];
      for (std::int64_t j = 0; j < n; ++j) {
        const T y = bp[j];
        c0[j] += x0 * y;
        c1[j] += x1 * y;
        c2[j] += x2 * y;
        c3[j] += x3 * y;
      }
    }
  }
  for (; i < m; ++i) {
    T* __restrict ci = c + i * n;
    const T* ai = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* __restrict bp = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[M,N] += A[M,K] B[N,K]^T. B is transposed once so the inner loop is the
// same unit-stride axpy as gemm_nn.
template <class T>
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c) {
  std::vector<T> bt(static_cast<std::size_t>(n * k));
  for (std::int64_t j = 0; j < n; ++j) {
    for (std::int64_t p = 0; p < k; ++p) bt[static_cast<std::size_t>(p * n + j)] = b[j * k + p];
  }
  gemm_nn<T>(m, n, k, a, bt.data(), c);
}

// C[M,N] += A[K,M]^T B[K,N]. Same blocking as gemm_nn with A read by column.
template <class T>
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c) {
  std::vector<T> at(static_cast<std::size_t>(m * k));
  for (std::int64_t p = 0; p < k; ++p) {
    for (std::int64_t i = 0; i < m; ++i) at[static_cast<std::size_t>(i * k + p)] = a[p * m + i];
  }
  gemm_nn<T>(m, n, k, at.data(), b, c);
}

template <class T>
T gelu_value(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <class T>
T gelu_derivative(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
  return cdf + x * pdf;
}

Var unary_elementwise(const Var& x, Activation kind) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape(), xv.dtype());
  dispatch_dtype(xv.dtype(), [&]<class T>() {
    auto in = xv.data<T>();
    auto out = y.data<T>();
    for (std::size_t i = 0; i < in.size(); ++i) {
      out[i] = kind == Activation::kGelu ? gelu_value(in[i]) : std::max(in[i], T(0));
    }
  });
  return make_node(std::move(y), {x}, [kind](Node& self) {
    const Tensor& xv = self.inputs[0]->value;
    Tensor& dx = self.inputs[0]->grad_buffer();
    dispatch_dtype(xv.dtype(), [&]<class T>() {
      auto in = xv.data<T>();
      auto g = std::as_const(self.grad).data<T>();
      auto d = dx.data<T>();
      for (std::size_t i = 0; i < in.size(); ++i) {
        const T slope = kind == Activation::kGelu ? gelu_derivative(in[i])
                                                  : (in[i] > T(0) ? T(1) : T(0));
        d[i] += g[i] * slope;
      }
    });
  });
}

}  // namespace

Var linear(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() < 1 || wv.rank() != 2 || xv.shape().back() != wv.dim(0)) {
    raise(ErrorKind::kDimension, "linear: input " + shape_string(xv.shape()) +
                                     " incompatible with weight " + shape_string(wv.shape()));
  }
  require_same_dtype(xv, wv, "linear");
  const std::int64_t din = wv.dim(0);
  const std::int64_t dout = wv.dim(1);
  if (b.defined() && (b.value().rank() != 1 || b.value().dim(0) != dout)) {
    raise(ErrorKind::kDimension, "linear: bias " + shape_string(b.value().shape()) +
                                     " incompatible with weight " + shape_string(wv.shape()));
  }
  const std::int64_t rows = din == 0 ? 0 : xv.numel() / din;
  Shape out_shape = xv.shape();
  out_shape.back() = dout;
  Tensor y(out_shape, xv.dtype());
  dispatch_dtype(xv.dtype(), [&]<class T>() {
    auto out = y.data<T>();
    if (b.defined()) {
      auto bias = b.value().data<T>();
      for (std::int64_t i = 0; i < rows; ++i) {
        std::copy(bias.begin(), bias.end(), out.begin() + i * dout);
      }
    }
    gemm_nn<T>(rows, dout, din, xv.data<T>().data(), wv.data<T>().data(), out.data());
  });
  return make_node(std::move(y), {x, w, b}, [rows, din, dout](Node& self) {
    const Tensor& xv = self.inputs[0]->value;
    const Tensor& wv = self.inputs[1]->value;
    dispatch_dtype(xv.dtype(), [&]<class T>() {
      const T* g = std::as_const(self.grad).data<T>().data();
      if (wants_grad(self, 0)) {
        gemm_nt<T>(rows, din, dout, g, wv.data<T>().data(),
                   self.inputs[0]->grad_buffer().data<T>().data());
      }
      if (wants_grad(self, 1)) {
        gemm_tn<T>(din, dout, rows, xv.data<T>().data(), g,
                   self.inputs[1]->grad_buffer().data<T>().data());
      }
      if (wants_grad(self, 2)) {
        auto db = self.inputs[2]->grad_buffer().data<T>();
        for (std::int64_t i = 0; i < rows; ++i) {
          for (std::int64_t j = 0; j < dout; ++j) db[j] += g[i * dout + j];
        }
      }
    });
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  y.add_(b.value());
  return make_node(std::move(y), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (wants_grad(self, i)) self.inputs[i]->grad_buffer().add_(self.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y(a.shape(), a.value().dtype());
  dispatch_dtype(y.dtype(), [&]<class T>() {
    auto av = a.value().data<T>();
    auto bv = b.value().data<T>();
    auto out = y.data<T>();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  });
  return make_node(std::move(y), {a, b}, [](Node& self) {
    dispatch_dtype(self.value.dtype(), [&]<class T>() {
      auto g = std::as_const(self.grad).data<T>();
      for (std::size_t k = 0; k < 2; ++k) {
        if (!wants_grad(self, k)) continue;
        auto other = std::as_const(self.inputs[1 - k]->value).data<T>();
        auto d = self.inputs[k]->grad_buffer().data<T>();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * other[i];
      }
    });
  });
}

Var scale(const Var& x, double factor) {
  Tensor y(x.shape(), x.value().dtype());
  dispatch_dtype(y.dtype(), [&]<class T>() {
    auto in = x.value().data<T>();
    auto out = y.data<T>();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * static_cast<T>(factor);
  });
  return make_node(std::move(y), {x}, [factor](Node& self) {
    dispatch_dtype(self.value.dtype(), [&]<class T>() {
      auto g = std::as_const(self.grad).data<T>();
      auto d = self.inputs[0]->grad_buffer().data<T>();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * static_cast<T>(factor);
    });
  });
}

Var scale_by(const Var& x, const Var& s) {
  if (s.value().numel() != 1) {
    raise(ErrorKind::kDimension, "scale_by: factor must be scalar, got " +
                                     shape_string(s.shape()));
  }
  require_same_dtype(x.value(), s.value(), "scale_by");
  Tensor y(x.shape(), x.value().dtype());
  dispatch_dtype(y.dtype(), [&]<class T>() {
    const T factor = s.value().data<T>()[0];
    auto in = x.value().data<T>();
    auto out = y.data<T>();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * factor;
  });
  return make_node(std::move(y), {x, s}, [](Node& self) {
    dispatch_dtype(self.value.dtype(), [&]<class T>() {
      auto g = std::as_const(self.grad).data<T>();
      const T factor = std::as_const(self.inputs[1]->value).data<T>()[0];
      auto xin = std::as_const(self.inputs[0]->value).data<T>();
      if (wants_grad(self, 0)) {
        auto d = self.inputs[0]->grad_buffer().data<T>();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
      }
      if (wants_grad(self, 1)) {
        T acc = 0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xin[i];
        self.inputs[1]->grad_buffer().data<T>()[0] += acc;
      }
    });
  });
}

Var gelu(const Var& x) { return unary_elementwise(x, Activation::kGelu); }
Var relu(const Var& x) { return unary_elementwise(x, Activation::kRelu); }
Var activation(const Var& x, Activation kind) { return unary_elementwise(x, kind); }

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Tensor& xv = x.value();
  const std::int64_t d = xv.shape().back();
  if (gamma.value().numel() != d || beta.value().numel() != d) {
    raise(ErrorKind::kDimension, "layer_norm: affine parameters do not match width of " +
                                     shape_string(xv.shape()));
  }
  const std::int64_t rows = xv.numel() / d;
  auto stats = std::make_shared<std::vector<double>>(static_cast<std::size_t>(2 * rows));
  Tensor y(xv.shape(), xv.dtype());
  dispatch_dtype(xv.dtype(), [&]<class T>() {
    auto in = xv.data<T>();
    auto out = y.data<T>();
    auto g = gamma.value().data<T>();
    auto bt = beta.value().data<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* xr = in.data() + r * d;
      double mu = 0;
      for (std::int64_t j = 0; j < d; ++j) mu += xr[j];
      mu /= static_cast<double>(d);
      double var = 0;
      for (std::int64_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
      var /= static_cast<double>(d);
      const double rstd = 1.0 / std::sqrt(var + eps);
      (*stats)[2 * r] = mu;
      (*stats)[2 * r + 1] = rstd;
      for (std::int64_t j = 0; j < d; ++j) {
        out[r * d + j] = static_cast<T>((xr[j] - mu) * rstd) * g[j] + bt[j];
      }
    }
  });
  return make_node(std::move(y), {x, gamma, beta}, [stats, rows, d](Node& self) {
    dispatch_dtype(self.value.dtype(), [&]<class T>() {
      auto in = std::as_const(self.inputs[0]->value).data<T>();
      auto gm = std::as_const(self.inputs[1]->value).data<T>();
      auto g = std::as_const(self.grad).data<T>();
      T* dx = wants_grad(self, 0) ? self.inputs[0]->grad_buffer().data<T>().data() : nullptr;
      T* dgamma = wants_grad(self, 1) ? self.inputs[1]->grad_buffer().data<T>().data() : nullptr;
      T* dbeta = wants_grad(self, 2) ? self.inputs[2]->grad_buffer().data<T>().data() : nullptr;
      std::vector<double> xhat(static_cast<std::size_t>(d));
      std::vector<double> dxhat(static_cast<std::size_t>(d));
      for (std::int64_t r = 0; r < rows; ++r) {
        const double mu = (*stats)[2 * r];
        const double rstd = (*stats)[2 * r + 1];
        double mean_dxhat = 0;
        double mean_dxhat_xhat = 0;
        for (std::int64_t j = 0; j < d; ++j) {
          xhat[j] = (in[r * d + j] - mu) * rstd;
          const double gj = g[r * d + j];
          dxhat[j] = gj * gm[j];
          mean_dxhat += dxhat[j];
          mean_dxhat_xhat += dxhat[j] * xhat[j];
          if (dgamma) dgamma[j] += static_cast<T>(gj * xhat[j]);
          if (dbeta) dbeta[j] += static_cast<T>(gj);
        }
        if (!dx) continue;
        mean_dxhat /= static_cast<double>(d);
        mean_dxhat_xhat /= static_cast<double>(d);
        for (std::int64_t j = 0; j < d; ++j) {
          dx[r * d + j] +=
              static_cast<T>(rstd * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat));
        }
      }
    });
  });
}

Var attention(const Var& q, const Var& k, const Var& v, std::int64_t heads, AttentionMask mask) {
  const Tensor& qv = q.value();
  require_same_shape(qv, k.value(), "attention");
  require_same_shape(qv, v.value(), "attention");
  if (qv.rank() != 2 || heads <= 0 || qv.dim(1) % heads != 0) {
    raise(ErrorKind::kDimension, "attention: width of " + shape_string(qv.shape()) +
                                     " not divisible into " + std::to_string(heads) + " heads");
  }
  const std::int64_t n = qv.dim(0);
  const std::int64_t d = qv.dim(1);
  const std::int64_t dh = d / heads;
  const std::int64_t valid = mask.valid_keys < 0 ? n : std::min(mask.valid_keys, n);
  if (valid <= 0 && n > 0) raise(ErrorKind::kConfig, "attention: every key is masked");
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool causal = mask.causal;
  auto limit = [=](std::int64_t i) { return causal ? std::min(i + 1, valid) : valid; };

  Tensor probs_t(Shape{heads, n, n}, qv.dtype());
  Tensor y(qv.shape(), qv.dtype());
  dispatch_dtype(qv.dtype(), [&]<class T>() {
    auto qd = qv.data<T>();
    auto kd = k.value().data<T>();
    auto vd = v.value().data<T>();
    auto pd = probs_t.data<T>();
    auto out = y.data<T>();
    const T sc = static_cast<T>(scale_factor);
    for (std::int64_t h = 0; h < heads; ++h) {
      for (std::int64_t i = 0; i < n; ++i) {
        T* p = pd.data() + (h * n + i) * n;
        const std::int64_t lim = limit(i);
        T mx = -std::numeric_limits<T>::infinity();
        for (std::int64_t j = 0; j < lim; ++j) {
          T acc = 0;
          for (std::int64_t c = 0; c < dh; ++c) acc += qd[i * d + h * dh + c] * kd[j * d + h * dh + c];
          p[j] = acc * sc;
          mx = std::max(mx, p[j]);
        }
        T total = 0;
        for (std::int64_t j = 0; j < lim; ++j) {
          p[j] = std::exp(p[j] - mx);
          total += p[j];
        }
        for (std::int64_t j = 0; j < lim; ++j) p[j] /= total;
        T* o = out.data() + i * d + h * dh;
        for (std::int64_t j = 0; j < lim; ++j) {
          const T pj = p[j];
          const T* vj = vd.data() + j * d + h * dh;
          for (std::int64_t c = 0; c < dh; ++c) o[c] += pj * vj[c];
        }
      }
    }
  });

  return make_node(std::move(y), {q, k, v},
                   [probs = std::move(probs_t), n, d, dh, heads, scale_factor, limit](Node& self) {
    dispatch_dtype(self.value.dtype(), [&]<class T>() {
      auto qd = std::as_const(self.inputs[0]->value).data<T>();
      auto kd = std::as_const(self.inputs[1]->value).data<T>();
      auto vd = std::as_const(self.inputs[2]->value).data<T>();
      auto pd = probs.data<T>();
      auto g = std::as_const(self.grad).data<T>();
      T* dq = wants_grad(self, 0) ? self.inputs[0]->grad_buffer().data<T>().data() : nullptr;
      T* dk = wants_grad(self, 1) ? self.inputs[1]->grad_buffer().data<T>().data() : nullptr;
      T* dv = wants_grad(self, 2) ? self.inputs[2]->grad_buffer().data<T>().data() : nullptr;
      const T sc = static_cast<T>(scale_factor);
      std::vector<T> ds(static_cast<std::size_t>(n));
      for (std::int64_t h = 0; h < heads; ++h) {
        for (std::int64_t i = 0; i < n; ++i) {
          const T* p = pd.data() + (h * n + i) * n;
          const T* gi = g.data() + i * d + h * dh;
          const std::int64_t lim = limit(i);
          T dot = 0;
          for (std::int64_t j = 0; j < lim; ++j) {
            const T* vj = vd.data() + j * d + h * dh;
            T dp = 0;
            for (std::int64_t c = 0; c < dh; ++c) dp += gi[c] * vj[c];
            ds[j] = dp;
            dot += dp * p[j];
            if (dv) {
              T* dvj = dv + j * d + h * dh;
              for (std::int64_t c = 0; c < dh; ++c) dvj[c] += p[j] * gi[c];
            }
          }
          for (std::int64_t j = 0; j < lim; ++j) ds[j] = p[j] * (ds[j] - dot) * sc;
          if (dq) {
            T* dqi = dq + i * d + h * dh;
            for (std::int64_t j = 0; j < lim; ++j) {
              const T* kj = kd.data() + j * d + h * dh;
              for (std::int64_t c = 0; c < dh; ++c) dqi[c] += ds[j] * kj[c];
            }
          }
          if (dk) {
            const T* qi = qd.data() + i * d + h * dh;
            for (std::int64_t j = 0; j < lim; ++j) {
              T* dkj = dk + j * d + h * dh;
              for (std::int64_t c = 0; c < dh; ++c) dkj[c] += ds[j] * qi[c];
            }
          }
        }
      }
    });
  });
}

Var softmax(const Var& x) {
  const Tensor& xv = x.value();
  const std::int64_t d = xv.rank() == 0 ? 1 : xv.shape().back();
  const std::int64_t rows = d == 0 ? 0 : xv.numel() / d;
  Tensor y(xv.shape(), xv.dtype());
  dispatch_dtype(xv.dtype(), [&]<class T>() {
    auto in = xv.data<T>();
    auto out = y.data<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::int64_t j = 0; j < d; ++j) mx = std::max(mx, in[r * d + j]);
      T total = 0;
      for (std::int64_t j = 0; j < d; ++j) {
        out[r * d + j] = std::exp(in[r * d + j] - mx);
        total += out[r * d + j];
      }
      for (std::int64_t j = 0; j < d; ++j) out[r * d + j] /= total;
    }
  });
  return make_node(std::move(y), {x}, [rows, d](Node& self) {
    dispatch_dtype(self.value.dtype(), [&]<class T>() {
      auto yv = std::as_const(self.value).data<T>();
      auto g = std::as_const(self.grad).data<T>();
      auto dx = self.inputs[0]->grad_buffer().data<T>();
      for (std::int64_t r = 0; r < rows; ++r) {
        T dot = 0;
        for (std::int64_t j = 0; j < d; ++j) dot += g[r * d + j] * yv[r * d + j];
        for (std::int64_t j = 0; j < d; ++j) dx[r * d + j] += yv[r * d + j] * (g[r * d + j] - dot);
      }
    });
  });
}

Var conv3d_temporal(const Var& x, const Var& kernel, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  if (kv.rank() != 3) {
    raise(ErrorKind::kDimension, "conv3d_temporal: kernel must be [kt, c_in, c_out], got " +
                                     shape_string(kv.shape()));
  }
  const std::int64_t kt = kv.dim(0);
  if (kt % 2 == 0) {
    raise(ErrorKind::kConfig, "conv3d_temporal: temporal kernel extent must be odd, got " +
                                  std::to_string(kt));
  }
  if (xv.rank() != 4 || xv.dim(3) != kv.dim(1)) {
    raise(ErrorKind::kDimension, "conv3d_temporal: input " + shape_string(xv.shape()) +
                                     " incompatible with kernel " + shape_string(kv.shape()));
  }
  require_same_dtype(xv, kv, "conv3d_temporal");
  const std::int64_t frames = xv.dim(0);
  const std::int64_t cells = xv.dim(1) * xv.dim(2);
  const std::int64_t cin = kv.dim(1);
  const std::int64_t cout = kv.dim(2);
  if (bias.defined() && bias.value().numel() != cout) {
    raise(ErrorKind::kDimension, "conv3d_temporal: bias " + shape_string(bias.shape()) +
                                     " does not match c_out=" + std::to_string(cout));
  }
  const std::int64_t pad = (kt - 1) / 2;
  Tensor y(Shape{xv.dim(0), xv.dim(1), xv.dim(2), cout}, xv.dtype());
  dispatch_dtype(xv.dtype(), [&]<class T>() {
    auto in = xv.data<T>();
    auto kd = kv.data<T>();
    auto out = y.data<T>();
    if (bias.defined()) {
      auto b = bias.value().data<T>();
      for (std::int64_t r = 0; r < frames * cells; ++r) {
        std::copy(b.begin(), b.end(), out.begin() + r * cout);
      }
    }
    for (std::int64_t t = 0; t < frames; ++t) {
      for (std::int64_t tap = 0; tap < kt; ++tap) {
        const std::int64_t src = t + tap - pad;
        if (src < 0 || src >= frames) continue;
        gemm_nn<T>(cells, cout, cin, in.data() + src * cells * cin, kd.data() + tap * cin * cout,
                   out.data() + t * cells * cout);
      }
    }
  });
  return make_node(std::move(y), {x, kernel, bias},
                   [frames, cells, cin, cout, kt, pad](Node& self) {
    dispatch_dtype(self.value.dtype(), [&]<class T>() {
      auto in = std::as_const(self.inputs[0]->value).data<T>();
      auto kd = std::as_const(self.inputs[1]->value).data<T>();
      const T* g = std::as_const(self.grad).data<T>().data();
      T* dx = wants_grad(self, 0) ? self.inputs[0]->grad_buffer().data<T>().data() : nullptr;
      T* dk = wants_grad(self, 1) ? self.inputs[1]->grad_buffer().data<T>().data() : nullptr;
      for (std::int64_t t = 0; t < frames; ++t) {
        for (std::int64_t tap = 0; tap < kt; ++tap) {
          const std::int64_t src = t + tap - pad;
          if (src < 0 || src >= frames) continue;
          const T* gt = g + t * cells * cout;
          if (dx) gemm_nt<T>(cells, cin, cout, gt, kd.data() + tap * cin * cout, dx + src * cells * cin);
          if (dk) gemm_tn<T>(cin, cout, cells, in.data() + src * cells * cin, gt, dk + tap * cin * cout);
        }
      }
      if (wants_grad(self, 2)) {
        auto db = self.inputs[2]->grad_buffer().data<T>();
        for (std::int64_t r = 0; r < frames * cells; ++r) {
          for (std::int64_t o = 0; o < cout; ++o) db[o] += g[r * cout + o];
        }
      }
    });
  });
}

Var embedding(const Var& table, std::span<const std::int64_t> ids) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) {
    raise(ErrorKind::kDimension, "embedding: table must be rank 2, got " + shape_string(tv.shape()));
  }
  const std::int64_t vocab = tv.dim(0);
  const std::int64_t d = tv.dim(1);
  for (auto id : ids) {
    if (id < 0 || id >= vocab) {
      raise(ErrorKind::kVocabulary, "token id " + std::to_string(id) +
                                        " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  std::vector<std::int64_t> idx(ids.begin(), ids.end());
  Tensor y(Shape{static_cast<std::int64_t>(idx.size()), d}, tv.dtype());
  dispatch_dtype(tv.dtype(), [&]<class T>() {
    auto src = tv.data<T>();
    auto out = y.data<T>();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::copy_n(src.begin() + idx[i] * d, d, out.begin() + static_cast<std::int64_t>(i) * d);
    }
  });
  return make_node(std::move(y), {table}, [idx = std::move(idx), d](Node& self) {
    dispatch_dtype(self.value.dtype(), [&]<class T>() {
      auto g = std::as_const(self.grad).data<T>();
      auto dt = self.inputs[0]->grad_buffer().data<T>();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::int64_t j = 0; j < d; ++j) dt[idx[i] * d + j] += g[static_cast<std::int64_t>(i) * d + j];
      }
    });
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return make_node(std::move(y), {x}, [](Node& self) {
    Tensor& dx = self.inputs[0]->grad_buffer();
    dx.add_(self.grad.reshaped(dx.shape()));
  });
}

Var slice_rows(const Var& x, std::int64_t begin, std::int64_t count) {
  const Tensor& xv = x.value();
  if (xv.rank() < 1 || begin < 0 || count < 0 || begin + count > xv.dim(0)) {
    raise(ErrorKind::kIndex, "slice_rows: [" + std::to_string(begin) + ", " +
                                 std::to_string(begin + count) + ") outside " +
                                 shape_string(xv.shape()));
  }
  const std::int64_t stride = xv.dim(0) == 0 ? 0 : xv.numel() / xv.dim(0);
  Shape out_shape = xv.shape();
  out_shape[0] = count;
  Tensor y(out_shape, xv.dtype());
  dispatch_dtype(xv.dtype(), [&]<class T>() {
    auto in = xv.data<T>();
    std::copy_n(in.begin() + begin * stride, count * stride, y.data<T>().begin());
  });
  return make_node(std::move(y), {x}, [begin, stride](Node& self) {
    dispatch_dtype(self.value.dtype(), [&]<class T>() {
      auto g = std::as_const(self.grad).data<T>();
      auto dx = self.inputs[0]->grad_buffer().data<T>();
      for (std::size_t i = 0; i < g.size(); ++i) dx[begin * stride + static_cast<std::int64_t>(i)] += g[i];
    });
  });
}

Var row(const Var& x, std::int64_t index) {
  Var r = slice_rows(x, index, 1);
  Shape s(x.shape().begin() + 1, x.shape().end());
  return reshape(r, s);
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) raise(ErrorKind::kDimension, "concat_rows: no inputs");
  const Tensor& first = parts.front().value();
  Shape tail(first.shape().begin() + 1, first.shape().end());
  std::int64_t rows = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    if (v.rank() != first.rank() || Shape(v.shape().begin() + 1, v.shape().end()) != tail) {
      raise(ErrorKind::kDimension, "concat_rows: " + shape_string(v.shape()) +
                                       " incompatible with " + shape_string(first.shape()));
    }
    require_same_dtype(v, first, "concat_rows");
    rows += v.dim(0);
  }
  Shape out_shape = first.shape();
  out_shape[0] = rows;
  Tensor y(out_shape, first.dtype());
  std::vector<std::int64_t> offsets;
  dispatch_dtype(first.dtype(), [&]<class T>() {
    auto out = y.data<T>();
    std::int64_t off = 0;
    for (const auto& p : parts) {
      offsets.push_back(off);
      auto in = p.value().data<T>();
      std::copy(in.begin(), in.end(), out.begin() + off);
      off += static_cast<std::int64_t>(in.size());
    }
  });
  return make_node(std::move(y), parts, [offsets = std::move(offsets)](Node& self) {
    dispatch_dtype(self.value.dtype(), [&]<class T>() {
      auto g = std::as_const(self.grad).data<T>();
      for (std::size_t k = 0; k < self.inputs.size(); ++k) {
        if (!wants_grad(self, k)) continue;
        auto d = self.inputs[k]->grad_buffer().data<T>();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[offsets[k] + static_cast<std::int64_t>(i)];
      }
    });
  });
}

Var stack(const std::vector<Var>& parts) {
  std::vector<Var> rows;
  rows.reserve(parts.size());
  for (const auto& p : parts) {
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    rows.push_back(reshape(p, s));
  }
  return concat_rows(rows);
}

Var sum(const Var& x) {
  const Tensor& xv = x.value();
  const double total = dispatch_dtype(xv.dtype(), [&]<class T>() {
    T acc = 0;
    for (auto v : xv.data<T>()) acc += v;
    return static_cast<double>(acc);
  });
  return make_node(Tensor::scalar(total, xv.dtype()), {x}, [](Node& self) {
    const double g = self.grad.at(0);
    dispatch_dtype(self.value.dtype(), [&]<class T>() {
      for (auto& d : self.inputs[0]->grad_buffer().data<T>()) d += static_cast<T>(g);
    });
  });
}

Var mean(const Var& x) {
  const auto n = x.value().numel();
  if (n == 0) raise(ErrorKind::kDimension, "mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var mean_of(const std::vector<Var>& parts) {
  if (parts.empty()) raise(ErrorKind::kDimension, "mean_of: no inputs");
  Var acc = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
  return scale(acc, 1.0 / static_cast<double>(parts.size()));
}

Var dropout(const Var& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) raise(ErrorKind::kConfig, "dropout probability must be < 1");
  const Tensor& xv = x.value();
  Tensor keep(xv.shape(), xv.dtype());
  std::bernoulli_distribution draw(1.0 - p);
  const double inv = 1.0 / (1.0 - p);
  for (std::int64_t i = 0; i < keep.numel(); ++i) keep.set(i, draw(rng) ? inv : 0.0);
  return mul(x, Var(std::move(keep)));
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    raise(ErrorKind::kDimension, "cosine_similarity: " + shape_string(a.shape()) + " vs " +
                                     shape_string(b.shape()));
  }
  double dot = 0, na = 0, nb = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double av = a.at(i), bv = b.at(i);
    dot += av * bv;
    na += av * av;
    nb += bv * bv;
  }
  if (na == 0.0 || nb == 0.0) {
    raise(ErrorKind::kDegenerate, "cosine_similarity: zero-norm vector");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

Var cosine_similarity(const Var& a, const Var& b) {
  require_same_dtype(a.value(), b.value(), "cosine_similarity");
  const double c = cosine_similarity(a.value(), b.value());
  const double na = std::sqrt(squared_norm(a.value()));
  const double nb = std::sqrt(squared_norm(b.value()));
  return make_node(Tensor::scalar(c, a.value().dtype()), {a, b}, [c, na, nb](Node& self) {
    const double g = self.grad.at(0);
    dispatch_dtype(self.value.dtype(), [&]<class T>() {
      auto av = std::as_const(self.inputs[0]->value).data<T>();
      auto bv = std::as_const(self.inputs[1]->value).data<T>();
      if (wants_grad(self, 0)) {
        auto d = self.inputs[0]->grad_buffer().data<T>();
        for (std::size_t i = 0; i < d.size(); ++i) {
          d[i] += static_cast<T>(g * (bv[i] / (na * nb) - c * av[i] / (na * na)));
        }
      }
      if (wants_grad(self, 1)) {
        auto d = self.inputs[1]->grad_buffer().data<T>();
        for (std::size_t i = 0; i < d.size(); ++i) {
          d[i] += static_cast<T>(g * (av[i] / (na * nb) - c * bv[i] / (nb * nb)));
        }
      }
    });
  });
}

Var softmax_cross_entropy(const Var& logits, std::int64_t target) {
  const Tensor& lv = logits.value();
  const std::int64_t classes = lv.numel();
  if (classes < 1) raise(ErrorKind::kDimension, "softmax_cross_entropy: no classes");
  if (target < 0 || target >= classes) {
    raise(ErrorKind::kIndex, "softmax_cross_entropy: target " + std::to_string(target) +
                                 " outside [0, " + std::to_string(classes) + ")");
  }
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(classes));
  double mx = -std::numeric_limits<double>::infinity();
  for (std::int64_t i = 0; i < classes; ++i) mx = std::max(mx, lv.at(i));
  double total = 0;
  for (std::int64_t i = 0; i < classes; ++i) {
    (*probs)[i] = std::exp(lv.at(i) - mx);
    total += (*probs)[i];
  }
  for (auto& p : *probs) p /= total;
  const double loss = std::log(total) + mx - lv.at(target);
  return make_node(Tensor::scalar(loss, lv.dtype()), {logits}, [probs, target](Node& self) {
    const double g = self.grad.at(0);
    Tensor& d = self.inputs[0]->grad_buffer();
    for (std::int64_t i = 0; i < d.numel(); ++i) {
      d.set(i, d.at(i) + g * ((*probs)[i] - (i == target ? 1.0 : 0.0)));
    }
  });
}

double squared_norm(const Tensor& t) {
  double acc = 0;
  for (std::int64_t i = 0; i < t.numel(); ++i) acc += t.at(i) * t.at(i);
  return acc;
}

}  // namespace msta
