#include "msta/numerics/tensor.h"

#include <cmath>
#include <cstring>
#include <sstream>

#include "msta/error.h"

namespace msta {
namespace {

DType g_default_dtype = DType::kF32;

}  // namespace

std::string dtype_name(DType dtype) { return dtype == DType::kF32 ? "f32" : "f64"; }

DType default_dtype() { return g_default_dtype; }
void set_default_dtype(DType dtype) { g_default_dtype = dtype; }

DTypeScope::DTypeScope(DType dtype) : previous_(g_default_dtype) { g_default_dtype = dtype; }
DTypeScope::~DTypeScope() { g_default_dtype = previous_; }

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype) {
  for (auto d : shape_) {
    if (d < 0) raise(ErrorKind::kDimension, "negative dimension in shape " + shape_string(shape_));
  }
  numel_ = shape_numel(shape_);
  if (dtype_ == DType::kF32) {
    storage_ = std::vector<float>(static_cast<std::size_t>(numel_), 0.0f);
  } else {
    storage_ = std::vector<double>(static_cast<std::size_t>(numel_), 0.0);
  }
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values, DType dtype) {
  Tensor t(std::move(shape), dtype);
  if (static_cast<std::int64_t>(values.size()) != t.numel()) {
    raise(ErrorKind::kDimension, "value count " + std::to_string(values.size()) +
                                     " does not match shape " + shape_string(t.shape()));
  }
  for (std::int64_t i = 0; i < t.numel(); ++i) t.set(i, values[static_cast<std::size_t>(i)]);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::initializer_list<double> values, DType dtype) {
  return from_values(std::move(shape), std::span<const double>(values.begin(), values.size()),
                     dtype);
}

Tensor Tensor::scalar(double value, DType dtype) {
  Tensor t(Shape{}, dtype);
  t.set(0, value);
  return t;
}

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape(), other.dtype()); }

std::int64_t Tensor::dim(std::int64_t axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    raise(ErrorKind::kIndex, "axis " + std::to_string(axis) + " out of range for shape " +
                                 shape_string(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

std::size_t Tensor::byte_size() const {
  return static_cast<std::size_t>(numel_) * (dtype_ == DType::kF32 ? 4 : 8);
}

const unsigned char* Tensor::bytes() const {
  return dispatch_dtype(dtype_, [&]<class T>() {
    return reinterpret_cast<const unsigned char*>(data<T>().data());
  });
}

unsigned char* Tensor::bytes() {
  return dispatch_dtype(dtype_, [&]<class T>() {
    return reinterpret_cast<unsigned char*>(data<T>().data());
  });
}

double Tensor::at(std::int64_t i) const {
  return dispatch_dtype(dtype_, [&]<class T>() {
    return static_cast<double>(data<T>()[static_cast<std::size_t>(i)]);
  });
}

void Tensor::set(std::int64_t i, double value) {
  dispatch_dtype(dtype_, [&]<class T>() {
    data<T>()[static_cast<std::size_t>(i)] = static_cast<T>(value);
  });
}

double Tensor::item() const {
  if (numel_ != 1) raise(ErrorKind::kDimension, "item() on tensor of shape " + shape_string(shape_));
  return at(0);
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(static_cast<std::size_t>(numel_));
  for (std::int64_t i = 0; i < numel_; ++i) out[static_cast<std::size_t>(i)] = at(i);
  return out;
}

void Tensor::fill(double value) {
  dispatch_dtype(dtype_, [&]<class T>() {
    for (auto& v : data<T>()) v = static_cast<T>(value);
  });
}

void Tensor::add_(const Tensor& other) {
  if (other.shape_ != shape_ || other.dtype_ != dtype_) {
    raise(ErrorKind::kDimension, "add_ between " + shape_string(shape_) + " and " +
                                     shape_string(other.shape_));
  }
  dispatch_dtype(dtype_, [&]<class T>() {
    auto dst = data<T>();
    auto src = other.data<T>();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  });
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel_) {
    raise(ErrorKind::kDimension,
          "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

Tensor Tensor::cast(DType dtype) const {
  if (dtype == dtype_) return *this;
  Tensor out(shape_, dtype);
  for (std::int64_t i = 0; i < numel_; ++i) out.set(i, at(i));
  return out;
}

bool Tensor::all_finite() const {
  return dispatch_dtype(dtype_, [&]<class T>() {
    for (auto v : data<T>()) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  });
}

bool Tensor::bit_equal(const Tensor& other) const {
  return shape_ == other.shape_ && dtype_ == other.dtype_ &&
         std::memcmp(bytes(), other.bytes(), byte_size()) == 0;
}

}  // namespace msta
