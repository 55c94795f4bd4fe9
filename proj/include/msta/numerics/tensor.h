#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace msta {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

std::string dtype_name(DType dtype);

// Process-wide element type for newly created tensors. Training runs in f32,
// gradient checking switches to f64. Tensors of different dtypes never mix.
DType default_dtype();
void set_default_dtype(DType dtype);

class DTypeScope {
 public:
  explicit DTypeScope(DType dtype);
  ~DTypeScope();
  DTypeScope(const DTypeScope&) = delete;
  DTypeScope& operator=(const DTypeScope&) = delete;

 private:
  DType previous_;
};

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Runs `f.template operator()<T>()` with T = float or double.
template <class F>
decltype(auto) dispatch_dtype(DType dtype, F&& f) {
  if (dtype == DType::kF32) return std::forward<F>(f).template operator()<float>();
  return std::forward<F>(f).template operator()<double>();
}

// Dense row-major array. Rank 0 (empty shape) holds one scalar.
class Tensor {
 public:
  Tensor() : Tensor(Shape{0}) {}
  explicit Tensor(Shape shape, DType dtype = default_dtype());

  static Tensor from_values(Shape shape, std::span<const double> values,
                            DType dtype = default_dtype());
  static Tensor from_values(Shape shape, std::initializer_list<double> values,
                            DType dtype = default_dtype());
  static Tensor scalar(double value, DType dtype = default_dtype());
  static Tensor zeros_like(const Tensor& other);

  const Shape& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::int64_t axis) const;
  std::int64_t numel() const { return numel_; }
  DType dtype() const { return dtype_; }
  std::size_t byte_size() const;

  template <class T>
  std::span<T> data() {
    return std::span<T>(std::get<std::vector<T>>(storage_));
  }
  template <class T>
  std::span<const T> data() const {
    return std::span<const T>(std::get<std::vector<T>>(storage_));
  }

  const unsigned char* bytes() const;
  unsigned char* bytes();

  double at(std::int64_t flat_index) const;
  void set(std::int64_t flat_index, double value);
  double item() const;
  std::vector<double> to_vector() const;

  void fill(double value);
  void add_(const Tensor& other);
  Tensor reshaped(Shape shape) const;
  Tensor cast(DType dtype) const;

  bool all_finite() const;
  bool bit_equal(const Tensor& other) const;

 private:
  Shape shape_;
  std::int64_t numel_ = 0;
  DType dtype_ = DType::kF32;
  std::variant<std::vector<float>, std::vector<double>> storage_;
};

}  // namespace msta
