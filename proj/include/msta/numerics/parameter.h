#pragma once

#include <memory>
#include <string>
#include <vector>

#include "msta/numerics/autograd.h"

namespace msta {

// Named leaf tensor. Frozen parameters never request a gradient, so the
// engine leaves their value and gradient untouched.
class Parameter {
 public:
  Parameter(std::string name, Tensor value, bool trainable);

  const std::string& name() const { return name_; }
  const Var& var() const { return var_; }
  const Tensor& value() const { return var_.value(); }
  Tensor& mutable_value() { return var_.mutable_value(); }
  Tensor grad() const { return var_.grad(); }
  bool has_grad() const { return var_.has_grad(); }
  const Shape& shape() const { return var_.shape(); }
  std::int64_t numel() const { return var_.value().numel(); }

  bool trainable() const { return trainable_; }
  void set_trainable(bool trainable);
  void zero_grad() { var_.zero_grad(); }

 private:
  std::string name_;
  Var var_;
  bool trainable_;
};

using ParameterPtr = std::shared_ptr<Parameter>;
using ParameterList = std::vector<ParameterPtr>;

ParameterPtr make_parameter(std::string name, Tensor value, bool trainable);

}  // namespace msta
