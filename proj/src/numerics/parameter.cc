#include "msta/numerics/parameter.h"

namespace msta {

Parameter::Parameter(std::string name, Tensor value, bool trainable)
    : name_(std::move(name)), var_(std::move(value), trainable), trainable_(trainable) {}

void Parameter::set_trainable(bool trainable) {
  trainable_ = trainable;
  var_.set_requires_grad(trainable);
  if (!trainable) var_.zero_grad();
}

ParameterPtr make_parameter(std::string name, Tensor value, bool trainable) {
  return std::make_shared<Parameter>(std::move(name), std::move(value), trainable);
}

}  // namespace msta
