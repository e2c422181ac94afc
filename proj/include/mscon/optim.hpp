#pragma once

#include <map>
#include <string>
#include <vector>

#include "mscon/tensor.hpp"

namespace mscon::ad {

// Heavy-ball SGD: v <- momentum * v + g; w <- w - lr * v.
// Velocity buffers are keyed by parameter name and zero-initialized on first
// use. A non-finite gradient raises TrainingDivergence naming the parameter.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum);

  void step(const std::string& name, Tensor& param);
  void step(const std::string& name, const TensorPtr& param) { step(name, *param); }

  double lr() const { return lr_; }
  double momentum() const { return momentum_; }

 private:
  double lr_;
  double momentum_;
  std::map<std::string, std::vector<double>> velocity_;
};

}  // namespace mscon::ad
