#include "mscon/optim.hpp"

#include <cmath>

namespace mscon::ad {

SgdMomentum::SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {
  MSCON_CHECK(lr > 0.0, "sgd: lr must be positive");
  MSCON_CHECK(momentum >= 0.0 && momentum < 1.0, "sgd: momentum must be in [0, 1)");
}

void SgdMomentum::step(const std::string& name, Tensor& param) {
  MSCON_CHECK(param.grad.size() == param.values.size(),
              "sgd: parameter '" + name + "' has no gradient");
  auto& v = velocity_[name];
  if (v.empty()) v.assign(param.values.size(), 0.0);
  MSCON_CHECK(v.size() == param.values.size(), "sgd: velocity shape mismatch for '" + name + "'");
  for (std::size_t i = 0; i < param.values.size(); ++i) {
    const double g = param.grad[i];
    if (!std::isfinite(g))
      throw TrainingDivergence("sgd: non-finite gradient in parameter '" + name + "'");
    v[i] = momentum_ * v[i] + g;
    param.values[i] -= lr_ * v[i];
  }
}

}  // namespace mscon::ad
