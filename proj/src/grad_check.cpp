#include "mscon/grad_check.hpp"

#include <cmath>

namespace mscon::ad {

namespace {

double eval_value(const ScalarFn& f, const Tensor& point) {
  Tape tape;
  TensorPtr x = tape.leaf(point);
  TensorPtr y = f(tape, x);
  MSCON_CHECK(y->is_scalar(), "grad_check: function must be scalar-valued");
  if (!std::isfinite(y->values[0]))
    throw DegenerateInput("grad_check: non-finite function value at perturbed point");
  return y->values[0];
}

}  // namespace

double grad_check(const ScalarFn& f, const Tensor& point, double step) {
  MSCON_CHECK(step >= 1e-7 && step <= 1e-3, "grad_check: step must be in [1e-7, 1e-3]");

  Tape tape;
  TensorPtr x = tape.leaf(point);
  TensorPtr y = f(tape, x);
  MSCON_CHECK(y->is_scalar(), "grad_check: function must be scalar-valued");
  tape.backward(y);
  const std::vector<double> analytic = x->grad;

  double max_rel = 0.0;
  for (std::size_t i = 0; i < point.values.size(); ++i) {
    Tensor plus = point, minus = point;
    plus.values[i] += step;
    minus.values[i] -= step;
    const double numeric = (eval_value(f, plus) - eval_value(f, minus)) / (2.0 * step);
    const double rel =
        std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace mscon::ad
