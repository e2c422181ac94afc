#pragma once

#include <functional>

#include "mscon/tape.hpp"

namespace mscon::ad {

// A scalar-valued function of one tensor, expressed on a caller-provided tape.
using ScalarFn = std::function<TensorPtr(Tape&, const TensorPtr& x)>;

// Central finite-difference verification of reverse-mode gradients.
// Returns max over coordinates of |analytic - numeric| / max(1, |analytic|).
// `step` must lie in [1e-7, 1e-3]. Non-finite function values at perturbed
// points raise DegenerateInput.
double grad_check(const ScalarFn& f, const Tensor& point, double step = 1e-5);

}  // namespace mscon::ad
