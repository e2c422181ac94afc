#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <vector>

#include "mscon/errors.hpp"

namespace mscon::ad {

// Dense 1-D or 2-D array of doubles. `grad` is sized and zeroed when the
// tensor is registered on a Tape and is filled by Tape::backward.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;   // empty until registered on a tape
  int tape_id = -1;           // node index on the owning tape, -1 if none

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> v)
      : shape(std::move(s)), values(std::move(v)) {
    MSCON_CHECK(values.size() == numel(), "tensor values length does not match shape");
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros(std::vector<std::size_t> s) {
    std::size_t n = 1;
    for (auto e : s) n *= e;
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
  }
  bool is_scalar() const { return numel() == 1; }
  bool is_matrix() const { return shape.size() == 2; }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const {
    if (shape.size() >= 2) return shape[1];
    return shape.empty() ? 1 : shape[0];  // 1-D treated as a single row
  }

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(std::vector<std::size_t> shape, std::vector<double> values) {
  return std::make_shared<Tensor>(std::move(shape), std::move(values));
}

// Boolean matrix used for masked reductions; not differentiable, not a Tensor.
struct BoolMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> m;

  BoolMatrix() = default;
  BoolMatrix(std::size_t r, std::size_t c, bool fill = false)
      : rows(r), cols(c), m(r * c, fill ? 1 : 0) {}

  std::uint8_t at(std::size_t r, std::size_t c) const { return m[r * cols + c]; }
  void set(std::size_t r, std::size_t c, bool v) { m[r * cols + c] = v ? 1 : 0; }
};

}  // namespace mscon::ad
