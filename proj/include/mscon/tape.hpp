#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "mscon/tensor.hpp"

namespace mscon::ad {

// Define-by-run reverse-mode tape. Rebuilt per batch; single-threaded.
// Every operation appends one node; backward replays nodes in reverse and
// accumulates gradients additively across fan-out.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Register a fresh leaf.
  TensorPtr leaf(std::vector<std::size_t> shape, std::vector<double> values);
  TensorPtr leaf(Tensor t);
  // Adopt an externally owned tensor (model parameter) as a leaf. Its grad
  // buffer is resized and zeroed.
  TensorPtr leaf(const TensorPtr& t);

  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);  // elementwise
  TensorPtr scalar_mul(const TensorPtr& a, double c);
  // out_ij = a_ij + b_j (bias add over rows)
  TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& b);
  // out = a - s with s scalar, broadcast over all entries
  TensorPtr sub_scalar(const TensorPtr& a, const TensorPtr& s);
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr transpose(const TensorPtr& a);
  TensorPtr relu(const TensorPtr& a);
  TensorPtr exp_op(const TensorPtr& a);
  TensorPtr log_op(const TensorPtr& a);  // requires strictly positive input
  // Rows scaled to unit Euclidean norm; a row with norm <= 1e-12 raises
  // DegenerateInput (collapsed projection).
  TensorPtr row_normalize(const TensorPtr& a);
  // Row-wise max-shifted log-sum-exp over entries where mask is true.
  // 2-D input n x m -> output {n}; 1-D input -> output {1} (full reduction).
  // Without a mask every entry participates.
  TensorPtr log_sum_exp(const TensorPtr& a, const BoolMatrix* mask = nullptr);
  // Scalar sum of w_i * a_ij over entries where mask is true. `row_weights`
  // has one entry per row; empty means all ones.
  TensorPtr masked_sum(const TensorPtr& a, const BoolMatrix& mask,
                       const std::vector<double>& row_weights = {});
  TensorPtr reduce_sum(const TensorPtr& a);
  TensorPtr reduce_mean(const TensorPtr& a);
  // Stack equal-width parts vertically. 1-D parts become rows.
  TensorPtr concat_rows(const std::vector<TensorPtr>& parts);

  // Reverse pass from a scalar root. Zeroes every registered grad buffer
  // first, then accumulates. Root must be a scalar produced on this tape.
  void backward(const TensorPtr& root);

  std::size_t size() const { return nodes_.size(); }

 private:
  using BackFn = std::function<void(const Tensor& out)>;

  struct Node {
    TensorPtr out;
    BackFn back;  // empty for leaves
  };

  TensorPtr emit(Tensor out, BackFn back);
  void ensure_on_tape(const TensorPtr& t, const char* op) const;

  std::vector<Node> nodes_;
};

}  // namespace mscon::ad
