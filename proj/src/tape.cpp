#include "mscon/tape.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mscon::ad {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
  MSCON_CHECK(a->shape == b->shape, std::string(op) + ": shape mismatch");
}

}  // namespace

TensorPtr Tape::emit(Tensor out, BackFn back) {
  auto p = std::make_shared<Tensor>(std::move(out));
  p->tape_id = static_cast<int>(nodes_.size());
  p->grad.assign(p->values.size(), 0.0);
  nodes_.push_back({p, std::move(back)});
  return p;
}

void Tape::ensure_on_tape(const TensorPtr& t, const char* op) const {
  MSCON_CHECK(t && t->tape_id >= 0 &&
                  static_cast<std::size_t>(t->tape_id) < nodes_.size() &&
                  nodes_[static_cast<std::size_t>(t->tape_id)].out == t,
              std::string(op) + ": operand is not on this tape");
}

TensorPtr Tape::leaf(std::vector<std::size_t> shape, std::vector<double> values) {
  return emit(Tensor(std::move(shape), std::move(values)), nullptr);
}

TensorPtr Tape::leaf(Tensor t) { return emit(std::move(t), nullptr); }

TensorPtr Tape::leaf(const TensorPtr& t) {
  MSCON_CHECK(t != nullptr, "leaf: null tensor");
  t->tape_id = static_cast<int>(nodes_.size());
  t->grad.assign(t->values.size(), 0.0);
  nodes_.push_back({t, nullptr});
  return t;
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
  ensure_on_tape(a, "add");
  ensure_on_tape(b, "add");
  check_same_shape(a, b, "add");
  Tensor out(a->shape, a->values);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += b->values[i];
  return emit(std::move(out), [a, b](const Tensor& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      a->grad[i] += o.grad[i];
      b->grad[i] += o.grad[i];
    }
  });
}

TensorPtr Tape::sub(const TensorPtr& a, const TensorPtr& b) {
  ensure_on_tape(a, "sub");
  ensure_on_tape(b, "sub");
  check_same_shape(a, b, "sub");
  Tensor out(a->shape, a->values);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= b->values[i];
  return emit(std::move(out), [a, b](const Tensor& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      a->grad[i] += o.grad[i];
      b->grad[i] -= o.grad[i];
    }
  });
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
  ensure_on_tape(a, "mul");
  ensure_on_tape(b, "mul");
  check_same_shape(a, b, "mul");
  Tensor out(a->shape, a->values);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= b->values[i];
  return emit(std::move(out), [a, b](const Tensor& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      a->grad[i] += o.grad[i] * b->values[i];
      b->grad[i] += o.grad[i] * a->values[i];
    }
  });
}

TensorPtr Tape::scalar_mul(const TensorPtr& a, double c) {
  ensure_on_tape(a, "scalar_mul");
  Tensor out(a->shape, a->values);
  for (auto& v : out.values) v *= c;
  return emit(std::move(out), [a, c](const Tensor& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) a->grad[i] += c * o.grad[i];
  });
}

TensorPtr Tape::add_rowvec(const TensorPtr& a, const TensorPtr& b) {
  ensure_on_tape(a, "add_rowvec");
  ensure_on_tape(b, "add_rowvec");
  MSCON_CHECK(a->is_matrix() && b->shape.size() == 1 && b->shape[0] == a->shape[1],
              "add_rowvec: need n x m matrix and length-m vector");
  const std::size_t n = a->shape[0], m = a->shape[1];
  Tensor out(a->shape, a->values);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.values[i * m + j] += b->values[j];
  return emit(std::move(out), [a, b, n, m](const Tensor& o) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        a->grad[i * m + j] += o.grad[i * m + j];
        b->grad[j] += o.grad[i * m + j];
      }
  });
}

TensorPtr Tape::sub_scalar(const TensorPtr& a, const TensorPtr& s) {
  ensure_on_tape(a, "sub_scalar");
  ensure_on_tape(s, "sub_scalar");
  MSCON_CHECK(s->is_scalar(), "sub_scalar: subtrahend must be scalar");
  Tensor out(a->shape, a->values);
  for (auto& v : out.values) v -= s->values[0];
  return emit(std::move(out), [a, s](const Tensor& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      a->grad[i] += o.grad[i];
      s->grad[0] -= o.grad[i];
    }
  });
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b) {
  ensure_on_tape(a, "matmul");
  ensure_on_tape(b, "matmul");
  MSCON_CHECK(a->is_matrix() && b->is_matrix() && a->shape[1] == b->shape[0],
              "matmul: inner dimensions must agree");
  const std::size_t n = a->shape[0], k = a->shape[1], m = b->shape[1];
  Tensor out = Tensor::zeros({n, m});
  {
    CMap A(a->values.data(), n, k);
    CMap B(b->values.data(), k, m);
    MMap O(out.values.data(), n, m);
    O.noalias() = A * B;
  }
  return emit(std::move(out), [a, b, n, k, m](const Tensor& o) {
    CMap A(a->values.data(), n, k);
    CMap B(b->values.data(), k, m);
    CMap G(o.grad.data(), n, m);
    MMap dA(a->grad.data(), n, k);
    MMap dB(b->grad.data(), k, m);
    dA.noalias() += G * B.transpose();
    dB.noalias() += A.transpose() * G;
  });
}

TensorPtr Tape::transpose(const TensorPtr& a) {
  ensure_on_tape(a, "transpose");
  MSCON_CHECK(a->is_matrix(), "transpose: need a matrix");
  const std::size_t n = a->shape[0], m = a->shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.values[j * n + i] = a->values[i * m + j];
  return emit(std::move(out), [a, n, m](const Tensor& o) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) a->grad[i * m + j] += o.grad[j * n + i];
  });
}

TensorPtr Tape::relu(const TensorPtr& a) {
  ensure_on_tape(a, "relu");
  Tensor out(a->shape, a->values);
  for (auto& v : out.values) v = v > 0.0 ? v : 0.0;
  return emit(std::move(out), [a](const Tensor& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if (a->values[i] > 0.0) a->grad[i] += o.grad[i];
  });
}

TensorPtr Tape::exp_op(const TensorPtr& a) {
  ensure_on_tape(a, "exp");
  Tensor out(a->shape, a->values);
  for (auto& v : out.values) v = std::exp(v);
  return emit(std::move(out), [a](const Tensor& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) a->grad[i] += o.grad[i] * o.values[i];
  });
}

TensorPtr Tape::log_op(const TensorPtr& a) {
  ensure_on_tape(a, "log");
  for (double v : a->values) MSCON_CHECK(v > 0.0, "log: input must be strictly positive");
  Tensor out(a->shape, a->values);
  for (auto& v : out.values) v = std::log(v);
  return emit(std::move(out), [a](const Tensor& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) a->grad[i] += o.grad[i] / a->values[i];
  });
}

TensorPtr Tape::row_normalize(const TensorPtr& a) {
  ensure_on_tape(a, "row_normalize");
  MSCON_CHECK(a->is_matrix() || a->shape.size() == 1, "row_normalize: need 1-D or 2-D input");
  const std::size_t n = a->is_matrix() ? a->shape[0] : 1;
  const std::size_t m = a->is_matrix() ? a->shape[1] : a->shape[0];
  Tensor out(a->shape, a->values);
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += a->values[i * m + j] * a->values[i * m + j];
    norms[i] = std::sqrt(s);
    if (norms[i] <= 1e-12)
      throw DegenerateInput("row_normalize: row " + std::to_string(i) +
                            " has near-zero norm (collapsed projection)");
    for (std::size_t j = 0; j < m; ++j) out.values[i * m + j] /= norms[i];
  }
  return emit(std::move(out), [a, n, m, norms = std::move(norms)](const Tensor& o) {
    // dx = (g - v (v . g)) / ||x||, rowwise, with v the unit row
    for (std::size_t i = 0; i < n; ++i) {
      double vg = 0.0;
      for (std::size_t j = 0; j < m; ++j) vg += o.values[i * m + j] * o.grad[i * m + j];
      for (std::size_t j = 0; j < m; ++j)
        a->grad[i * m + j] += (o.grad[i * m + j] - o.values[i * m + j] * vg) / norms[i];
    }
  });
}

TensorPtr Tape::log_sum_exp(const TensorPtr& a, const BoolMatrix* mask) {
  ensure_on_tape(a, "log_sum_exp");
  const bool vec_input = a->shape.size() == 1;
  const std::size_t n = vec_input ? 1 : a->shape[0];
  const std::size_t m = vec_input ? a->shape[0] : a->shape[1];
  if (mask)
    MSCON_CHECK(mask->rows == n && mask->cols == m, "log_sum_exp: mask shape mismatch");
  Tensor out = Tensor::zeros({vec_input ? std::size_t{1} : n});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j)
      if (!mask || mask->at(i, j)) mx = std::max(mx, a->values[i * m + j]);
    if (!std::isfinite(mx))
      throw DegenerateInput("log_sum_exp: row " + std::to_string(i) +
                            " has no unmasked entries");
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      if (!mask || mask->at(i, j)) s += std::exp(a->values[i * m + j] - mx);
    out.values[i] = mx + std::log(s);
  }
  const bool have_mask = mask != nullptr;
  BoolMatrix mask_copy = mask ? *mask : BoolMatrix();
  return emit(std::move(out),
              [a, n, m, have_mask, mask_copy = std::move(mask_copy)](const Tensor& o) {
                // d lse_i / d a_ij = softmax over the unmasked entries of row i
                for (std::size_t i = 0; i < n; ++i) {
                  const double g = o.grad[i];
                  if (g == 0.0) continue;
                  for (std::size_t j = 0; j < m; ++j)
                    if (!have_mask || mask_copy.at(i, j))
                      a->grad[i * m + j] += g * std::exp(a->values[i * m + j] - o.values[i]);
                }
              });
}

TensorPtr Tape::masked_sum(const TensorPtr& a, const BoolMatrix& mask,
                           const std::vector<double>& row_weights) {
  ensure_on_tape(a, "masked_sum");
  const bool vec_input = a->shape.size() == 1;
  const std::size_t n = vec_input ? 1 : a->shape[0];
  const std::size_t m = vec_input ? a->shape[0] : a->shape[1];
  MSCON_CHECK(mask.rows == n && mask.cols == m, "masked_sum: mask shape mismatch");
  MSCON_CHECK(row_weights.empty() || row_weights.size() == n,
              "masked_sum: row_weights length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = row_weights.empty() ? 1.0 : row_weights[i];
    for (std::size_t j = 0; j < m; ++j)
      if (mask.at(i, j)) s += w * a->values[i * m + j];
  }
  return emit(Tensor::scalar(s),
              [a, n, m, mask_copy = mask, weights = row_weights](const Tensor& o) {
                const double g = o.grad[0];
                for (std::size_t i = 0; i < n; ++i) {
                  const double w = weights.empty() ? 1.0 : weights[i];
                  for (std::size_t j = 0; j < m; ++j)
                    if (mask_copy.at(i, j)) a->grad[i * m + j] += g * w;
                }
              });
}

TensorPtr Tape::reduce_sum(const TensorPtr& a) {
  ensure_on_tape(a, "reduce_sum");
  double s = 0.0;
  for (double v : a->values) s += v;
  return emit(Tensor::scalar(s), [a](const Tensor& o) {
    for (auto& g : a->grad) g += o.grad[0];
  });
}

TensorPtr Tape::reduce_mean(const TensorPtr& a) {
  ensure_on_tape(a, "reduce_mean");
  MSCON_CHECK(!a->values.empty(), "reduce_mean: empty tensor");
  double s = 0.0;
  for (double v : a->values) s += v;
  const double inv = 1.0 / static_cast<double>(a->values.size());
  return emit(Tensor::scalar(s * inv), [a, inv](const Tensor& o) {
    for (auto& g : a->grad) g += inv * o.grad[0];
  });
}

TensorPtr Tape::concat_rows(const std::vector<TensorPtr>& parts) {
  MSCON_CHECK(!parts.empty(), "concat_rows: no parts");
  const std::size_t m = parts[0]->cols();
  std::size_t total_rows = 0;
  for (const auto& p : parts) {
    ensure_on_tape(p, "concat_rows");
    MSCON_CHECK(p->cols() == m, "concat_rows: column count mismatch");
    total_rows += p->shape.size() == 1 ? 1 : p->shape[0];
  }
  Tensor out = Tensor::zeros({total_rows, m});
  std::size_t r = 0;
  for (const auto& p : parts) {
    std::copy(p->values.begin(), p->values.end(), out.values.begin() + r * m);
    r += p->shape.size() == 1 ? 1 : p->shape[0];
  }
  return emit(std::move(out), [parts, m](const Tensor& o) {
    std::size_t r = 0;
    for (const auto& p : parts) {
      for (std::size_t i = 0; i < p->values.size(); ++i) p->grad[i] += o.grad[r * m + i];
      r += p->shape.size() == 1 ? 1 : p->shape[0];
    }
  });
}

void Tape::backward(const TensorPtr& root) {
  ensure_on_tape(root, "backward");
  MSCON_CHECK(root->is_scalar(), "backward: root must be a scalar");
  for (auto& node : nodes_) std::fill(node.out->grad.begin(), node.out->grad.end(), 0.0);
  root->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
    if (it->back) it->back(*it->out);
}

}  // namespace mscon::ad
