#include "mscon/losses.hpp"

#include <cmath>
#include <string>

namespace mscon::loss {

namespace {

PositiveMask mask_from_equal_values(const std::vector<int>& v) {
  const std::size_t n = v.size();
  MSCON_CHECK(n >= 2, "positive mask: need at least two rows");
  PositiveMask pm;
  pm.mask = ad::BoolMatrix(n, n, false);
  pm.positive_counts.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && v[i] == v[j]) {
        pm.mask.set(i, j, true);
        ++pm.positive_counts[i];
      }
  return pm;
}

void check_unit_rows(const ad::TensorPtr& V) {
  MSCON_CHECK(V->is_matrix(), "contrastive loss: projections must be a matrix");
  const std::size_t n = V->shape[0], d = V->shape[1];
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += V->at(i, j) * V->at(i, j);
    MSCON_CHECK(std::abs(std::sqrt(s) - 1.0) <= 1e-6,
                "contrastive loss: row " + std::to_string(i) + " is not unit norm");
  }
}

}  // namespace

PositiveMask build_positive_mask(const std::vector<int>& labels) {
  return mask_from_equal_values(labels);
}

PositiveMask build_partner_mask(const std::vector<int>& source_index) {
  return mask_from_equal_values(source_index);
}

ad::TensorPtr supcon_loss(ad::Tape& tape, const ad::TensorPtr& V,
                          const PositiveMask& positives, const LossConfig& cfg) {
  MSCON_CHECK(cfg.temperature > 0.0, "contrastive loss: temperature must be positive");
  check_unit_rows(V);
  const std::size_t n = V->shape[0];
  MSCON_CHECK(positives.mask.rows == n && positives.mask.cols == n,
              "contrastive loss: mask shape mismatch");

  const std::size_t active = positives.num_active_anchors();
  if (active == 0)
    throw DegenerateInput(
        "contrastive loss: no anchor has a positive (all labels distinct)");

  // S_ij = v_i . v_j / tau; per-anchor term = lse over A(i) minus the mean
  // positive similarity. Summing the lse once per active anchor matches
  // sum_p (1/|P(i)|) = 1.
  ad::TensorPtr S = tape.scalar_mul(tape.matmul(V, tape.transpose(V)), 1.0 / cfg.temperature);
  ad::BoolMatrix offdiag(n, n, true);
  for (std::size_t i = 0; i < n; ++i) offdiag.set(i, i, false);
  ad::TensorPtr lse = tape.log_sum_exp(S, &offdiag);

  std::vector<double> anchor_active(n, 0.0), inv_counts(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (positives.positive_counts[i] > 0) {
      anchor_active[i] = 1.0;
      inv_counts[i] = 1.0 / static_cast<double>(positives.positive_counts[i]);
    }
  ad::TensorPtr w = tape.leaf({n}, anchor_active);
  ad::TensorPtr anchor_term = tape.reduce_sum(tape.mul(lse, w));
  ad::TensorPtr pos_term = tape.masked_sum(S, positives.mask, inv_counts);
  ad::TensorPtr total = tape.sub(anchor_term, pos_term);
  if (cfg.reduction == Reduction::MeanOverAnchors)
    total = tape.scalar_mul(total, 1.0 / static_cast<double>(active));
  return total;
}

ad::TensorPtr simclr_loss(ad::Tape& tape, const ad::TensorPtr& V,
                          const std::vector<int>& source_index, const LossConfig& cfg) {
  return supcon_loss(tape, V, build_partner_mask(source_index), cfg);
}

ad::TensorPtr mscon_total(ad::Tape& tape, const std::vector<ad::TensorPtr>& task_losses,
                          const std::vector<ad::TensorPtr>& log_var, bool weighted,
                          LossReport* report) {
  MSCON_CHECK(!task_losses.empty(), "mscon_total: no task losses");
  MSCON_CHECK(!weighted || log_var.size() == task_losses.size(),
              "mscon_total: need one log-variance per task");

  ad::TensorPtr total;
  LossReport rep;
  for (std::size_t c = 0; c < task_losses.size(); ++c) {
    const ad::TensorPtr& L = task_losses[c];
    MSCON_CHECK(L->is_scalar(), "mscon_total: task loss must be scalar");
    ad::TensorPtr term;
    double s_val = 0.0;
    if (weighted) {
      const ad::TensorPtr& s = log_var[c];
      MSCON_CHECK(s->is_scalar(), "mscon_total: log variance must be scalar");
      s_val = s->values[0];
      term = tape.add(tape.mul(tape.exp_op(tape.scalar_mul(s, -1.0)), L), s);
    } else {
      term = L;
    }
    total = total ? tape.add(total, term) : term;
    rep.task_loss.push_back(L->values[0]);
    rep.sigma_sq.push_back(std::exp(s_val));
    rep.weight.push_back(std::exp(-s_val));
  }
  rep.total = total->values[0];
  if (report) *report = rep;
  return total;
}

ad::TensorPtr pseudo_likelihood(ad::Tape& tape, const ad::TensorPtr& query,
                                const ad::TensorPtr& refs,
                                const std::vector<int>& ref_labels, int num_classes,
                                double tau, double sigma_sq, int exclude_index) {
  MSCON_CHECK(tau > 0.0 && sigma_sq > 0.0,
              "pseudo_likelihood: tau and sigma_sq must be positive");
  MSCON_CHECK(refs->is_matrix() && ref_labels.size() == refs->shape[0],
              "pseudo_likelihood: labels must match reference rows");
  MSCON_CHECK(query->numel() == refs->shape[1],
              "pseudo_likelihood: query dimension mismatch");
  const std::size_t R = refs->shape[0];
  const auto K = static_cast<std::size_t>(num_classes);

  // Per-class masks over the reference rows, excluding the query itself.
  std::vector<std::size_t> class_counts(K, 0);
  ad::BoolMatrix class_mask(K, R, false);
  for (std::size_t j = 0; j < R; ++j) {
    MSCON_CHECK(ref_labels[j] >= 0 && ref_labels[j] < num_classes,
                "pseudo_likelihood: reference label out of range");
    if (static_cast<int>(j) == exclude_index) continue;
    class_mask.set(static_cast<std::size_t>(ref_labels[j]), j, true);
    ++class_counts[static_cast<std::size_t>(ref_labels[j])];
  }
  for (std::size_t y = 0; y < K; ++y)
    if (class_counts[y] == 0)
      throw DegenerateInput("pseudo_likelihood: class " + std::to_string(y) +
                            " has an empty positive set");

  // log score(y) = lse_{p in P_y}(v . v_p / (tau sigma_sq)) - log |P_y|
  ad::TensorPtr q = query;
  if (q->shape.size() == 1) {
    // view the query as a 1 x d row for the matmul
    q = tape.concat_rows({q});
  }
  ad::TensorPtr sims =
      tape.scalar_mul(tape.matmul(q, tape.transpose(refs)), 1.0 / (tau * sigma_sq));
  std::vector<ad::TensorPtr> tiled(K, sims);
  ad::TensorPtr sim_rows = tape.concat_rows(tiled);  // K x R
  ad::TensorPtr class_lse = tape.log_sum_exp(sim_rows, &class_mask);
  std::vector<double> log_counts(K);
  for (std::size_t y = 0; y < K; ++y) log_counts[y] = std::log(static_cast<double>(class_counts[y]));
  ad::TensorPtr log_scores = tape.sub(class_lse, tape.leaf({K}, log_counts));

  // normalize over the K classes
  ad::TensorPtr z = tape.log_sum_exp(log_scores);
  return tape.exp_op(tape.sub_scalar(log_scores, z));
}

ad::TensorPtr xent_loss(ad::Tape& tape, const ad::TensorPtr& logits,
                        const std::vector<int>& labels) {
  MSCON_CHECK(logits->is_matrix(), "xent: logits must be batch x K");
  const std::size_t B = logits->shape[0], K = logits->shape[1];
  MSCON_CHECK(labels.size() == B, "xent: label count must match batch");
  for (double v : logits->values) MSCON_CHECK(std::isfinite(v), "xent: non-finite logit");
  ad::BoolMatrix picked(B, K, false);
  for (std::size_t i = 0; i < B; ++i) {
    MSCON_CHECK(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < K,
                "xent: label out of range at row " + std::to_string(i));
    picked.set(i, static_cast<std::size_t>(labels[i]), true);
  }
  ad::TensorPtr lse = tape.log_sum_exp(logits);
  ad::TensorPtr loss_sum = tape.sub(tape.reduce_sum(lse), tape.masked_sum(logits, picked));
  return tape.scalar_mul(loss_sum, 1.0 / static_cast<double>(B));
}

double supcon_loss_value(const std::vector<double>& V, std::size_t rows, std::size_t cols,
                         const std::vector<int>& labels, const LossConfig& cfg) {
  ad::Tape tape;
  ad::TensorPtr v = tape.leaf({rows, cols}, V);
  return supcon_loss(tape, v, build_positive_mask(labels), cfg)->values[0];
}

std::vector<double> pseudo_likelihood_value(const std::vector<double>& query,
                                            const std::vector<double>& refs,
                                            std::size_t dim,
                                            const std::vector<int>& ref_labels,
                                            int num_classes, double tau, double sigma_sq,
                                            int exclude_index) {
  ad::Tape tape;
  ad::TensorPtr q = tape.leaf({dim}, query);
  ad::TensorPtr r = tape.leaf({refs.size() / dim, dim}, refs);
  return pseudo_likelihood(tape, q, r, ref_labels, num_classes, tau, sigma_sq,
                           exclude_index)
      ->values;
}

}  // namespace mscon::loss
