#pragma once

#include <string>
#include <vector>

#include "mscon/tape.hpp"

namespace mscon::loss {

enum class Reduction { Sum, MeanOverAnchors };

struct LossConfig {
  double temperature = 0.1;
  Reduction reduction = Reduction::MeanOverAnchors;
};

// Positive mask for one task: entry (i, j) is true iff j shares anchor i's
// label and j != i. Anchors with an empty positive row are tracked so they
// can contribute zero and be excluded from mean reduction.
struct PositiveMask {
  ad::BoolMatrix mask;
  std::vector<std::size_t> positive_counts;

  std::size_t num_active_anchors() const {
    std::size_t n = 0;
    for (auto c : positive_counts)
      if (c > 0) ++n;
    return n;
  }
};

PositiveMask build_positive_mask(const std::vector<int>& labels);

// SimCLR positives: only the augmentation partner, i.e. rows with the same
// source index. Identical structure to a label mask over source ids.
PositiveMask build_partner_mask(const std::vector<int>& source_index);

// Supervised contrastive loss over 2N unit-norm projection rows. Rows whose
// norm is off unit by more than 1e-6 violate the contract.
ad::TensorPtr supcon_loss(ad::Tape& tape, const ad::TensorPtr& V,
                          const PositiveMask& positives, const LossConfig& cfg);

// Per-condition loss: the supervised contrastive loss evaluated on one
// task's projections and mask.
inline ad::TensorPtr mscon_condition_loss(ad::Tape& tape, const ad::TensorPtr& V,
                                          const PositiveMask& positives,
                                          const LossConfig& cfg) {
  return supcon_loss(tape, V, positives, cfg);
}

ad::TensorPtr simclr_loss(ad::Tape& tape, const ad::TensorPtr& V,
                          const std::vector<int>& source_index, const LossConfig& cfg);

// Per-batch record of the multi-task objective.
struct LossReport {
  std::vector<double> task_loss;  // L_c
  std::vector<double> sigma_sq;   // exp(s_c)
  std::vector<double> weight;     // exp(-s_c)
  double total = 0.0;
};

// Total objective over conditions. Unweighted: sum of L_c. Weighted:
// sum of exp(-s_c) * L_c + s_c with s_c = log sigma_c^2 trainable.
ad::TensorPtr mscon_total(ad::Tape& tape, const std::vector<ad::TensorPtr>& task_losses,
                          const std::vector<ad::TensorPtr>& log_var, bool weighted,
                          LossReport* report = nullptr);

// Class-probability vector over `num_classes` for one query projection.
// score(y) averages exp(v . v_p / (tau sigma_sq)) over the reference rows of
// class y; the scores are normalized over classes. `exclude_index` removes
// the query's own row from its class when the query is drawn from the
// reference set. A class with no reference rows raises DegenerateInput.
ad::TensorPtr pseudo_likelihood(ad::Tape& tape, const ad::TensorPtr& query,
                                const ad::TensorPtr& refs,
                                const std::vector<int>& ref_labels, int num_classes,
                                double tau, double sigma_sq, int exclude_index = -1);

// Mean over the batch of -log softmax(logits)[label], max-shifted.
ad::TensorPtr xent_loss(ad::Tape& tape, const ad::TensorPtr& logits,
                        const std::vector<int>& labels);

// Value-only conveniences (local tape) for tests and probes.
double supcon_loss_value(const std::vector<double>& V, std::size_t rows, std::size_t cols,
                         const std::vector<int>& labels, const LossConfig& cfg);
std::vector<double> pseudo_likelihood_value(const std::vector<double>& query,
                                            const std::vector<double>& refs,
                                            std::size_t dim,
                                            const std::vector<int>& ref_labels,
                                            int num_classes, double tau, double sigma_sq,
                                            int exclude_index = -1);

}  // namespace mscon::loss
