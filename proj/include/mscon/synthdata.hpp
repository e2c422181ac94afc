#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mscon/errors.hpp"
#include "mscon/rng.hpp"

namespace mscon::synth {

struct TaskSpec {
  std::string name;
  int num_classes = 2;
  std::size_t latent_block_dim = 4;
  double centroid_separation = 3.0;
  double within_class_noise = 0.5;
};

struct DatasetSpec {
  std::vector<TaskSpec> training_tasks;
  std::vector<TaskSpec> ood_tasks;
  std::size_t num_samples = 6000;
  std::size_t input_dim = 64;
  double mixing_noise = 0.1;
  std::uint64_t seed = 0;

  std::size_t num_total_tasks() const { return training_tasks.size() + ood_tasks.size(); }
};

// M=6000, three training tasks (K=3,4,5), one held-out task (K=4),
// input_dim=64; sized so full experiments run in minutes on one core.
DatasetSpec default_dataset_spec(std::uint64_t seed = 1);

struct CorruptionSpec {
  std::size_t task_index = 0;
  double rho = 0.0;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

enum class LabelUse { Training, Evaluation };

// Synthetic multi-similarity dataset. Label columns are ordered training
// tasks first, then held-out (OOD) tasks. Reads for encoder training go
// through LabelUse::Training, which refuses OOD columns and is counted so
// the hold-out protocol can be audited.
class MultiSimDataset {
 public:
  DatasetSpec spec;
  std::vector<double> inputs;             // M x input_dim, row major
  std::vector<std::vector<int>> labels;   // one column per task
  SplitIndices split;
  std::vector<double> latents;            // M x latent_dim ground truth
  std::vector<double> mixing;             // input_dim x latent_dim

  std::size_t num_samples() const { return spec.num_samples; }
  std::size_t input_dim() const { return spec.input_dim; }
  std::size_t num_training_tasks() const { return spec.training_tasks.size(); }
  std::size_t num_total_tasks() const { return spec.num_total_tasks(); }

  const TaskSpec& task(std::size_t index) const;
  int num_classes(std::size_t index) const { return task(index).num_classes; }

  const std::vector<int>& label_column(std::size_t task_index, LabelUse use) const;
  void set_label_column(std::size_t task_index, std::vector<int> column);

  std::uint64_t training_reads(std::size_t task_index) const {
    return training_reads_.at(task_index);
  }

  void init_counters() { training_reads_.assign(num_total_tasks(), 0); }

 private:
  mutable std::vector<std::uint64_t> training_reads_;
};

MultiSimDataset generate_dataset(const DatasetSpec& spec);

// Independently per sample, with probability rho the label is resampled
// uniformly from all K labels (the original included).
std::vector<int> corrupt_labels(const std::vector<int>& labels, int num_classes,
                                const CorruptionSpec& spec);

// Two independent jittered views of one input row.
std::array<std::vector<double>, 2> augment_pair(const std::vector<double>& x,
                                                double jitter_sigma, Rng& rng);
std::array<std::vector<double>, 2> augment_pair(const std::vector<double>& x,
                                                double jitter_sigma, std::uint64_t seed);

SplitIndices split_dataset(std::size_t num_samples, std::array<double, 3> fractions,
                           std::uint64_t seed);

void save_dataset(const MultiSimDataset& ds, const std::string& dir);
MultiSimDataset load_dataset(const std::string& dir);

}  // namespace mscon::synth
