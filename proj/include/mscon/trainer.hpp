#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mscon/losses.hpp"
#include "mscon/model.hpp"
#include "mscon/synthdata.hpp"

namespace mscon::train {

enum class Method {
  MsconWeighted,
  MsconUnweighted,
  SupconSingle,
  Simclr,
  XentSingle,
  XentMultitask,
};

std::string method_name(Method m);
Method method_from_name(const std::string& name);
bool is_contrastive(Method m);

struct TrainConfig {
  Method method = Method::MsconWeighted;
  std::size_t task_index = 0;  // for the *-single methods
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double lr = 0.05;
  double momentum = 0.9;
  double temperature = 0.1;
  double xent_lr = 0.01;
  double jitter_sigma = 0.1;
  std::uint64_t seed = 0;
  net::EncoderConfig encoder;  // input_dim and num_tasks are set by the trainer
};

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  loss::LossReport report;
};

struct TrainResult {
  net::ModelParams params;
  std::vector<StepLog> log;
  std::vector<std::size_t> tasks;  // dataset task index per head
};

// Encoder plus per-task linear classifiers for the cross-entropy baselines.
// The best-validation-accuracy snapshot is kept, per the selection rule.
struct XentModel {
  net::EncoderConfig config;
  std::vector<net::DenseLayer> encoder;
  std::vector<net::DenseLayer> classifiers;
  std::vector<std::size_t> tasks;
};

struct XentResult {
  XentModel model;
  std::vector<StepLog> log;
  double best_val_accuracy = 0.0;
};

TrainResult train_contrastive(const synth::MultiSimDataset& ds, TrainConfig cfg);
XentResult train_xent(const synth::MultiSimDataset& ds, TrainConfig cfg);

// Encoder forward only: no augmentation, no projection heads.
std::vector<double> extract_embeddings(const net::ModelParams& params,
                                       const std::vector<double>& inputs,
                                       std::size_t num_rows);
std::vector<double> extract_embeddings(const XentModel& model,
                                       const std::vector<double>& inputs,
                                       std::size_t num_rows);

struct ProbeConfig {
  std::size_t probe_epochs = 20;
  double probe_lr = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::size_t bootstrap_resamples = 1000;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  double test_accuracy = 0.0;
  double accuracy_std = 0.0;
  std::vector<std::uint8_t> correct_flags;  // per test sample
};

// Linear classifier trained on frozen embeddings; top-1 accuracy on the test
// split with a bootstrap standard deviation. Training labels containing a
// single class raise DegenerateInput.
ProbeResult linear_probe(const std::vector<double>& embeddings, std::size_t embedding_dim,
                         const std::vector<int>& labels, int num_classes,
                         const synth::SplitIndices& split, const ProbeConfig& cfg);

double top1_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

double bootstrap_std(const std::vector<std::uint8_t>& correct_flags, std::size_t resamples,
                     std::uint64_t seed);

void write_train_log_csv(const std::vector<StepLog>& log,
                         const std::vector<std::string>& task_names,
                         const std::string& path);

}  // namespace mscon::train
