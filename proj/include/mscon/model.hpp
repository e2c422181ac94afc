#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mscon/rng.hpp"
#include "mscon/tape.hpp"

namespace mscon::net {

struct EncoderConfig {
  std::size_t input_dim = 64;
  std::vector<std::size_t> hidden_dims{128, 128};
  std::size_t embedding_dim = 64;
  std::size_t head_hidden_dim = 64;
  std::size_t projection_dim = 32;
  std::size_t num_tasks = 1;
  std::uint64_t seed = 0;
};

struct DenseLayer {
  ad::TensorPtr W;  // in x out
  ad::TensorPtr b;  // out
};

struct ProjectionHead {
  DenseLayer hidden;
  DenseLayer out;
};

// Shared encoder, one projection head per similarity task, and the learnable
// log-variances s_c = log sigma_c^2. s_c = 0 at init, i.e. the unweighted
// objective.
struct ModelParams {
  EncoderConfig config;
  std::vector<DenseLayer> encoder;  // hidden layers, then the linear embedding layer
  std::vector<ProjectionHead> heads;
  std::vector<ad::TensorPtr> log_var;

  void for_each_param(
      const std::function<void(const std::string&, const ad::TensorPtr&)>& fn) const;
  ModelParams clone() const;
  // Order-stable digest of all parameter values; used to assert a probe
  // left the encoder untouched.
  double checksum() const;
};

DenseLayer init_dense(std::size_t fan_in, std::size_t fan_out, Rng& rng);

ModelParams init_params(const EncoderConfig& config);

// Register every parameter as a tape leaf ahead of a training step.
void register_params(ad::Tape& tape, const ModelParams& params);

// MLP forward: relu between layers, final layer linear (the embedding space
// itself is not normalized; only projections are).
ad::TensorPtr encode(ad::Tape& tape, const ModelParams& params, const ad::TensorPtr& X);

// Two-layer head (linear-relu-linear) followed by row normalization onto the
// unit sphere.
ad::TensorPtr project(ad::Tape& tape, const ModelParams& params, const ad::TensorPtr& H,
                      std::size_t task);

// Generic dense stack used by probes and cross-entropy baselines.
ad::TensorPtr forward_layers(ad::Tape& tape, const std::vector<DenseLayer>& layers,
                             const ad::TensorPtr& X, bool relu_between);

void save_checkpoint(const ModelParams& params, const std::string& dir);
ModelParams load_checkpoint(const std::string& dir);

}  // namespace mscon::net
