#include "mscon/model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

namespace mscon::net {

namespace fs = std::filesystem;

void ModelParams::for_each_param(
    const std::function<void(const std::string&, const ad::TensorPtr&)>& fn) const {
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    fn("enc." + std::to_string(l) + ".W", encoder[l].W);
    fn("enc." + std::to_string(l) + ".b", encoder[l].b);
  }
  for (std::size_t c = 0; c < heads.size(); ++c) {
    const std::string p = "head." + std::to_string(c) + ".";
    fn(p + "hidden.W", heads[c].hidden.W);
    fn(p + "hidden.b", heads[c].hidden.b);
    fn(p + "out.W", heads[c].out.W);
    fn(p + "out.b", heads[c].out.b);
  }
  for (std::size_t c = 0; c < log_var.size(); ++c)
    fn("log_var." + std::to_string(c), log_var[c]);
}

ModelParams ModelParams::clone() const {
  ModelParams copy;
  copy.config = config;
  auto dup = [](const ad::TensorPtr& t) {
    auto p = std::make_shared<ad::Tensor>(*t);
    p->tape_id = -1;
    p->grad.clear();
    return p;
  };
  for (const auto& l : encoder) copy.encoder.push_back({dup(l.W), dup(l.b)});
  for (const auto& h : heads)
    copy.heads.push_back({{dup(h.hidden.W), dup(h.hidden.b)}, {dup(h.out.W), dup(h.out.b)}});
  for (const auto& s : log_var) copy.log_var.push_back(dup(s));
  return copy;
}

double ModelParams::checksum() const {
  double sum = 0.0;
  std::size_t i = 0;
  for_each_param([&](const std::string&, const ad::TensorPtr& t) {
    for (double v : t->values) sum += v * std::cos(static_cast<double>(++i));
  });
  return sum;
}

DenseLayer init_dense(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  MSCON_CHECK(fan_in >= 1 && fan_out >= 1, "init_dense: dims must be >= 1");
  const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> w(fan_in * fan_out);
  for (auto& v : w) v = gaussian(rng, 0.0, scale);
  return {ad::make_tensor({fan_in, fan_out}, std::move(w)),
          ad::make_tensor({fan_out}, std::vector<double>(fan_out, 0.0))};
}

ModelParams init_params(const EncoderConfig& config) {
  MSCON_CHECK(config.input_dim >= 1 && config.embedding_dim >= 1 &&
                  config.head_hidden_dim >= 1 && config.projection_dim >= 1 &&
                  config.num_tasks >= 1,
              "init_params: all dims and the task count must be >= 1");
  for (auto d : config.hidden_dims) MSCON_CHECK(d >= 1, "init_params: hidden dim must be >= 1");

  Rng rng(derive_seed(config.seed, "model-init"));
  ModelParams params;
  params.config = config;
  std::size_t in = config.input_dim;
  for (auto h : config.hidden_dims) {
    params.encoder.push_back(init_dense(in, h, rng));
    in = h;
  }
  params.encoder.push_back(init_dense(in, config.embedding_dim, rng));
  for (std::size_t c = 0; c < config.num_tasks; ++c) {
    ProjectionHead head;
    head.hidden = init_dense(config.embedding_dim, config.head_hidden_dim, rng);
    head.out = init_dense(config.head_hidden_dim, config.projection_dim, rng);
    params.heads.push_back(std::move(head));
  }
  for (std::size_t c = 0; c < config.num_tasks; ++c)
    params.log_var.push_back(ad::make_tensor({1}, {0.0}));
  return params;
}

void register_params(ad::Tape& tape, const ModelParams& params) {
  params.for_each_param(
      [&](const std::string&, const ad::TensorPtr& t) { tape.leaf(t); });
}

ad::TensorPtr forward_layers(ad::Tape& tape, const std::vector<DenseLayer>& layers,
                             const ad::TensorPtr& X, bool relu_between) {
  ad::TensorPtr h = X;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = tape.add_rowvec(tape.matmul(h, layers[l].W), layers[l].b);
    if (relu_between && l + 1 < layers.size()) h = tape.relu(h);
  }
  return h;
}

ad::TensorPtr encode(ad::Tape& tape, const ModelParams& params, const ad::TensorPtr& X) {
  MSCON_CHECK(X->is_matrix() && X->shape[1] == params.config.input_dim,
              "encode: input width must equal input_dim");
  return forward_layers(tape, params.encoder, X, true);
}

ad::TensorPtr project(ad::Tape& tape, const ModelParams& params, const ad::TensorPtr& H,
                      std::size_t task) {
  MSCON_CHECK(task < params.heads.size(), "project: task index out of range");
  const ProjectionHead& head = params.heads[task];
  ad::TensorPtr h = tape.relu(tape.add_rowvec(tape.matmul(H, head.hidden.W), head.hidden.b));
  ad::TensorPtr v = tape.add_rowvec(tape.matmul(h, head.out.W), head.out.b);
  return tape.row_normalize(v);
}

void save_checkpoint(const ModelParams& params, const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::json cfg = {{"input_dim", params.config.input_dim},
                        {"hidden_dims", params.config.hidden_dims},
                        {"embedding_dim", params.config.embedding_dim},
                        {"head_hidden_dim", params.config.head_hidden_dim},
                        {"projection_dim", params.config.projection_dim},
                        {"num_tasks", params.config.num_tasks},
                        {"seed", params.config.seed}};
  std::ofstream(fs::path(dir) / "config.json") << cfg.dump(2) << "\n";

  std::ofstream manifest(fs::path(dir) / "manifest.csv");
  manifest << "name,shape,offset\n";
  std::ofstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  std::size_t offset = 0;
  params.for_each_param([&](const std::string& name, const ad::TensorPtr& t) {
    manifest << name << ",";
    for (std::size_t i = 0; i < t->shape.size(); ++i)
      manifest << (i ? "x" : "") << t->shape[i];
    manifest << "," << offset << "\n";
    bin.write(reinterpret_cast<const char*>(t->values.data()),
              static_cast<std::streamsize>(t->values.size() * sizeof(double)));
    offset += t->values.size() * sizeof(double);
  });
}

ModelParams load_checkpoint(const std::string& dir) {
  std::ifstream cfg_file(fs::path(dir) / "config.json");
  MSCON_CHECK(cfg_file.good(), "load_checkpoint: missing config.json in " + dir);
  nlohmann::json cfg = nlohmann::json::parse(cfg_file);
  EncoderConfig config;
  config.input_dim = cfg.at("input_dim").get<std::size_t>();
  config.hidden_dims = cfg.at("hidden_dims").get<std::vector<std::size_t>>();
  config.embedding_dim = cfg.at("embedding_dim").get<std::size_t>();
  config.head_hidden_dim = cfg.at("head_hidden_dim").get<std::size_t>();
  config.projection_dim = cfg.at("projection_dim").get<std::size_t>();
  config.num_tasks = cfg.at("num_tasks").get<std::size_t>();
  config.seed = cfg.at("seed").get<std::uint64_t>();

  ModelParams params = init_params(config);
  std::ifstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  MSCON_CHECK(bin.good(), "load_checkpoint: missing params.bin");
  params.for_each_param([&](const std::string& name, const ad::TensorPtr& t) {
    bin.read(reinterpret_cast<char*>(t->values.data()),
             static_cast<std::streamsize>(t->values.size() * sizeof(double)));
    MSCON_CHECK(bin.good(), "load_checkpoint: truncated params.bin at " + name);
  });
  return params;
}

}  // namespace mscon::net
