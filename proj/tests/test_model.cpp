#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "mscon/model.hpp"

using namespace mscon;
using namespace mscon::ad;
using namespace mscon::net;

namespace {

EncoderConfig small_config(std::uint64_t seed = 1) {
  EncoderConfig cfg;
  cfg.input_dim = 10;
  cfg.hidden_dims = {16, 16};
  cfg.embedding_dim = 8;
  cfg.head_hidden_dim = 12;
  cfg.projection_dim = 6;
  cfg.num_tasks = 3;
  cfg.seed = seed;
  return cfg;
}

TensorPtr random_batch(Tape& tape, const EncoderConfig& cfg, std::size_t n,
                       std::uint64_t seed) {
  Rng rng(seed);
  Tensor x = Tensor::zeros({n, cfg.input_dim});
  for (auto& v : x.values) v = gaussian(rng);
  return tape.leaf(std::move(x));
}

}  // namespace

TEST_CASE("init: layer shapes, one head per task, zero log variances") {
  auto cfg = small_config();
  auto params = init_params(cfg);
  REQUIRE(params.encoder.size() == 3);  // two hidden + embedding layer
  CHECK(params.encoder[0].W->shape == std::vector<std::size_t>({10, 16}));
  CHECK(params.encoder[2].W->shape == std::vector<std::size_t>({16, 8}));
  REQUIRE(params.heads.size() == 3);
  CHECK(params.heads[0].hidden.W->shape == std::vector<std::size_t>({8, 12}));
  CHECK(params.heads[0].out.W->shape == std::vector<std::size_t>({12, 6}));
  REQUIRE(params.log_var.size() == 3);
  for (const auto& s : params.log_var) CHECK(s->values[0] == 0.0);
  for (const auto& layer : params.encoder)
    for (double b : layer.b->values) CHECK(b == 0.0);
}

TEST_CASE("init is deterministic in the seed, distinct across seeds") {
  auto a = init_params(small_config(4));
  auto b = init_params(small_config(4));
  auto c = init_params(small_config(5));
  CHECK(a.checksum() == b.checksum());
  CHECK(a.encoder[0].W->values == b.encoder[0].W->values);
  CHECK(a.checksum() != c.checksum());
}

TEST_CASE("heads are initialized differently from one another") {
  auto params = init_params(small_config());
  CHECK(params.heads[0].hidden.W->values != params.heads[1].hidden.W->values);
  CHECK(params.heads[1].out.W->values != params.heads[2].out.W->values);
}

TEST_CASE("parameter iteration: unique names, full coverage") {
  auto params = init_params(small_config());
  std::set<std::string> names;
  std::size_t count = 0;
  params.for_each_param([&](const std::string& name, const TensorPtr& t) {
    CHECK(t != nullptr);
    names.insert(name);
    ++count;
  });
  // 3 encoder layers * 2 + 3 heads * 4 + 3 log vars
  CHECK(count == 21);
  CHECK(names.size() == count);
  CHECK(names.count("enc.0.W") == 1);
  CHECK(names.count("log_var.2") == 1);
}

TEST_CASE("encode/project: shapes and unit-norm projections") {
  auto cfg = small_config();
  auto params = init_params(cfg);
  Tape tape;
  register_params(tape, params);
  auto x = random_batch(tape, cfg, 5, 99);
  auto h = encode(tape, params, x);
  CHECK(h->shape == std::vector<std::size_t>({5, cfg.embedding_dim}));
  for (std::size_t t = 0; t < cfg.num_tasks; ++t) {
    auto v = project(tape, params, h, t);
    REQUIRE(v->shape == std::vector<std::size_t>({5, cfg.projection_dim}));
    for (std::size_t i = 0; i < 5; ++i) {
      double norm = 0.0;
      for (std::size_t j = 0; j < cfg.projection_dim; ++j) norm += v->at(i, j) * v->at(i, j);
      CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("projections differ across heads") {
  auto cfg = small_config();
  auto params = init_params(cfg);
  Tape tape;
  register_params(tape, params);
  auto x = random_batch(tape, cfg, 4, 7);
  auto h = encode(tape, params, x);
  auto v0 = project(tape, params, h, 0);
  auto v1 = project(tape, params, h, 1);
  CHECK(v0->values != v1->values);
}

TEST_CASE("every head back-propagates into the encoder") {
  auto cfg = small_config();
  auto params = init_params(cfg);
  for (std::size_t t = 0; t < cfg.num_tasks; ++t) {
    Tape tape;
    register_params(tape, params);
    auto x = random_batch(tape, cfg, 4, 13);
    auto h = encode(tape, params, x);
    auto y = tape.reduce_sum(project(tape, params, h, t));
    tape.backward(y);
    double g = 0.0;
    for (double v : params.encoder[0].W->grad) g += std::abs(v);
    CHECK(g > 0.0);
    // Only the active head receives gradient.
    for (std::size_t other = 0; other < cfg.num_tasks; ++other) {
      double hg = 0.0;
      for (double v : params.heads[other].hidden.W->grad) hg += std::abs(v);
      if (other == t)
        CHECK(hg > 0.0);
      else
        CHECK(hg == 0.0);
    }
  }
}

TEST_CASE("forward is deterministic") {
  auto cfg = small_config();
  auto params = init_params(cfg);
  auto run = [&]() {
    Tape tape;
    register_params(tape, params);
    auto x = random_batch(tape, cfg, 6, 21);
    return project(tape, params, encode(tape, params, x), 1)->values;
  };
  CHECK(run() == run());
}

TEST_CASE("clone is deep") {
  auto params = init_params(small_config());
  auto copy = params.clone();
  CHECK(copy.checksum() == params.checksum());
  copy.encoder[0].W->values[0] += 1.0;
  CHECK(copy.checksum() != params.checksum());
}

TEST_CASE("checkpoint round trip") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "mscon_test_ckpt";
  fs::remove_all(dir);
  auto params = init_params(small_config(31));
  params.log_var[1]->values[0] = 0.25;  // non-default state must survive
  save_checkpoint(params, dir.string());
  auto back = load_checkpoint(dir.string());
  CHECK(back.checksum() == params.checksum());
  CHECK(back.config.num_tasks == params.config.num_tasks);
  CHECK(back.config.hidden_dims == params.config.hidden_dims);
  CHECK(back.log_var[1]->values[0] == 0.25);
  CHECK(back.encoder[2].W->values == params.encoder[2].W->values);
  fs::remove_all(dir);
}
