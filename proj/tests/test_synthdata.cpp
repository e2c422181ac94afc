#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <set>

#include "mscon/synthdata.hpp"

using namespace mscon;
using namespace mscon::synth;

namespace {

DatasetSpec small_spec(std::uint64_t seed = 1, std::size_t m = 300) {
  DatasetSpec spec = default_dataset_spec(seed);
  spec.num_samples = m;
  return spec;
}

}  // namespace

TEST_CASE("default spec shape contract") {
  auto spec = default_dataset_spec(1);
  REQUIRE(spec.training_tasks.size() == 3);
  REQUIRE(spec.ood_tasks.size() == 1);
  CHECK(spec.training_tasks[0].num_classes == 3);
  CHECK(spec.training_tasks[1].num_classes == 4);
  CHECK(spec.training_tasks[2].num_classes == 5);
  CHECK(spec.ood_tasks[0].num_classes == 4);
  CHECK(spec.num_samples == 6000);
  CHECK(spec.input_dim == 64);
}

TEST_CASE("generated dataset: shapes, label ranges, finite inputs") {
  auto ds = generate_dataset(small_spec());
  CHECK(ds.inputs.size() == ds.num_samples() * ds.input_dim());
  REQUIRE(ds.labels.size() == 4);
  for (std::size_t t = 0; t < ds.num_total_tasks(); ++t) {
    REQUIRE(ds.labels[t].size() == ds.num_samples());
    const int k = ds.num_classes(t);
    std::set<int> seen;
    for (int l : ds.labels[t]) {
      CHECK(l >= 0);
      CHECK(l < k);
      seen.insert(l);
    }
    CHECK(static_cast<int>(seen.size()) == k);
  }
  for (double v : ds.inputs) CHECK(std::isfinite(v));
}

TEST_CASE("generation is deterministic in the seed") {
  auto a = generate_dataset(small_spec(7));
  auto b = generate_dataset(small_spec(7));
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  CHECK(a.split.train == b.split.train);
  auto c = generate_dataset(small_spec(8));
  CHECK(a.inputs != c.inputs);
}

TEST_CASE("task labels are pairwise independent-ish") {
  // Labels from distinct tasks come from disjoint latent blocks; the joint
  // histogram over a training-task pair should be near the product of
  // marginals.
  auto ds = generate_dataset(small_spec(3, 3000));
  const auto& la = ds.label_column(0, LabelUse::Evaluation);
  const auto& lb = ds.label_column(1, LabelUse::Evaluation);
  const int ka = ds.num_classes(0), kb = ds.num_classes(1);
  std::vector<double> joint(static_cast<std::size_t>(ka * kb), 0.0);
  std::vector<double> ma(ka, 0.0), mb(kb, 0.0);
  const double n = static_cast<double>(ds.num_samples());
  for (std::size_t i = 0; i < ds.num_samples(); ++i) {
    joint[static_cast<std::size_t>(la[i] * kb + lb[i])] += 1.0 / n;
    ma[static_cast<std::size_t>(la[i])] += 1.0 / n;
    mb[static_cast<std::size_t>(lb[i])] += 1.0 / n;
  }
  for (int a = 0; a < ka; ++a)
    for (int b = 0; b < kb; ++b)
      CHECK(std::abs(joint[static_cast<std::size_t>(a * kb + b)] - ma[a] * mb[b]) < 0.05);
}

TEST_CASE("split: sizes, partition, determinism") {
  auto split = split_dataset(1000, {0.70, 0.10, 0.20}, 5);
  CHECK(split.train.size() == 700);
  CHECK(split.val.size() == 100);
  CHECK(split.test.size() == 200);
  std::vector<std::size_t> all;
  for (auto* part : {&split.train, &split.val, &split.test})
    all.insert(all.end(), part->begin(), part->end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(1000);
  std::iota(expect.begin(), expect.end(), std::size_t{0});
  CHECK(all == expect);
  auto again = split_dataset(1000, {0.70, 0.10, 0.20}, 5);
  CHECK(again.train == split.train);
  CHECK(again.test == split.test);
}

TEST_CASE("split rejects fractions that do not sum to one") {
  CHECK_THROWS_AS(split_dataset(100, {0.5, 0.1, 0.1}, 1), ContractViolation);
}

TEST_CASE("corruption: rho = 0 is the identity") {
  std::vector<int> labels = {0, 1, 2, 1, 0, 2};
  CorruptionSpec cs;
  cs.rho = 0.0;
  cs.seed = 9;
  CHECK(corrupt_labels(labels, 3, cs) == labels);
}

TEST_CASE("corruption: rho = 1 leaves about 1/K matches") {
  const int k = 4;
  std::vector<int> labels(20000, 2);
  CorruptionSpec cs;
  cs.rho = 1.0;
  cs.seed = 11;
  auto out = corrupt_labels(labels, k, cs);
  double match = 0.0;
  std::vector<int> counts(k, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (out[i] == labels[i]) match += 1.0;
    ++counts[static_cast<std::size_t>(out[i])];
  }
  match /= static_cast<double>(labels.size());
  CHECK(std::abs(match - 1.0 / k) < 0.01);
  for (int c : counts) CHECK(std::abs(c / 20000.0 - 0.25) < 0.01);
}

TEST_CASE("corruption: intermediate rho matches 1 - rho (1 - 1/K)") {
  const int k = 5;
  std::vector<int> labels(20000);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % k);
  CorruptionSpec cs;
  cs.rho = 0.5;
  cs.seed = 13;
  auto out = corrupt_labels(labels, k, cs);
  double match = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (out[i] == labels[i]) match += 1.0;
  match /= static_cast<double>(labels.size());
  const double expected = 1.0 - cs.rho * (1.0 - 1.0 / k);
  CHECK(std::abs(match - expected) < 0.01);
  CHECK(corrupt_labels(labels, k, cs) == out);  // deterministic
}

TEST_CASE("corruption rejects rho outside [0, 1]") {
  CorruptionSpec cs;
  cs.rho = 1.5;
  CHECK_THROWS_AS(corrupt_labels({0, 1}, 2, cs), ContractViolation);
}

TEST_CASE("augmentation: views differ from the source by about jitter * sqrt(dim)") {
  const std::size_t dim = 64;
  const double jitter = 0.1;
  std::vector<double> x(dim, 0.5);
  double mean_dist = 0.0, view_gap = 0.0;
  const int trials = 500;
  Rng rng(21);
  for (int t = 0; t < trials; ++t) {
    auto views = augment_pair(x, jitter, rng);
    double d0 = 0.0, gap = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      d0 += (views[0][j] - x[j]) * (views[0][j] - x[j]);
      gap += (views[0][j] - views[1][j]) * (views[0][j] - views[1][j]);
    }
    mean_dist += std::sqrt(d0);
    view_gap += std::sqrt(gap);
  }
  mean_dist /= trials;
  view_gap /= trials;
  CHECK(mean_dist == doctest::Approx(jitter * std::sqrt(static_cast<double>(dim))).epsilon(0.05));
  // Independent views: the gap is jitter * sqrt(2 * dim) on average.
  CHECK(view_gap ==
        doctest::Approx(jitter * std::sqrt(2.0 * static_cast<double>(dim))).epsilon(0.05));
}

TEST_CASE("augmentation: seed overload is deterministic") {
  std::vector<double> x(8, 1.0);
  auto a = augment_pair(x, 0.2, std::uint64_t{77});
  auto b = augment_pair(x, 0.2, std::uint64_t{77});
  CHECK(a[0] == b[0]);
  CHECK(a[1] == b[1]);
}

TEST_CASE("label access guard: training reads of held-out columns throw") {
  auto ds = generate_dataset(small_spec());
  const std::size_t ood = ds.num_training_tasks();  // first held-out column
  CHECK_NOTHROW(ds.label_column(0, LabelUse::Training));
  CHECK_NOTHROW(ds.label_column(ood, LabelUse::Evaluation));
  CHECK_THROWS_AS(ds.label_column(ood, LabelUse::Training), ContractViolation);
  CHECK(ds.training_reads(0) == 1);
  CHECK(ds.training_reads(ood) == 0);
}

TEST_CASE("nearest-centroid labels are recoverable from clean latents") {
  // With strong separation and mild within-class noise the ground-truth
  // latent block predicts its task's label almost perfectly.
  auto spec = small_spec(17, 1200);
  auto ds = generate_dataset(spec);
  const std::size_t t = 1;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < t; ++p) offset += spec.training_tasks[p].latent_block_dim;
  const std::size_t bd = spec.training_tasks[t].latent_block_dim;
  std::size_t latent_dim = 0;
  for (const auto& task : spec.training_tasks) latent_dim += task.latent_block_dim;
  for (const auto& task : spec.ood_tasks) latent_dim += task.latent_block_dim;
  const auto& labels = ds.label_column(t, LabelUse::Evaluation);
  const int k = ds.num_classes(t);

  // Class means of the block, then nearest-mean classification.
  std::vector<double> mean(static_cast<std::size_t>(k) * bd, 0.0);
  std::vector<double> count(k, 0.0);
  for (std::size_t i = 0; i < ds.num_samples(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    count[y] += 1.0;
    for (std::size_t j = 0; j < bd; ++j)
      mean[y * bd + j] += ds.latents[i * latent_dim + offset + j];
  }
  for (int c = 0; c < k; ++c)
    for (std::size_t j = 0; j < bd; ++j)
      mean[static_cast<std::size_t>(c) * bd + j] /= count[static_cast<std::size_t>(c)];
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.num_samples(); ++i) {
    int best = 0;
    double best_d = 1e300;
    for (int c = 0; c < k; ++c) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < bd; ++j) {
        const double diff = ds.latents[i * latent_dim + offset + j] -
                            mean[static_cast<std::size_t>(c) * bd + j];
        d2 += diff * diff;
      }
      if (d2 < best_d) {
        best_d = d2;
        best = c;
      }
    }
    if (best == labels[i]) ++correct;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(ds.num_samples()) > 0.95);
}

TEST_CASE("save/load round trip") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "mscon_test_dataset";
  fs::remove_all(dir);
  auto ds = generate_dataset(small_spec(23, 120));
  save_dataset(ds, dir.string());
  auto back = load_dataset(dir.string());
  CHECK(back.inputs == ds.inputs);
  CHECK(back.labels == ds.labels);
  CHECK(back.split.train == ds.split.train);
  CHECK(back.split.val == ds.split.val);
  CHECK(back.split.test == ds.split.test);
  CHECK(back.spec.num_samples == ds.spec.num_samples);
  CHECK(back.spec.training_tasks.size() == ds.spec.training_tasks.size());
  CHECK(back.spec.ood_tasks[0].name == ds.spec.ood_tasks[0].name);
  // Guard state survives the round trip.
  CHECK_THROWS_AS(back.label_column(back.num_training_tasks(), LabelUse::Training),
                  ContractViolation);
  fs::remove_all(dir);
}
