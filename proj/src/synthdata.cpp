#include "mscon/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mscon/jsonio.hpp"

namespace mscon::synth {

namespace fs = std::filesystem;

DatasetSpec default_dataset_spec(std::uint64_t seed) {
  DatasetSpec spec;
  spec.training_tasks = {
      {"task_a", 3, 4, 3.0, 0.5},
      {"task_b", 4, 4, 3.0, 0.5},
      {"task_c", 5, 4, 3.0, 0.5},
  };
  spec.ood_tasks = {{"holdout", 4, 4, 3.0, 0.5}};
  spec.num_samples = 6000;
  spec.input_dim = 64;
  spec.mixing_noise = 0.1;
  spec.seed = seed;
  return spec;
}

const TaskSpec& MultiSimDataset::task(std::size_t index) const {
  MSCON_CHECK(index < num_total_tasks(), "dataset: task index out of range");
  if (index < spec.training_tasks.size()) return spec.training_tasks[index];
  return spec.ood_tasks[index - spec.training_tasks.size()];
}

const std::vector<int>& MultiSimDataset::label_column(std::size_t task_index,
                                                      LabelUse use) const {
  MSCON_CHECK(task_index < labels.size(), "dataset: task index out of range");
  if (use == LabelUse::Training) {
    MSCON_CHECK(task_index < num_training_tasks(),
                "dataset: held-out task labels may not be read for training");
    ++training_reads_[task_index];
  }
  return labels[task_index];
}

void MultiSimDataset::set_label_column(std::size_t task_index, std::vector<int> column) {
  MSCON_CHECK(task_index < labels.size(), "dataset: task index out of range");
  MSCON_CHECK(column.size() == num_samples(), "dataset: label column length mismatch");
  const int k = num_classes(task_index);
  for (int v : column) MSCON_CHECK(v >= 0 && v < k, "dataset: label out of range");
  labels[task_index] = std::move(column);
}

namespace {

std::vector<TaskSpec> all_tasks(const DatasetSpec& spec) {
  std::vector<TaskSpec> tasks = spec.training_tasks;
  tasks.insert(tasks.end(), spec.ood_tasks.begin(), spec.ood_tasks.end());
  return tasks;
}

// K centroids on the radius-`separation` sphere in R^dim, pairwise distinct.
std::vector<std::vector<double>> draw_centroids(int k, std::size_t dim, double separation,
                                                Rng& rng) {
  std::vector<std::vector<double>> centroids;
  for (int attempt = 0; attempt < 1000 && static_cast<int>(centroids.size()) < k;
       ++attempt) {
    std::vector<double> c(dim);
    double norm = 0.0;
    for (auto& v : c) {
      v = gaussian(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-9) continue;
    for (auto& v : c) v = v / norm * separation;
    bool distinct = true;
    for (const auto& prev : centroids) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < dim; ++j) d2 += (c[j] - prev[j]) * (c[j] - prev[j]);
      if (d2 < 1e-12 * separation * separation) {
        distinct = false;
        break;
      }
    }
    if (distinct) centroids.push_back(std::move(c));
  }
  MSCON_CHECK(static_cast<int>(centroids.size()) == k,
              "generate_dataset: could not draw pairwise distinct centroids "
              "(latent block too small for the class count)");
  return centroids;
}

// Orthonormal columns via modified Gram-Schmidt on a Gaussian draw.
std::vector<double> draw_mixing(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> w(rows * cols);
  for (auto& v : w) v = gaussian(rng);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double dot = 0.0;
      for (std::size_t r = 0; r < rows; ++r) dot += w[r * cols + c] * w[r * cols + p];
      for (std::size_t r = 0; r < rows; ++r) w[r * cols + c] -= dot * w[r * cols + p];
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < rows; ++r) norm += w[r * cols + c] * w[r * cols + c];
    norm = std::sqrt(norm);
    MSCON_CHECK(norm > 1e-9, "generate_dataset: rank-deficient mixing draw");
    for (std::size_t r = 0; r < rows; ++r) w[r * cols + c] /= norm;
  }
  return w;
}

}  // namespace

MultiSimDataset generate_dataset(const DatasetSpec& spec) {
  MSCON_CHECK(!spec.training_tasks.empty(), "generate_dataset: no training tasks");
  const auto tasks = all_tasks(spec);
  std::size_t latent_dim = 0;
  int max_k = 0;
  for (const auto& t : tasks) {
    MSCON_CHECK(t.num_classes >= 2, "generate_dataset: tasks need at least two classes");
    MSCON_CHECK(t.latent_block_dim >= 1, "generate_dataset: latent block dim must be >= 1");
    MSCON_CHECK(t.centroid_separation > 0.0, "generate_dataset: separation must be positive");
    MSCON_CHECK(t.within_class_noise >= 0.0, "generate_dataset: negative noise");
    latent_dim += t.latent_block_dim;
    max_k = std::max(max_k, t.num_classes);
  }
  MSCON_CHECK(spec.input_dim >= latent_dim,
              "generate_dataset: input_dim must cover all latent blocks");
  MSCON_CHECK(spec.num_samples >= 10 * static_cast<std::size_t>(max_k),
              "generate_dataset: need at least 10 samples per largest class count");
  MSCON_CHECK(spec.mixing_noise >= 0.0, "generate_dataset: negative mixing noise");

  const std::size_t m = spec.num_samples;
  MultiSimDataset ds;
  ds.spec = spec;
  ds.labels.assign(tasks.size(), std::vector<int>(m, 0));
  ds.latents.assign(m * latent_dim, 0.0);
  ds.inputs.assign(m * spec.input_dim, 0.0);

  std::size_t block_offset = 0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const TaskSpec& task = tasks[t];
    Rng centroid_rng(derive_seed(spec.seed, "centroids", t));
    const auto centroids = draw_centroids(task.num_classes, task.latent_block_dim,
                                          task.centroid_separation, centroid_rng);
    Rng label_rng(derive_seed(spec.seed, "labels", t));
    Rng noise_rng(derive_seed(spec.seed, "latent-noise", t));
    for (std::size_t i = 0; i < m; ++i) {
      const int y = uniform_int(label_rng, 0, task.num_classes - 1);
      ds.labels[t][i] = y;
      for (std::size_t j = 0; j < task.latent_block_dim; ++j)
        ds.latents[i * latent_dim + block_offset + j] =
            centroids[static_cast<std::size_t>(y)][j] +
            gaussian(noise_rng, 0.0, task.within_class_noise);
    }
    block_offset += task.latent_block_dim;
  }

  Rng mixing_rng(derive_seed(spec.seed, "mixing"));
  ds.mixing = draw_mixing(spec.input_dim, latent_dim, mixing_rng);
  Rng obs_rng(derive_seed(spec.seed, "obs-noise"));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t r = 0; r < spec.input_dim; ++r) {
      double v = 0.0;
      for (std::size_t c = 0; c < latent_dim; ++c)
        v += ds.mixing[r * latent_dim + c] * ds.latents[i * latent_dim + c];
      ds.inputs[i * spec.input_dim + r] = v + gaussian(obs_rng, 0.0, spec.mixing_noise);
    }
  }

  ds.split = split_dataset(m, {0.7, 0.1, 0.2}, derive_seed(spec.seed, "split"));
  ds.init_counters();
  return ds;
}

std::vector<int> corrupt_labels(const std::vector<int>& labels, int num_classes,
                                const CorruptionSpec& spec) {
  MSCON_CHECK(spec.rho >= 0.0 && spec.rho <= 1.0, "corrupt_labels: rho must be in [0, 1]");
  MSCON_CHECK(num_classes >= 2, "corrupt_labels: need at least two classes");
  for (int v : labels)
    MSCON_CHECK(v >= 0 && v < num_classes, "corrupt_labels: label out of range");
  std::vector<int> out = labels;
  Rng rng(derive_seed(spec.seed, "corrupt", spec.task_index));
  for (auto& v : out)
    if (uniform01(rng) < spec.rho) v = uniform_int(rng, 0, num_classes - 1);
  return out;
}

std::array<std::vector<double>, 2> augment_pair(const std::vector<double>& x,
                                                double jitter_sigma, Rng& rng) {
  MSCON_CHECK(jitter_sigma >= 0.0, "augment_pair: jitter_sigma must be >= 0");
  std::array<std::vector<double>, 2> views{x, x};
  for (auto& view : views)
    for (auto& v : view) v += gaussian(rng, 0.0, jitter_sigma);
  return views;
}

std::array<std::vector<double>, 2> augment_pair(const std::vector<double>& x,
                                                double jitter_sigma, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "augment"));
  return augment_pair(x, jitter_sigma, rng);
}

SplitIndices split_dataset(std::size_t num_samples, std::array<double, 3> fractions,
                           std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    MSCON_CHECK(f > 0.0, "split_dataset: fractions must be positive");
    sum += f;
  }
  MSCON_CHECK(std::abs(sum - 1.0) < 1e-9, "split_dataset: fractions must sum to 1");
  const auto n_val = static_cast<std::size_t>(fractions[1] * static_cast<double>(num_samples));
  const auto n_test = static_cast<std::size_t>(fractions[2] * static_cast<double>(num_samples));
  MSCON_CHECK(n_val + n_test < num_samples, "split_dataset: empty training split");

  std::vector<std::size_t> perm(num_samples);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  SplitIndices s;
  const std::size_t n_train = num_samples - n_val - n_test;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
               perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return s;
}

void save_dataset(const MultiSimDataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream f(fs::path(dir) / "spec.json");
    f << dataset_spec_to_json(ds.spec).dump(2) << "\n";
  }
  {
    std::ofstream f(fs::path(dir) / "inputs.bin", std::ios::binary);
    f << ds.num_samples() << " " << ds.input_dim() << "\n";
    f.write(reinterpret_cast<const char*>(ds.inputs.data()),
            static_cast<std::streamsize>(ds.inputs.size() * sizeof(double)));
  }
  {
    std::ofstream f(fs::path(dir) / "labels.csv");
    const auto tasks = all_tasks(ds.spec);
    for (std::size_t t = 0; t < tasks.size(); ++t)
      f << (t ? "," : "") << tasks[t].name;
    f << "\n";
    for (std::size_t i = 0; i < ds.num_samples(); ++i) {
      for (std::size_t t = 0; t < ds.labels.size(); ++t)
        f << (t ? "," : "") << ds.labels[t][i];
      f << "\n";
    }
  }
  {
    std::ofstream f(fs::path(dir) / "splits.csv");
    f << "split,index\n";
    for (auto i : ds.split.train) f << "train," << i << "\n";
    for (auto i : ds.split.val) f << "val," << i << "\n";
    for (auto i : ds.split.test) f << "test," << i << "\n";
  }
  {
    std::ofstream f(fs::path(dir) / "ground_truth.bin", std::ios::binary);
    const std::size_t latent_dim =
        ds.num_samples() ? ds.latents.size() / ds.num_samples() : 0;
    f << ds.num_samples() << " " << latent_dim << " " << ds.input_dim() << "\n";
    f.write(reinterpret_cast<const char*>(ds.latents.data()),
            static_cast<std::streamsize>(ds.latents.size() * sizeof(double)));
    f.write(reinterpret_cast<const char*>(ds.mixing.data()),
            static_cast<std::streamsize>(ds.mixing.size() * sizeof(double)));
  }
}

MultiSimDataset load_dataset(const std::string& dir) {
  MultiSimDataset ds;
  {
    std::ifstream f(fs::path(dir) / "spec.json");
    MSCON_CHECK(f.good(), "load_dataset: missing spec.json in " + dir);
    nlohmann::json j = nlohmann::json::parse(f);
    ds.spec = dataset_spec_from_json(j);
  }
  const auto tasks = all_tasks(ds.spec);
  {
    std::ifstream f(fs::path(dir) / "inputs.bin", std::ios::binary);
    MSCON_CHECK(f.good(), "load_dataset: missing inputs.bin");
    std::size_t m = 0, d = 0;
    f >> m >> d;
    f.ignore(1);
    MSCON_CHECK(m == ds.spec.num_samples && d == ds.spec.input_dim,
                "load_dataset: inputs header does not match spec");
    ds.inputs.resize(m * d);
    f.read(reinterpret_cast<char*>(ds.inputs.data()),
           static_cast<std::streamsize>(ds.inputs.size() * sizeof(double)));
    MSCON_CHECK(f.good(), "load_dataset: truncated inputs.bin");
  }
  {
    std::ifstream f(fs::path(dir) / "labels.csv");
    MSCON_CHECK(f.good(), "load_dataset: missing labels.csv");
    std::string line;
    std::getline(f, line);  // header
    ds.labels.assign(tasks.size(), {});
    while (std::getline(f, line)) {
      std::stringstream ss(line);
      std::string cell;
      std::size_t t = 0;
      while (std::getline(ss, cell, ',')) {
        MSCON_CHECK(t < tasks.size(), "load_dataset: too many label columns");
        ds.labels[t++].push_back(std::stoi(cell));
      }
    }
    for (const auto& col : ds.labels)
      MSCON_CHECK(col.size() == ds.spec.num_samples, "load_dataset: label column length");
  }
  {
    std::ifstream f(fs::path(dir) / "splits.csv");
    MSCON_CHECK(f.good(), "load_dataset: missing splits.csv");
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
      const auto comma = line.find(',');
      MSCON_CHECK(comma != std::string::npos, "load_dataset: malformed splits.csv");
      const std::string which = line.substr(0, comma);
      const std::size_t idx = std::stoul(line.substr(comma + 1));
      if (which == "train")
        ds.split.train.push_back(idx);
      else if (which == "val")
        ds.split.val.push_back(idx);
      else if (which == "test")
        ds.split.test.push_back(idx);
      else
        throw ContractViolation("load_dataset: unknown split '" + which + "'");
    }
  }
  {
    std::ifstream f(fs::path(dir) / "ground_truth.bin", std::ios::binary);
    MSCON_CHECK(f.good(), "load_dataset: missing ground_truth.bin");
    std::size_t m = 0, l = 0, d = 0;
    f >> m >> l >> d;
    f.ignore(1);
    ds.latents.resize(m * l);
    ds.mixing.resize(d * l);
    f.read(reinterpret_cast<char*>(ds.latents.data()),
           static_cast<std::streamsize>(ds.latents.size() * sizeof(double)));
    f.read(reinterpret_cast<char*>(ds.mixing.data()),
           static_cast<std::streamsize>(ds.mixing.size() * sizeof(double)));
    MSCON_CHECK(f.good(), "load_dataset: truncated ground_truth.bin");
  }
  ds.init_counters();
  return ds;
}

}  // namespace mscon::synth
