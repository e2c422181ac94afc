#include "mscon/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "mscon/csvfmt.hpp"
#include "mscon/jsonio.hpp"

namespace mscon::expt {

namespace fs = std::filesystem;

ExperimentManifest default_manifest(const std::string& kind) {
  ExperimentManifest m;
  m.kind = kind;
  m.dataset = synth::default_dataset_spec(1);
  if (kind == "generate-data") return m;
  // Sweeps shrink the dataset and epoch count so a full grid of training
  // runs finishes in a minutes-scale single-core budget.
  m.dataset.num_samples = 2400;
  m.train_base.epochs = 60;
  if (kind == "corruption-sweep") {
    m.seeds = {1, 2, 3, 4, 5};
  } else if (kind == "indomain-table" || kind == "ood-eval") {
    m.seeds = {1, 2, 3};
  } else if (kind == "hparam-sweep") {
    m.seeds = {1, 2, 3};
  } else {
    throw ContractViolation("default_manifest: unknown kind '" + kind + "'");
  }
  return m;
}

namespace {

nlohmann::json train_cfg_to_json(const train::TrainConfig& c) {
  return {{"epochs", c.epochs},        {"batch_size", c.batch_size},
          {"lr", c.lr},                {"momentum", c.momentum},
          {"temperature", c.temperature}, {"xent_lr", c.xent_lr},
          {"jitter_sigma", c.jitter_sigma},
          {"hidden_dims", c.encoder.hidden_dims},
          {"embedding_dim", c.encoder.embedding_dim},
          {"head_hidden_dim", c.encoder.head_hidden_dim},
          {"projection_dim", c.encoder.projection_dim}};
}

train::TrainConfig train_cfg_from_json(const nlohmann::json& j) {
  train::TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.temperature = j.value("temperature", c.temperature);
  c.xent_lr = j.value("xent_lr", c.xent_lr);
  c.jitter_sigma = j.value("jitter_sigma", c.jitter_sigma);
  c.encoder.hidden_dims = j.value("hidden_dims", c.encoder.hidden_dims);
  c.encoder.embedding_dim = j.value("embedding_dim", c.encoder.embedding_dim);
  c.encoder.head_hidden_dim = j.value("head_hidden_dim", c.encoder.head_hidden_dim);
  c.encoder.projection_dim = j.value("projection_dim", c.encoder.projection_dim);
  return c;
}

}  // namespace

nlohmann::json manifest_to_json(const ExperimentManifest& m) {
  return {{"kind", m.kind},
          {"dataset", synth::dataset_spec_to_json(m.dataset)},
          {"train", train_cfg_to_json(m.train_base)},
          {"probe",
           {{"probe_epochs", m.probe_base.probe_epochs},
            {"probe_lr", m.probe_base.probe_lr},
            {"batch_size", m.probe_base.batch_size},
            {"bootstrap_resamples", m.probe_base.bootstrap_resamples}}},
          {"rho_grid", m.rho_grid},
          {"corrupt_task", m.corrupt_task},
          {"seeds", m.seeds},
          {"tau_grid", m.tau_grid},
          {"epoch_grid", m.epoch_grid},
          {"out_dir", m.out_dir}};
}

ExperimentManifest manifest_from_json(const nlohmann::json& j) {
  ExperimentManifest m = default_manifest(j.value("kind", std::string("corruption-sweep")));
  if (j.contains("dataset")) m.dataset = synth::dataset_spec_from_json(j.at("dataset"));
  if (j.contains("train")) m.train_base = train_cfg_from_json(j.at("train"));
  if (j.contains("probe")) {
    const auto& p = j.at("probe");
    m.probe_base.probe_epochs = p.value("probe_epochs", m.probe_base.probe_epochs);
    m.probe_base.probe_lr = p.value("probe_lr", m.probe_base.probe_lr);
    m.probe_base.batch_size = p.value("batch_size", m.probe_base.batch_size);
    m.probe_base.bootstrap_resamples =
        p.value("bootstrap_resamples", m.probe_base.bootstrap_resamples);
  }
  m.rho_grid = j.value("rho_grid", m.rho_grid);
  m.corrupt_task = j.value("corrupt_task", m.corrupt_task);
  m.seeds = j.value("seeds", m.seeds);
  m.tau_grid = j.value("tau_grid", m.tau_grid);
  m.epoch_grid = j.value("epoch_grid", m.epoch_grid);
  m.out_dir = j.value("out_dir", m.out_dir);
  MSCON_CHECK(!m.seeds.empty(), "manifest: seeds must be nonempty");
  for (std::size_t i = 1; i < m.seeds.size(); ++i)
    for (std::size_t k = 0; k < i; ++k)
      MSCON_CHECK(m.seeds[i] != m.seeds[k], "manifest: seeds must be distinct");
  return m;
}

ExperimentManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  MSCON_CHECK(f.good(), "load_manifest: cannot open " + path);
  return manifest_from_json(nlohmann::json::parse(f));
}

namespace {

struct ProbeOutcome {
  double top1 = 0.0;
  double top1_std = 0.0;
};

ProbeOutcome probe_task(const std::vector<double>& embeddings, std::size_t dim,
                        const synth::MultiSimDataset& ds, std::size_t task_index,
                        const train::ProbeConfig& base, std::uint64_t seed) {
  train::ProbeConfig cfg = base;
  cfg.seed = seed;
  const auto& labels = ds.label_column(task_index, synth::LabelUse::Evaluation);
  auto res = train::linear_probe(embeddings, dim, labels, ds.num_classes(task_index),
                                 ds.split, cfg);
  return {res.test_accuracy, res.accuracy_std};
}

// Corrupt the training-split entries of one label column; validation and
// test entries stay clean.
synth::MultiSimDataset with_corrupted_train_labels(const synth::MultiSimDataset& base,
                                                   std::size_t task, double rho,
                                                   std::uint64_t seed) {
  synth::MultiSimDataset ds = base;
  ds.init_counters();
  const auto& clean = base.labels[task];
  auto corrupted =
      synth::corrupt_labels(clean, base.num_classes(task), {task, rho, seed});
  std::vector<std::uint8_t> in_train(base.num_samples(), 0);
  for (auto i : base.split.train) in_train[i] = 1;
  for (std::size_t i = 0; i < corrupted.size(); ++i)
    if (!in_train[i]) corrupted[i] = clean[i];
  ds.set_label_column(task, std::move(corrupted));
  return ds;
}

void push(ExperimentResult& rows, const std::string& kind, const std::string& method,
          double rho, std::uint64_t seed, const std::string& task,
          const std::string& metric, double value) {
  rows.push_back({kind, method, rho, seed, task, metric, value});
}

}  // namespace

ExperimentResult run_corruption_sweep(const ExperimentManifest& m) {
  MSCON_CHECK(m.dataset.training_tasks.size() >= 2 && !m.dataset.ood_tasks.empty(),
              "corruption sweep: need >= 2 training tasks and an OOD task");
  MSCON_CHECK(m.corrupt_task < m.dataset.training_tasks.size(),
              "corruption sweep: corrupt_task out of range");
  const synth::MultiSimDataset base = synth::generate_dataset(m.dataset);
  const std::size_t ood_index = base.num_training_tasks();
  const std::string corrupted_name = base.task(m.corrupt_task).name;
  const std::string ood_name = base.task(ood_index).name;

  ExperimentResult rows;
  for (std::uint64_t seed : m.seeds) {
    for (std::size_t ri = 0; ri < m.rho_grid.size(); ++ri) {
      const double rho = m.rho_grid[ri];
      auto ds = with_corrupted_train_labels(base, m.corrupt_task, rho,
                                            derive_seed(seed, "corrupt", ri));
      for (train::Method method :
           {train::Method::MsconWeighted, train::Method::MsconUnweighted}) {
        const std::string name = train::method_name(method);
        train::TrainConfig cfg = m.train_base;
        cfg.method = method;
        cfg.seed = derive_seed(seed, "train-" + name, ri);
        auto trained = train::train_contrastive(ds, cfg);

        const auto& last = trained.log.back().report;
        for (std::size_t c = 0; c < ds.num_training_tasks(); ++c) {
          push(rows, m.kind, name, rho, seed, ds.task(c).name, "sigma_sq",
               last.sigma_sq[c]);
          push(rows, m.kind, name, rho, seed, ds.task(c).name, "weight", last.weight[c]);
        }

        auto emb = train::extract_embeddings(trained.params, ds.inputs, ds.num_samples());
        const std::size_t d = trained.params.config.embedding_dim;
        auto in_domain = probe_task(emb, d, ds, m.corrupt_task, m.probe_base,
                                    derive_seed(seed, "probe-in-" + name, ri));
        push(rows, m.kind, name, rho, seed, corrupted_name, "top1", in_domain.top1);
        push(rows, m.kind, name, rho, seed, corrupted_name, "top1_std", in_domain.top1_std);
        auto ood = probe_task(emb, d, ds, ood_index, m.probe_base,
                              derive_seed(seed, "probe-ood-" + name, ri));
        push(rows, m.kind, name, rho, seed, ood_name, "top1", ood.top1);
        push(rows, m.kind, name, rho, seed, ood_name, "top1_std", ood.top1_std);

        // hold-out labels must never be read for training
        MSCON_CHECK(ds.training_reads(ood_index) == 0,
                    "corruption sweep: OOD label column was read during training");
      }
    }
  }
  return rows;
}

namespace {

struct MethodSpec {
  std::string label;
  train::Method method;
  std::size_t task_index = 0;
};

std::vector<double> method_embeddings(const synth::MultiSimDataset& ds,
                                      const train::TrainConfig& cfg, std::size_t* dim) {
  if (train::is_contrastive(cfg.method)) {
    auto trained = train::train_contrastive(ds, cfg);
    *dim = trained.params.config.embedding_dim;
    return train::extract_embeddings(trained.params, ds.inputs, ds.num_samples());
  }
  auto trained = train::train_xent(ds, cfg);
  *dim = trained.model.config.embedding_dim;
  return train::extract_embeddings(trained.model, ds.inputs, ds.num_samples());
}

}  // namespace

ExperimentResult run_indomain_table(const ExperimentManifest& m) {
  const synth::MultiSimDataset ds = synth::generate_dataset(m.dataset);
  const std::size_t num_tasks = ds.num_training_tasks();

  std::vector<MethodSpec> methods;
  for (std::size_t t = 0; t < num_tasks; ++t)
    methods.push_back({"xent-single:" + ds.task(t).name, train::Method::XentSingle, t});
  methods.push_back({"xent-multitask", train::Method::XentMultitask});
  methods.push_back({"simclr", train::Method::Simclr});
  for (std::size_t t = 0; t < num_tasks; ++t)
    methods.push_back({"supcon-single:" + ds.task(t).name, train::Method::SupconSingle, t});
  methods.push_back({"mscon", train::Method::MsconWeighted});

  ExperimentResult rows;
  for (std::uint64_t seed : m.seeds) {
    for (const auto& spec : methods) {
      train::TrainConfig cfg = m.train_base;
      cfg.method = spec.method;
      cfg.task_index = spec.task_index;
      cfg.seed = derive_seed(seed, "train-" + spec.label);
      std::size_t dim = 0;
      auto emb = method_embeddings(ds, cfg, &dim);
      for (std::size_t t = 0; t < num_tasks; ++t) {
        auto out = probe_task(emb, dim, ds, t, m.probe_base,
                              derive_seed(seed, "probe-" + spec.label, t));
        push(rows, m.kind, spec.label, 0.0, seed, ds.task(t).name, "top1", out.top1);
        push(rows, m.kind, spec.label, 0.0, seed, ds.task(t).name, "top1_std", out.top1_std);
      }
    }
  }
  return rows;
}

ExperimentResult run_ood_eval(const ExperimentManifest& m) {
  MSCON_CHECK(!m.dataset.ood_tasks.empty(), "ood eval: no held-out task");
  const synth::MultiSimDataset ds = synth::generate_dataset(m.dataset);

  ExperimentResult rows;
  for (std::uint64_t seed : m.seeds) {
    for (train::Method method :
         {train::Method::XentMultitask, train::Method::MsconWeighted}) {
      const std::string name = train::method_name(method);
      train::TrainConfig cfg = m.train_base;
      cfg.method = method;
      cfg.seed = derive_seed(seed, "train-" + name);
      std::size_t dim = 0;
      auto emb = method_embeddings(ds, cfg, &dim);
      for (std::size_t o = 0; o < m.dataset.ood_tasks.size(); ++o) {
        const std::size_t task = ds.num_training_tasks() + o;
        auto out = probe_task(emb, dim, ds, task, m.probe_base,
                              derive_seed(seed, "probe-ood-" + name, o));
        push(rows, "ood", name, 0.0, seed, ds.task(task).name, "top1", out.top1);
        push(rows, "ood", name, 0.0, seed, ds.task(task).name, "top1_std", out.top1_std);
        MSCON_CHECK(ds.training_reads(task) == 0,
                    "ood eval: OOD label column was read during training");
      }
    }
  }
  return rows;
}

ExperimentResult run_hparam_sweep(const ExperimentManifest& m) {
  MSCON_CHECK(!m.tau_grid.empty() && !m.epoch_grid.empty(), "hparam sweep: empty grid");
  const synth::MultiSimDataset ds = synth::generate_dataset(m.dataset);
  const std::size_t num_tasks = ds.num_training_tasks();

  ExperimentResult rows;
  for (std::uint64_t seed : m.seeds) {
    for (std::size_t gi = 0; gi < m.tau_grid.size(); ++gi) {
      const double tau = m.tau_grid[gi];
      train::TrainConfig cfg = m.train_base;
      cfg.method = train::Method::MsconWeighted;
      cfg.temperature = tau;
      cfg.seed = derive_seed(seed, "train-tau", gi);
      std::size_t dim = 0;
      auto emb = method_embeddings(ds, cfg, &dim);
      for (std::size_t t = 0; t < num_tasks; ++t) {
        auto out = probe_task(emb, dim, ds, t, m.probe_base,
                              derive_seed(seed, "probe-tau", gi * num_tasks + t));
        // the swept value rides in the rho column
        push(rows, "hparam-tau", "mscon-weighted", tau, seed, ds.task(t).name, "top1",
             out.top1);
        push(rows, "hparam-tau", "mscon-weighted", tau, seed, ds.task(t).name, "top1_std",
             out.top1_std);
      }
    }
    for (std::size_t gi = 0; gi < m.epoch_grid.size(); ++gi) {
      train::TrainConfig cfg = m.train_base;
      cfg.method = train::Method::MsconWeighted;
      cfg.epochs = m.epoch_grid[gi];
      cfg.seed = derive_seed(seed, "train-epochs", gi);
      std::size_t dim = 0;
      auto emb = method_embeddings(ds, cfg, &dim);
      for (std::size_t t = 0; t < num_tasks; ++t) {
        auto out = probe_task(emb, dim, ds, t, m.probe_base,
                              derive_seed(seed, "probe-epochs", gi * num_tasks + t));
        push(rows, "hparam-epochs", "mscon-weighted",
             static_cast<double>(m.epoch_grid[gi]), seed, ds.task(t).name, "top1",
             out.top1);
        push(rows, "hparam-epochs", "mscon-weighted",
             static_cast<double>(m.epoch_grid[gi]), seed, ds.task(t).name, "top1_std",
             out.top1_std);
      }
    }
  }
  return rows;
}

namespace {

ExperimentResult run_kind(const ExperimentManifest& m) {
  if (m.kind == "corruption-sweep") return run_corruption_sweep(m);
  if (m.kind == "indomain-table") return run_indomain_table(m);
  if (m.kind == "ood-eval") return run_ood_eval(m);
  if (m.kind == "hparam-sweep") return run_hparam_sweep(m);
  throw ContractViolation("run_manifest: unknown kind '" + m.kind + "'");
}

}  // namespace

ExperimentResult run_manifest(const ExperimentManifest& m, std::size_t threads) {
  ExperimentResult rows;
  if (threads <= 1 || m.seeds.size() <= 1) {
    rows = run_kind(m);
  } else {
    std::vector<ExperimentResult> per_seed(m.seeds.size());
    std::vector<std::exception_ptr> errors(m.seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (std::size_t i = next.fetch_add(1); i < m.seeds.size(); i = next.fetch_add(1)) {
        try {
          ExperimentManifest single = m;
          single.seeds = {m.seeds[i]};
          per_seed[i] = run_kind(single);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, m.seeds.size()); ++t)
      pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    for (std::size_t i = 0; i < m.seeds.size(); ++i) {
      if (errors[i]) std::rethrow_exception(errors[i]);
      rows.insert(rows.end(), per_seed[i].begin(), per_seed[i].end());
    }
  }
  fs::create_directories(m.out_dir);
  write_results_csv(rows, (fs::path(m.out_dir) / (m.kind + ".csv")).string());
  return rows;
}

void write_results_csv(const ExperimentResult& rows, const std::string& path) {
  std::ofstream f(path);
  MSCON_CHECK(f.good(), "write_results_csv: cannot open " + path);
  f << "kind,method,rho,seed,task,metric,value\n";
  for (const auto& r : rows)
    f << r.kind << "," << r.method << "," << fmt_double(r.rho) << "," << r.seed << ","
      << r.task << "," << r.metric << "," << fmt_double(r.value) << "\n";
}

ExperimentResult read_results_csv(const std::string& path) {
  std::ifstream f(path);
  MSCON_CHECK(f.good(), "read_results_csv: cannot open " + path);
  ExperimentResult rows;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    ResultRow r;
    std::getline(ss, r.kind, ',');
    std::getline(ss, r.method, ',');
    std::getline(ss, cell, ',');
    r.rho = std::stod(cell);
    std::getline(ss, cell, ',');
    r.seed = std::stoull(cell);
    std::getline(ss, r.task, ',');
    std::getline(ss, r.metric, ',');
    std::getline(ss, cell, ',');
    r.value = std::stod(cell);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<std::string> report(const std::string& results_dir, const std::string& out_dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(results_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv" &&
        entry.path().filename().string().find("summary") == std::string::npos)
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  MSCON_CHECK(!files.empty(), "report: no results CSVs in " + results_dir);

  struct Key {
    std::string kind, method, task, metric;
    double rho;
    bool operator<(const Key& o) const {
      return std::tie(kind, method, rho, task, metric) <
             std::tie(o.kind, o.method, o.rho, o.task, o.metric);
    }
  };
  std::map<Key, std::vector<double>> cells;
  for (const auto& file : files)
    for (const auto& r : read_results_csv(file.string()))
      cells[{r.kind, r.method, r.task, r.metric, r.rho}].push_back(r.value);

  fs::create_directories(out_dir);
  std::map<std::string, std::ofstream> per_kind;
  std::ofstream summary(fs::path(out_dir) / "summary.csv");
  const std::string header = "kind,method,rho,task,metric,mean,std,n\n";
  summary << header;

  std::map<std::string, std::size_t> kind_max_n;
  for (const auto& [key, values] : cells)
    kind_max_n[key.kind] = std::max(kind_max_n[key.kind], values.size());

  std::vector<std::string> warnings;
  for (const auto& [key, values] : cells) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    const double sd = values.size() > 1
                          ? std::sqrt(var / static_cast<double>(values.size() - 1))
                          : 0.0;
    std::ostringstream row;
    row << key.kind << "," << key.method << "," << fmt_double(key.rho) << "," << key.task
        << "," << key.metric << "," << fmt_double(mean) << "," << fmt_double(sd) << ","
        << values.size() << "\n";
    summary << row.str();
    auto it = per_kind.find(key.kind);
    if (it == per_kind.end()) {
      it = per_kind.emplace(key.kind,
                            std::ofstream(fs::path(out_dir) / (key.kind + "_summary.csv")))
               .first;
      it->second << header;
    }
    it->second << row.str();
    if (values.size() < kind_max_n[key.kind])
      warnings.push_back("partial cell: " + key.kind + "/" + key.method + "/rho=" +
                         fmt_double(key.rho) + "/" + key.task + "/" + key.metric + " has n=" +
                         std::to_string(values.size()) + " < " +
                         std::to_string(kind_max_n[key.kind]));
  }
  return warnings;
}

}  // namespace mscon::expt
