#include "mscon/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mscon/csvfmt.hpp"
#include "mscon/optim.hpp"

namespace mscon::train {

std::string method_name(Method m) {
  switch (m) {
    case Method::MsconWeighted: return "mscon-weighted";
    case Method::MsconUnweighted: return "mscon-unweighted";
    case Method::SupconSingle: return "supcon-single";
    case Method::Simclr: return "simclr";
    case Method::XentSingle: return "xent-single";
    case Method::XentMultitask: return "xent-multitask";
  }
  throw ContractViolation("method_name: unknown method");
}

Method method_from_name(const std::string& name) {
  if (name == "mscon-weighted") return Method::MsconWeighted;
  if (name == "mscon-unweighted") return Method::MsconUnweighted;
  if (name == "supcon-single") return Method::SupconSingle;
  if (name == "simclr") return Method::Simclr;
  if (name == "xent-single") return Method::XentSingle;
  if (name == "xent-multitask") return Method::XentMultitask;
  throw ContractViolation("unknown method '" + name + "'");
}

bool is_contrastive(Method m) {
  return m == Method::MsconWeighted || m == Method::MsconUnweighted ||
         m == Method::SupconSingle || m == Method::Simclr;
}

namespace {

std::vector<std::size_t> batch_starts(std::size_t n, std::size_t batch) {
  // last incomplete batch dropped
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + batch <= n; s += batch) starts.push_back(s);
  return starts;
}

void check_train_cfg(const TrainConfig& cfg) {
  MSCON_CHECK(cfg.epochs >= 1 && cfg.batch_size >= 2, "train: epochs >= 1, batch >= 2");
  MSCON_CHECK(cfg.lr > 0.0 && cfg.momentum >= 0.0 && cfg.momentum < 1.0,
              "train: invalid optimizer settings");
  MSCON_CHECK(cfg.temperature > 0.0, "train: temperature must be positive");
  MSCON_CHECK(cfg.jitter_sigma >= 0.0, "train: jitter_sigma must be >= 0");
}

}  // namespace

TrainResult train_contrastive(const synth::MultiSimDataset& ds, TrainConfig cfg) {
  MSCON_CHECK(is_contrastive(cfg.method), "train_contrastive: not a contrastive method");
  check_train_cfg(cfg);

  std::vector<std::size_t> tasks;
  if (cfg.method == Method::MsconWeighted || cfg.method == Method::MsconUnweighted) {
    tasks.resize(ds.num_training_tasks());
    std::iota(tasks.begin(), tasks.end(), 0);
  } else if (cfg.method == Method::SupconSingle) {
    MSCON_CHECK(cfg.task_index < ds.num_training_tasks(),
                "train_contrastive: task index out of range");
    tasks = {cfg.task_index};
  }
  const bool weighted = cfg.method == Method::MsconWeighted;
  const std::size_t num_heads = cfg.method == Method::Simclr ? 1 : tasks.size();

  net::EncoderConfig enc_cfg = cfg.encoder;
  enc_cfg.input_dim = ds.input_dim();
  enc_cfg.num_tasks = num_heads;
  enc_cfg.seed = derive_seed(cfg.seed, "init");
  net::ModelParams params = net::init_params(enc_cfg);

  ad::SgdMomentum opt(cfg.lr, cfg.momentum);
  const std::size_t dim = ds.input_dim();
  const std::size_t n_views = 2 * cfg.batch_size;

  std::vector<std::size_t> order = ds.split.train;
  const auto starts = batch_starts(order.size(), cfg.batch_size);
  MSCON_CHECK(!starts.empty(), "train_contrastive: training split smaller than one batch");

  loss::LossConfig loss_cfg{cfg.temperature, loss::Reduction::MeanOverAnchors};
  std::vector<StepLog> log;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    Rng aug_rng(derive_seed(cfg.seed, "augment", epoch));

    for (std::size_t start : starts) {
      std::vector<double> x(n_views * dim);
      std::vector<int> source(n_views);
      std::vector<std::vector<int>> view_labels(tasks.size(), std::vector<int>(n_views));
      for (std::size_t k = 0; k < cfg.batch_size; ++k) {
        const std::size_t idx = order[start + k];
        std::vector<double> row(ds.inputs.begin() + static_cast<std::ptrdiff_t>(idx * dim),
                                ds.inputs.begin() + static_cast<std::ptrdiff_t>((idx + 1) * dim));
        auto views = synth::augment_pair(row, cfg.jitter_sigma, aug_rng);
        for (int v = 0; v < 2; ++v) {
          std::copy(views[static_cast<std::size_t>(v)].begin(),
                    views[static_cast<std::size_t>(v)].end(),
                    x.begin() + static_cast<std::ptrdiff_t>((2 * k + static_cast<std::size_t>(v)) * dim));
          source[2 * k + static_cast<std::size_t>(v)] = static_cast<int>(k);
        }
        for (std::size_t t = 0; t < tasks.size(); ++t) {
          const int y = ds.label_column(tasks[t], synth::LabelUse::Training)[idx];
          view_labels[t][2 * k] = y;
          view_labels[t][2 * k + 1] = y;
        }
      }

      ad::Tape tape;
      net::register_params(tape, params);
      ad::TensorPtr X = tape.leaf({n_views, dim}, std::move(x));
      ad::TensorPtr H = net::encode(tape, params, X);

      std::vector<ad::TensorPtr> task_losses;
      if (cfg.method == Method::Simclr) {
        ad::TensorPtr V = net::project(tape, params, H, 0);
        task_losses.push_back(loss::simclr_loss(tape, V, source, loss_cfg));
      } else {
        for (std::size_t t = 0; t < tasks.size(); ++t) {
          ad::TensorPtr V = net::project(tape, params, H, t);
          task_losses.push_back(loss::mscon_condition_loss(
              tape, V, loss::build_positive_mask(view_labels[t]), loss_cfg));
        }
      }

      loss::LossReport report;
      ad::TensorPtr total = loss::mscon_total(tape, task_losses, params.log_var, weighted, &report);
      if (!std::isfinite(total->values[0]))
        throw TrainingDivergence("train_contrastive: non-finite loss at step " +
                                 std::to_string(step));
      tape.backward(total);

      for (std::size_t l = 0; l < params.encoder.size(); ++l) {
        opt.step("enc." + std::to_string(l) + ".W", params.encoder[l].W);
        opt.step("enc." + std::to_string(l) + ".b", params.encoder[l].b);
      }
      for (std::size_t c = 0; c < params.heads.size(); ++c) {
        const std::string p = "head." + std::to_string(c) + ".";
        opt.step(p + "hidden.W", params.heads[c].hidden.W);
        opt.step(p + "hidden.b", params.heads[c].hidden.b);
        opt.step(p + "out.W", params.heads[c].out.W);
        opt.step(p + "out.b", params.heads[c].out.b);
      }
      if (weighted)
        for (std::size_t c = 0; c < params.log_var.size(); ++c)
          opt.step("log_var." + std::to_string(c), params.log_var[c]);

      log.push_back({step, epoch, std::move(report)});
      ++step;
    }
  }

  TrainResult result;
  result.params = std::move(params);
  result.log = std::move(log);
  result.tasks = cfg.method == Method::Simclr ? std::vector<std::size_t>{} : tasks;
  return result;
}

namespace {

std::vector<double> embed_rows(const std::vector<net::DenseLayer>& layers,
                               const std::vector<double>& inputs, std::size_t num_rows,
                               std::size_t dim) {
  MSCON_CHECK(inputs.size() == num_rows * dim, "extract_embeddings: input size mismatch");
  ad::Tape tape;
  for (const auto& l : layers) {
    tape.leaf(l.W);
    tape.leaf(l.b);
  }
  ad::TensorPtr X = tape.leaf({num_rows, dim}, inputs);
  ad::TensorPtr H = net::forward_layers(tape, layers, X, true);
  return H->values;
}

double eval_xent_accuracy(const XentModel& model, const synth::MultiSimDataset& ds,
                          const std::vector<std::size_t>& indices) {
  const std::size_t dim = ds.input_dim();
  std::vector<double> x(indices.size() * dim);
  for (std::size_t k = 0; k < indices.size(); ++k)
    std::copy(ds.inputs.begin() + static_cast<std::ptrdiff_t>(indices[k] * dim),
              ds.inputs.begin() + static_cast<std::ptrdiff_t>((indices[k] + 1) * dim),
              x.begin() + static_cast<std::ptrdiff_t>(k * dim));
  ad::Tape tape;
  for (const auto& l : model.encoder) {
    tape.leaf(l.W);
    tape.leaf(l.b);
  }
  for (const auto& l : model.classifiers) {
    tape.leaf(l.W);
    tape.leaf(l.b);
  }
  ad::TensorPtr X = tape.leaf({indices.size(), dim}, std::move(x));
  ad::TensorPtr H = net::forward_layers(tape, model.encoder, X, true);
  double acc_sum = 0.0;
  for (std::size_t t = 0; t < model.tasks.size(); ++t) {
    ad::TensorPtr logits =
        tape.add_rowvec(tape.matmul(H, model.classifiers[t].W), model.classifiers[t].b);
    const auto& col = ds.label_column(model.tasks[t], synth::LabelUse::Evaluation);
    const std::size_t k = logits->shape[1];
    std::size_t hits = 0;
    for (std::size_t i = 0; i < indices.size(); ++i) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (logits->at(i, j) > logits->at(i, arg)) arg = j;
      if (static_cast<int>(arg) == col[indices[i]]) ++hits;
    }
    acc_sum += static_cast<double>(hits) / static_cast<double>(indices.size());
  }
  return acc_sum / static_cast<double>(model.tasks.size());
}

XentModel clone_xent(const XentModel& model) {
  XentModel copy;
  copy.config = model.config;
  copy.tasks = model.tasks;
  auto dup = [](const net::DenseLayer& l) {
    auto w = std::make_shared<ad::Tensor>(*l.W);
    auto b = std::make_shared<ad::Tensor>(*l.b);
    w->tape_id = b->tape_id = -1;
    w->grad.clear();
    b->grad.clear();
    return net::DenseLayer{w, b};
  };
  for (const auto& l : model.encoder) copy.encoder.push_back(dup(l));
  for (const auto& l : model.classifiers) copy.classifiers.push_back(dup(l));
  return copy;
}

}  // namespace

XentResult train_xent(const synth::MultiSimDataset& ds, TrainConfig cfg) {
  MSCON_CHECK(!is_contrastive(cfg.method), "train_xent: not a cross-entropy method");
  check_train_cfg(cfg);
  MSCON_CHECK(cfg.xent_lr > 0.0, "train_xent: xent_lr must be positive");

  std::vector<std::size_t> tasks;
  if (cfg.method == Method::XentSingle) {
    MSCON_CHECK(cfg.task_index < ds.num_training_tasks(), "train_xent: task index out of range");
    tasks = {cfg.task_index};
  } else {
    tasks.resize(ds.num_training_tasks());
    std::iota(tasks.begin(), tasks.end(), 0);
  }

  XentModel model;
  model.config = cfg.encoder;
  model.config.input_dim = ds.input_dim();
  model.config.num_tasks = tasks.size();
  model.config.seed = derive_seed(cfg.seed, "init");
  model.tasks = tasks;
  Rng init_rng(derive_seed(model.config.seed, "model-init"));
  std::size_t in = model.config.input_dim;
  for (auto h : model.config.hidden_dims) {
    model.encoder.push_back(net::init_dense(in, h, init_rng));
    in = h;
  }
  model.encoder.push_back(net::init_dense(in, model.config.embedding_dim, init_rng));
  for (std::size_t t : tasks)
    model.classifiers.push_back(net::init_dense(
        model.config.embedding_dim, static_cast<std::size_t>(ds.num_classes(t)), init_rng));

  ad::SgdMomentum opt(cfg.xent_lr, cfg.momentum);
  const std::size_t dim = ds.input_dim();
  std::vector<std::size_t> order = ds.split.train;
  const auto starts = batch_starts(order.size(), cfg.batch_size);
  MSCON_CHECK(!starts.empty(), "train_xent: training split smaller than one batch");

  std::vector<StepLog> log;
  XentModel best = clone_xent(model);
  double best_val = -1.0;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    for (std::size_t start : starts) {
      std::vector<double> x(cfg.batch_size * dim);
      std::vector<std::vector<int>> batch_labels(tasks.size(),
                                                 std::vector<int>(cfg.batch_size));
      for (std::size_t k = 0; k < cfg.batch_size; ++k) {
        const std::size_t idx = order[start + k];
        std::copy(ds.inputs.begin() + static_cast<std::ptrdiff_t>(idx * dim),
                  ds.inputs.begin() + static_cast<std::ptrdiff_t>((idx + 1) * dim),
                  x.begin() + static_cast<std::ptrdiff_t>(k * dim));
        for (std::size_t t = 0; t < tasks.size(); ++t)
          batch_labels[t][k] = ds.label_column(tasks[t], synth::LabelUse::Training)[idx];
      }

      ad::Tape tape;
      for (const auto& l : model.encoder) {
        tape.leaf(l.W);
        tape.leaf(l.b);
      }
      for (const auto& l : model.classifiers) {
        tape.leaf(l.W);
        tape.leaf(l.b);
      }
      ad::TensorPtr X = tape.leaf({cfg.batch_size, dim}, std::move(x));
      ad::TensorPtr H = net::forward_layers(tape, model.encoder, X, true);

      std::vector<ad::TensorPtr> task_losses;
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        ad::TensorPtr logits =
            tape.add_rowvec(tape.matmul(H, model.classifiers[t].W), model.classifiers[t].b);
        task_losses.push_back(loss::xent_loss(tape, logits, batch_labels[t]));
      }
      loss::LossReport report;
      ad::TensorPtr total = loss::mscon_total(tape, task_losses, {}, false, &report);
      if (!std::isfinite(total->values[0]))
        throw TrainingDivergence("train_xent: non-finite loss at step " + std::to_string(step));
      tape.backward(total);

      for (std::size_t l = 0; l < model.encoder.size(); ++l) {
        opt.step("enc." + std::to_string(l) + ".W", model.encoder[l].W);
        opt.step("enc." + std::to_string(l) + ".b", model.encoder[l].b);
      }
      for (std::size_t t = 0; t < model.classifiers.size(); ++t) {
        opt.step("cls." + std::to_string(t) + ".W", model.classifiers[t].W);
        opt.step("cls." + std::to_string(t) + ".b", model.classifiers[t].b);
      }

      log.push_back({step, epoch, std::move(report)});
      ++step;
    }

    const double val_acc = eval_xent_accuracy(model, ds, ds.split.val);
    if (val_acc > best_val) {
      best_val = val_acc;
      best = clone_xent(model);
    }
  }

  XentResult result;
  result.model = std::move(best);
  result.log = std::move(log);
  result.best_val_accuracy = best_val;
  return result;
}

std::vector<double> extract_embeddings(const net::ModelParams& params,
                                       const std::vector<double>& inputs,
                                       std::size_t num_rows) {
  return embed_rows(params.encoder, inputs, num_rows, params.config.input_dim);
}

std::vector<double> extract_embeddings(const XentModel& model,
                                       const std::vector<double>& inputs,
                                       std::size_t num_rows) {
  return embed_rows(model.encoder, inputs, num_rows, model.config.input_dim);
}

ProbeResult linear_probe(const std::vector<double>& embeddings, std::size_t embedding_dim,
                         const std::vector<int>& labels, int num_classes,
                         const synth::SplitIndices& split, const ProbeConfig& cfg) {
  MSCON_CHECK(cfg.probe_epochs >= 1 && cfg.probe_lr > 0.0 && cfg.batch_size >= 1,
              "linear_probe: invalid config");
  MSCON_CHECK(num_classes >= 2, "linear_probe: need at least two classes");
  MSCON_CHECK(!split.train.empty() && !split.test.empty(), "linear_probe: empty split");

  {
    const int first = labels.at(split.train[0]);
    bool multi = false;
    for (auto i : split.train)
      if (labels.at(i) != first) {
        multi = true;
        break;
      }
    if (!multi)
      throw DegenerateInput("linear_probe: training labels contain a single class");
  }

  const std::size_t k = static_cast<std::size_t>(num_classes);
  // zero init: the softmax objective in the weights alone is convex, no
  // symmetry breaking needed
  ad::TensorPtr W = ad::make_tensor({embedding_dim, k},
                                    std::vector<double>(embedding_dim * k, 0.0));
  ad::TensorPtr b = ad::make_tensor({k}, std::vector<double>(k, 0.0));
  ad::SgdMomentum opt(cfg.probe_lr, cfg.momentum);

  std::vector<std::size_t> order = split.train;
  for (std::size_t epoch = 0; epoch < cfg.probe_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "probe-shuffle", epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::size_t n = stop - start;
      std::vector<double> x(n * embedding_dim);
      std::vector<int> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = order[start + i];
        std::copy(embeddings.begin() + static_cast<std::ptrdiff_t>(idx * embedding_dim),
                  embeddings.begin() + static_cast<std::ptrdiff_t>((idx + 1) * embedding_dim),
                  x.begin() + static_cast<std::ptrdiff_t>(i * embedding_dim));
        y[i] = labels.at(idx);
      }
      ad::Tape tape;
      tape.leaf(W);
      tape.leaf(b);
      ad::TensorPtr X = tape.leaf({n, embedding_dim}, std::move(x));
      ad::TensorPtr logits = tape.add_rowvec(tape.matmul(X, W), b);
      ad::TensorPtr l = loss::xent_loss(tape, logits, y);
      tape.backward(l);
      opt.step("probe.W", W);
      opt.step("probe.b", b);
    }
  }

  ProbeResult result;
  result.correct_flags.reserve(split.test.size());
  std::size_t hits = 0;
  for (std::size_t idx : split.test) {
    std::size_t arg = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      double s = b->values[j];
      for (std::size_t d = 0; d < embedding_dim; ++d)
        s += embeddings[idx * embedding_dim + d] * W->values[d * k + j];
      if (s > best_score) {
        best_score = s;
        arg = j;
      }
    }
    const bool correct = static_cast<int>(arg) == labels.at(idx);
    result.correct_flags.push_back(correct ? 1 : 0);
    hits += correct ? 1 : 0;
  }
  result.test_accuracy = static_cast<double>(hits) / static_cast<double>(split.test.size());
  result.accuracy_std = bootstrap_std(result.correct_flags, cfg.bootstrap_resamples,
                                      derive_seed(cfg.seed, "bootstrap"));
  return result;
}

double top1_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  MSCON_CHECK(predictions.size() == labels.size(), "top1_accuracy: length mismatch");
  MSCON_CHECK(!predictions.empty(), "top1_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double bootstrap_std(const std::vector<std::uint8_t>& correct_flags, std::size_t resamples,
                     std::uint64_t seed) {
  MSCON_CHECK(!correct_flags.empty(), "bootstrap_std: empty input");
  MSCON_CHECK(resamples >= 2, "bootstrap_std: need at least two resamples");
  const std::size_t n = correct_flags.size();
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> accs(resamples);
  for (auto& acc : accs) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += correct_flags[pick(rng)];
    acc = static_cast<double>(hits) / static_cast<double>(n);
  }
  double mean = 0.0;
  for (double a : accs) mean += a;
  mean /= static_cast<double>(resamples);
  double var = 0.0;
  for (double a : accs) var += (a - mean) * (a - mean);
  var /= static_cast<double>(resamples - 1);
  return std::sqrt(var);
}

void write_train_log_csv(const std::vector<StepLog>& log,
                         const std::vector<std::string>& task_names,
                         const std::string& path) {
  std::ofstream f(path);
  MSCON_CHECK(f.good(), "write_train_log_csv: cannot open " + path);
  f << "step,epoch,task,loss,sigma_sq,weight,total\n";
  for (const auto& entry : log)
    for (std::size_t t = 0; t < entry.report.task_loss.size(); ++t) {
      const std::string name = t < task_names.size() ? task_names[t] : std::to_string(t);
      f << entry.step << "," << entry.epoch << "," << name << ","
        << fmt_double(entry.report.task_loss[t]) << ","
        << fmt_double(entry.report.sigma_sq[t]) << ","
        << fmt_double(entry.report.weight[t]) << "," << fmt_double(entry.report.total)
        << "\n";
    }
}

}  // namespace mscon::train
