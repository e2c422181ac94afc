#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "mscon/experiments.hpp"
#include "mscon/jsonio.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f.good()) throw mscon::ContractViolation("cannot open config file " + path);
  return json::parse(f);
}

mscon::expt::ExperimentManifest sweep_manifest(const std::string& kind,
                                               const std::string& config_path,
                                               const std::string& out_dir,
                                               long long seed_override) {
  mscon::expt::ExperimentManifest m;
  if (!config_path.empty()) {
    json j = load_json(config_path);
    j["kind"] = kind;
    m = mscon::expt::manifest_from_json(j);
  } else {
    m = mscon::expt::default_manifest(kind);
  }
  if (!out_dir.empty()) m.out_dir = out_dir;
  if (seed_override >= 0) m.seeds = {static_cast<std::uint64_t>(seed_override)};
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-similarity contrastive learning lab"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, model_dir, results_dir;
  long long seed_override = -1;
  std::size_t threads = 1;
  std::size_t task_index = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config/manifest file");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed_override, "override the seed list with one seed");
    cmd->add_option("--threads", threads, "worker threads for independent cells");
  };

  auto* gen = app.add_subcommand("generate-data", "generate a synthetic dataset directory");
  add_common(gen);

  auto* train_cmd = app.add_subcommand("train", "train one method on a dataset directory");
  add_common(train_cmd);
  train_cmd->add_option("--data", data_dir, "dataset directory")->required();
  std::string method_name = "mscon-weighted";
  train_cmd->add_option("--method", method_name, "training method");
  train_cmd->add_option("--task", task_index, "task index for single-task methods");

  auto* probe_cmd = app.add_subcommand("probe", "linear-probe a checkpoint on one task");
  add_common(probe_cmd);
  probe_cmd->add_option("--data", data_dir, "dataset directory")->required();
  probe_cmd->add_option("--model", model_dir, "checkpoint directory")->required();
  probe_cmd->add_option("--task", task_index, "task index to probe");

  auto* sweep_corr = app.add_subcommand("sweep-corruption", "corruption sweep");
  add_common(sweep_corr);
  auto* table_in = app.add_subcommand("table-indomain", "in-domain method x task table");
  add_common(table_in);
  auto* eval_ood = app.add_subcommand("eval-ood", "held-out task evaluation");
  add_common(eval_ood);
  auto* sweep_hp = app.add_subcommand("sweep-hparams", "temperature and epoch sweeps");
  add_common(sweep_hp);

  auto* report_cmd = app.add_subcommand("report", "aggregate result CSVs into summaries");
  add_common(report_cmd);
  report_cmd->add_option("--results", results_dir, "directory of result CSVs")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      mscon::synth::DatasetSpec spec = mscon::synth::default_dataset_spec();
      if (!config_path.empty()) {
        json j = load_json(config_path);
        spec = mscon::synth::dataset_spec_from_json(j.contains("dataset") ? j["dataset"] : j);
      }
      if (seed_override >= 0) spec.seed = static_cast<std::uint64_t>(seed_override);
      if (out_dir.empty()) out_dir = "dataset";
      auto ds = mscon::synth::generate_dataset(spec);
      mscon::synth::save_dataset(ds, out_dir);
      std::cout << "wrote dataset (" << ds.num_samples() << " x " << ds.input_dim()
                << ") to " << out_dir << "\n";
    } else if (train_cmd->parsed()) {
      auto ds = mscon::synth::load_dataset(data_dir);
      mscon::train::TrainConfig cfg;
      if (!config_path.empty()) {
        json j = load_json(config_path);
        auto m = mscon::expt::manifest_from_json(
            json{{"kind", "indomain-table"}, {"train", j.contains("train") ? j["train"] : j}});
        cfg = m.train_base;
      }
      cfg.method = mscon::train::method_from_name(method_name);
      cfg.task_index = task_index;
      if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
      if (out_dir.empty()) out_dir = "checkpoint";
      std::vector<std::string> task_names;
      if (mscon::train::is_contrastive(cfg.method)) {
        auto result = mscon::train::train_contrastive(ds, cfg);
        mscon::net::save_checkpoint(result.params, out_dir);
        for (auto t : result.tasks) task_names.push_back(ds.task(t).name);
        if (task_names.empty()) task_names.push_back("self");
        mscon::train::write_train_log_csv(result.log, task_names,
                                          (fs::path(out_dir) / "train_log.csv").string());
      } else {
        auto result = mscon::train::train_xent(ds, cfg);
        // checkpoints carry the encoder; heads are filler so the flat layout
        // round-trips through load_checkpoint
        mscon::net::EncoderConfig shell_cfg = result.model.config;
        shell_cfg.num_tasks = 1;
        mscon::net::ModelParams shell = mscon::net::init_params(shell_cfg);
        shell.encoder = result.model.encoder;
        mscon::net::save_checkpoint(shell, out_dir);
        for (auto t : result.model.tasks) task_names.push_back(ds.task(t).name);
        mscon::train::write_train_log_csv(result.log, task_names,
                                          (fs::path(out_dir) / "train_log.csv").string());
        std::cout << "best validation accuracy " << result.best_val_accuracy << "\n";
      }
      std::cout << "wrote checkpoint to " << out_dir << "\n";
    } else if (probe_cmd->parsed()) {
      auto ds = mscon::synth::load_dataset(data_dir);
      auto params = mscon::net::load_checkpoint(model_dir);
      auto emb = mscon::train::extract_embeddings(params, ds.inputs, ds.num_samples());
      mscon::train::ProbeConfig cfg;
      if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
      auto res = mscon::train::linear_probe(
          emb, params.config.embedding_dim,
          ds.label_column(task_index, mscon::synth::LabelUse::Evaluation),
          ds.num_classes(task_index), ds.split, cfg);
      std::cout << "task " << ds.task(task_index).name << " top1 " << res.test_accuracy
                << " std " << res.accuracy_std << "\n";
    } else if (report_cmd->parsed()) {
      if (out_dir.empty()) out_dir = results_dir;
      auto warnings = mscon::expt::report(results_dir, out_dir);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "wrote summaries to " << out_dir << "\n";
    } else {
      std::string kind;
      if (sweep_corr->parsed()) kind = "corruption-sweep";
      if (table_in->parsed()) kind = "indomain-table";
      if (eval_ood->parsed()) kind = "ood-eval";
      if (sweep_hp->parsed()) kind = "hparam-sweep";
      auto m = sweep_manifest(kind, config_path, out_dir, seed_override);
      auto rows = mscon::expt::run_manifest(m, threads);
      std::cout << "wrote " << rows.size() << " result rows to " << m.out_dir << "/"
                << kind << ".csv\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
