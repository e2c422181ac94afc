#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "mscon/trainer.hpp"

namespace mscon::expt {

// One experiment family: which study to run, over which dataset, training
// settings, and grids. Parsed from a JSON manifest file.
struct ExperimentManifest {
  std::string kind = "corruption-sweep";
  synth::DatasetSpec dataset;
  train::TrainConfig train_base;
  train::ProbeConfig probe_base;
  std::vector<double> rho_grid{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::size_t corrupt_task = 1;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<double> tau_grid{0.05, 0.07, 0.1, 0.2, 0.5};
  std::vector<std::size_t> epoch_grid{25, 50, 100, 200};
  std::string out_dir = "results";
};

// Desk-scale defaults per experiment kind; the sweep kinds use a smaller
// dataset and fewer epochs than the generator default so a full grid stays
// within a minutes-scale single-core budget.
ExperimentManifest default_manifest(const std::string& kind);

ExperimentManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json manifest_to_json(const ExperimentManifest& m);
ExperimentManifest load_manifest(const std::string& path);

struct ResultRow {
  std::string kind;
  std::string method;
  double rho = 0.0;
  std::uint64_t seed = 0;
  std::string task;
  std::string metric;  // top1 | top1_std | sigma_sq | weight
  double value = 0.0;
};

using ExperimentResult = std::vector<ResultRow>;

ExperimentResult run_corruption_sweep(const ExperimentManifest& m);
ExperimentResult run_indomain_table(const ExperimentManifest& m);
ExperimentResult run_ood_eval(const ExperimentManifest& m);
ExperimentResult run_hparam_sweep(const ExperimentManifest& m);

// Dispatch on m.kind, write results CSV under m.out_dir, return rows.
// With threads > 1, seeds run on worker threads (each cell is self-contained);
// rows are concatenated in seed order so output is identical to a serial run.
ExperimentResult run_manifest(const ExperimentManifest& m, std::size_t threads = 1);

void write_results_csv(const ExperimentResult& rows, const std::string& path);
ExperimentResult read_results_csv(const std::string& path);

// Aggregate every results CSV found in `results_dir` into tidy summary files
// (mean, std, n over seeds per cell). Returns warnings for cells with fewer
// seeds than their group's maximum.
std::vector<std::string> report(const std::string& results_dir, const std::string& out_dir);

}  // namespace mscon::expt
