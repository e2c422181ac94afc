#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mscon/experiments.hpp"

using namespace mscon;
using namespace mscon::expt;

namespace {

namespace fs = std::filesystem;

// Shrunk manifest so a whole study runs in seconds.
ExperimentManifest tiny_manifest(const std::string& kind, const fs::path& out) {
  auto m = default_manifest(kind);
  m.dataset.num_samples = 240;
  m.train_base.epochs = 2;
  m.train_base.batch_size = 32;
  m.train_base.encoder.hidden_dims = {24, 24};
  m.train_base.encoder.embedding_dim = 12;
  m.train_base.encoder.head_hidden_dim = 20;
  m.train_base.encoder.projection_dim = 8;
  m.probe_base.probe_epochs = 5;
  m.probe_base.bootstrap_resamples = 100;
  m.rho_grid = {0.0, 1.0};
  m.seeds = {1, 2};
  m.tau_grid = {0.1, 0.5};
  m.epoch_grid = {1, 2};
  m.out_dir = out.string();
  return m;
}

std::set<std::string> methods_in(const ExperimentResult& rows) {
  std::set<std::string> out;
  for (const auto& r : rows) out.insert(r.method);
  return out;
}

}  // namespace

TEST_CASE("manifest JSON round trip") {
  auto m = default_manifest("corruption-sweep");
  m.seeds = {4, 9};
  m.rho_grid = {0.0, 0.3};
  m.train_base.temperature = 0.07;
  m.dataset.num_samples = 1234;
  auto j = manifest_to_json(m);
  auto back = manifest_from_json(j);
  CHECK(back.kind == m.kind);
  CHECK(back.seeds == m.seeds);
  CHECK(back.rho_grid == m.rho_grid);
  CHECK(back.train_base.temperature == m.train_base.temperature);
  CHECK(back.dataset.num_samples == 1234);
  CHECK(back.dataset.training_tasks.size() == m.dataset.training_tasks.size());
}

TEST_CASE("manifest defaults: sweeps are shrunk relative to the generator default") {
  auto sweep = default_manifest("corruption-sweep");
  CHECK(sweep.dataset.num_samples < 6000);
  CHECK(sweep.train_base.epochs < 200);
  CHECK(sweep.seeds.size() == 5);
  auto table = default_manifest("indomain-table");
  CHECK(table.seeds.size() == 3);
  CHECK_THROWS_AS(default_manifest("bogus"), ContractViolation);
}

TEST_CASE("results CSV round trip") {
  ExperimentResult rows = {
      {"corruption", "mscon-weighted", 0.2, 3, "task_b", "top1", 0.8125},
      {"corruption", "mscon-weighted", 0.2, 3, "task_b", "sigma_sq", 1.0 / 3.0},
      {"table", "xent-single:task_a", 0.0, 1, "task_a", "top1_std", 0.01}};
  auto path = fs::temp_directory_path() / "mscon_test_results.csv";
  write_results_csv(rows, path.string());
  auto back = read_results_csv(path.string());
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].kind == rows[i].kind);
    CHECK(back[i].method == rows[i].method);
    CHECK(back[i].rho == rows[i].rho);  // exact round trip, including 1/3
    CHECK(back[i].seed == rows[i].seed);
    CHECK(back[i].task == rows[i].task);
    CHECK(back[i].metric == rows[i].metric);
    CHECK(back[i].value == rows[i].value);
  }
  fs::remove(path);
}

TEST_CASE("corruption sweep: schema, determinism, guarded hold-out") {
  auto out = fs::temp_directory_path() / "mscon_test_sweep";
  fs::remove_all(out);
  auto m = tiny_manifest("corruption-sweep", out);
  auto rows = run_manifest(m);
  REQUIRE(!rows.empty());
  CHECK(fs::exists(out / "corruption-sweep.csv"));

  auto methods = methods_in(rows);
  CHECK(methods.count("mscon-weighted") == 1);
  CHECK(methods.count("mscon-unweighted") == 1);

  // Every (method, rho, seed) cell carries a probe metric for the corrupted
  // task and for the held-out task, plus per-task variance diagnostics.
  std::set<std::string> metrics;
  std::set<std::string> tasks;
  for (const auto& r : rows) {
    metrics.insert(r.metric);
    tasks.insert(r.task);
    CHECK((r.rho == 0.0 || r.rho == 1.0));
    CHECK((r.seed == 1 || r.seed == 2));
  }
  CHECK(metrics.count("top1") == 1);
  CHECK(metrics.count("top1_std") == 1);
  CHECK(metrics.count("sigma_sq") == 1);
  CHECK(metrics.count("weight") == 1);
  CHECK(tasks.count("task_b") == 1);    // corrupted task probe
  CHECK(tasks.count("holdout") == 1);   // transfer probe

  // Sigma rows exist for every training task under the weighted method.
  std::size_t weighted_sigma = 0;
  for (const auto& r : rows)
    if (r.method == "mscon-weighted" && r.metric == "sigma_sq") ++weighted_sigma;
  CHECK(weighted_sigma == 2 * 2 * 3);  // rho x seed x training tasks

  // Byte-identical on rerun.
  auto out2 = fs::temp_directory_path() / "mscon_test_sweep2";
  fs::remove_all(out2);
  auto m2 = m;
  m2.out_dir = out2.string();
  auto rows2 = run_manifest(m2);
  REQUIRE(rows2.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows2[i].value == rows[i].value);
    CHECK(rows2[i].method == rows[i].method);
  }
  std::ifstream a(out / "corruption-sweep.csv"), b(out2 / "corruption-sweep.csv");
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  fs::remove_all(out);
  fs::remove_all(out2);
}

TEST_CASE("in-domain table covers every method and training task") {
  auto out = fs::temp_directory_path() / "mscon_test_table";
  fs::remove_all(out);
  auto m = tiny_manifest("indomain-table", out);
  m.seeds = {1};
  auto rows = run_manifest(m);
  auto methods = methods_in(rows);
  CHECK(methods.count("mscon") == 1);
  CHECK(methods.count("simclr") == 1);
  CHECK(methods.count("xent-multitask") == 1);
  for (const char* name : {"task_a", "task_b", "task_c"}) {
    CHECK(methods.count(std::string("xent-single:") + name) == 1);
    CHECK(methods.count(std::string("supcon-single:") + name) == 1);
  }
  // Every method reports top1 on every training task.
  for (const auto& method : methods) {
    std::set<std::string> tasks;
    for (const auto& r : rows)
      if (r.method == method && r.metric == "top1") tasks.insert(r.task);
    CAPTURE(method);
    CHECK(tasks == std::set<std::string>({"task_a", "task_b", "task_c"}));
  }
  fs::remove_all(out);
}

TEST_CASE("hold-out transfer eval reports both methods on the held-out task") {
  auto out = fs::temp_directory_path() / "mscon_test_ood";
  fs::remove_all(out);
  auto m = tiny_manifest("ood-eval", out);
  m.seeds = {1};
  auto rows = run_manifest(m);
  auto methods = methods_in(rows);
  CHECK(methods == std::set<std::string>({"mscon-weighted", "xent-multitask"}));
  for (const auto& r : rows) {
    CHECK(r.task == "holdout");
    CHECK(r.kind == "ood");
    if (r.metric == "top1") {
      CHECK(r.value >= 0.0);
      CHECK(r.value <= 1.0);
    }
  }
  fs::remove_all(out);
}

TEST_CASE("hyper-parameter sweep writes one row group per grid point") {
  auto out = fs::temp_directory_path() / "mscon_test_hparam";
  fs::remove_all(out);
  auto m = tiny_manifest("hparam-sweep", out);
  m.seeds = {1};
  auto rows = run_manifest(m);
  std::set<double> taus, epochs;
  for (const auto& r : rows) {
    if (r.kind == "hparam-tau") taus.insert(r.rho);
    if (r.kind == "hparam-epochs") epochs.insert(r.rho);
  }
  CHECK(taus == std::set<double>({0.1, 0.5}));
  CHECK(epochs == std::set<double>({1.0, 2.0}));
  fs::remove_all(out);
}

TEST_CASE("threaded run matches serial output byte for byte") {
  auto out_serial = fs::temp_directory_path() / "mscon_test_threads_a";
  auto out_par = fs::temp_directory_path() / "mscon_test_threads_b";
  fs::remove_all(out_serial);
  fs::remove_all(out_par);
  auto m = tiny_manifest("ood-eval", out_serial);
  auto serial = run_manifest(m, 1);
  auto m2 = m;
  m2.out_dir = out_par.string();
  auto parallel = run_manifest(m2, 2);
  REQUIRE(parallel.size() == serial.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(parallel[i].seed == serial[i].seed);
    CHECK(parallel[i].value == serial[i].value);
  }
  std::ifstream a(out_serial / "ood-eval.csv"), b(out_par / "ood-eval.csv");
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(!sa.empty());
  CHECK(sa == sb);
  fs::remove_all(out_serial);
  fs::remove_all(out_par);
}

TEST_CASE("report aggregates seed cells into mean/std/n") {
  auto dir = fs::temp_directory_path() / "mscon_test_report";
  auto out = dir / "summary";
  fs::remove_all(dir);
  fs::create_directories(dir);
  ExperimentResult rows = {
      {"corruption", "mscon-weighted", 0.0, 1, "task_b", "top1", 0.8},
      {"corruption", "mscon-weighted", 0.0, 2, "task_b", "top1", 0.9},
      {"corruption", "mscon-weighted", 0.0, 3, "task_b", "top1", 1.0},
      {"corruption", "mscon-unweighted", 0.0, 1, "task_b", "top1", 0.7},
  };
  write_results_csv(rows, (dir / "corruption.csv").string());
  auto warnings = report(dir.string(), out.string());
  REQUIRE(fs::exists(out / "summary.csv"));
  REQUIRE(fs::exists(out / "corruption_summary.csv"));
  std::ifstream in(out / "summary.csv");
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "kind,method,rho,task,metric,mean,std,n");
  bool found = false;
  while (std::getline(in, line)) {
    if (line.rfind("corruption,mscon-weighted,", 0) != 0) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 8);
    CHECK(cells[3] == "task_b");
    CHECK(cells[4] == "top1");
    CHECK(std::stod(cells[5]) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(std::stod(cells[6]) == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(cells[7] == "3");
    found = true;
  }
  CHECK(found);
  // The unweighted cell has fewer seeds than its group's maximum.
  CHECK(!warnings.empty());
  fs::remove_all(dir);
}
