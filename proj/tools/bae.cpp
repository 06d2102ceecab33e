// bae: command-line front end for experiment grids, the K-finite solver and
// policy verification.
//
// Exit codes: 0 success, 1 validation error, 2 verification failure,
// 3 runtime failure.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "bae/experiment.hpp"
#include "bae/problem.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kVerification = 2;
constexpr int kRuntime = 3;

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  bae::require(static_cast<bool>(in), bae::ErrorKind::invalid_argument, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct GridFlags {
  std::string config;
  std::string seeds;
  bool seeds_given = false;
  int jobs = 1;
  std::string out;
  bool paper_scale = false;
  int epochs = 0;
  bool print_config = false;
  std::string data_dir;
};

void add_grid_flags(CLI::App* cmd, GridFlags& f) {
  cmd->add_option("--config", f.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seeds", f.seeds, "Seed list, e.g. 0..4 or 0,3,7");
  cmd->add_option("--jobs", f.jobs, "Parallel runs")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_flag("--paper-scale", f.paper_scale, "Use seeds 0..19 unless --seeds is given");
  cmd->add_option("--epochs", f.epochs, "Override the epoch count of every plan")->check(CLI::PositiveNumber);
  cmd->add_flag("--print-config", f.print_config, "Print the resolved config and exit");
}

int run_grid(const GridFlags& f, bae::DatasetKind kind) {
  bae::ExperimentConfig cfg = f.config.empty()
                                  ? (kind == bae::DatasetKind::simulated ? bae::ExperimentConfig::simulated_defaults()
                                                                         : bae::ExperimentConfig::image_defaults())
                                  : bae::load_config(f.config);
  bae::require(cfg.kind == kind, bae::ErrorKind::invalid_argument,
               "config dataset kind does not match this subcommand");
  if (f.paper_scale) cfg.seeds = bae::parse_seed_list("0..19");
  if (f.seeds_given) cfg.seeds = bae::parse_seed_list(f.seeds);
  if (!f.out.empty()) cfg.output = f.out;
  if (!f.data_dir.empty()) cfg.images.data_dir = f.data_dir;
  if (f.epochs > 0) {
    cfg.training.epochs = f.epochs;
    for (auto& [_, p] : cfg.per_algorithm) p.epochs = f.epochs;
  }
  cfg.validate();
  if (f.print_config) {
    std::cout << bae::config_to_json(cfg);
    return kOk;
  }

  const std::size_t total = bae::expand(cfg).size();
  std::size_t done = 0;
  bae::RunnerOptions opts;
  opts.jobs = f.jobs;
  opts.on_run = [&](const bae::RunSpec& r, const bae::RunRow& row) {
    ++done;
    std::fprintf(stderr, "[%zu/%zu] %s %s seed %llu: best %s %.6g at epoch %d%s\n", done, total, r.grid.c_str(),
                 r.algorithm.c_str(), static_cast<unsigned long long>(r.seed), row.metric.c_str(), row.best,
                 row.best_epoch, row.failed ? " (failed)" : "");
  };
  const auto res = bae::run_experiment(cfg, opts);
  std::cout << bae::tables_markdown(res.summary);
  std::cout << "wrote " << cfg.output << "/summary.csv\n";
  return kOk;
}

int cmd_solve(const std::string& path, int k, int restarts, long long seed, bool oracle, bool as_json) {
  bae::SolveInstance inst = bae::solve_instance_from_json(read_text(path));
  if (k > 0) inst.options.k = k;
  if (restarts > 0) inst.options.restarts = restarts;
  if (seed >= 0) inst.seed = static_cast<std::uint64_t>(seed);
  inst.options.validate();
  const bae::UtilityFunction w = inst.utility.build();
  bae::Rng rng(inst.seed);
  const bae::PartitionPolicy p = bae::solve(w, inst.sample, inst.options, rng);

  if (as_json) {
    std::cout << bae::partition_to_json(p);
  } else {
    std::printf("objective %.17g\n", p.objective);
    std::vector<std::size_t> sizes(p.actions.size(), 0);
    for (int l : p.labels) ++sizes[static_cast<std::size_t>(l)];
    for (std::size_t c = 0; c < p.actions.size(); ++c) {
      std::printf("cell %zu size %zu action", c, sizes[c]);
      for (double v : p.actions.point(c)) std::printf(" %.10g", v);
      std::printf("\n");
    }
    if (p.k_reduced) std::printf("note: K reduced to the sample size\n");
    if (!p.bregman_consistent) std::printf("note: partition differs from the Bregman cells of its actions\n");
  }
  if (!oracle) return kOk;
  bae::require(inst.sample.rows() <= 10 && inst.options.k <= 4, bae::ErrorKind::invalid_argument,
               "--oracle needs n <= 10 and k <= 4");
  const auto best = bae::brute_force_oracle(w, inst.sample, inst.options.k);
  const double gap = best.objective - p.objective;
  std::printf("oracle %.17g gap %.3g %s\n", best.objective, gap, std::abs(gap) <= 1e-9 ? "match" : "MISMATCH");
  return std::abs(gap) <= 1e-9 ? kOk : kVerification;
}

int cmd_verify(const std::string& path, bool as_json) {
  const auto out = bae::run_verify(bae::verify_instance_from_json(read_text(path)));
  if (as_json) {
    std::cout << bae::verify_outcome_to_json(out);
  } else {
    std::printf("policy %s\n", out.policy.c_str());
    for (const auto& c : out.report.checks)
      std::printf("  %-20s %s  worst %.3g  (%zu evaluated)\n", c.name.c_str(), c.ok ? "ok  " : "FAIL", c.worst_value,
                  c.evaluated);
    if (out.sphere)
      std::printf("  %-20s %s  max %.3g at r=%.4g\n", "sphere_condition", out.sphere->ok ? "ok  " : "FAIL",
                  out.sphere->max_value, out.sphere->argmax_radius);
    if (out.policy == "sphere") std::printf("beta %.10g\n", out.beta);
    std::printf("E[W(policy)] %.6g (se %.3g)  E[W(X)] %.6g (se %.3g)  W(mean) %.6g\n",
                out.report.expected_w_policy, out.report.se_policy, out.report.expected_w_data, out.report.se_data,
                out.report.w_of_mean);
    std::printf("%s\n", out.ok ? "PASS" : "FAIL");
  }
  return out.ok ? kOk : kVerification;
}

int cmd_report(const std::string& dir) {
  const auto res = bae::report(dir);
  std::cout << bae::tables_markdown(res.summary);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benign autoencoder toolkit"};
  app.require_subcommand(1);

  GridFlags sim, img;
  auto* simulate = app.add_subcommand("simulate", "Run a simulated-regression experiment grid");
  add_grid_flags(simulate, sim);
  auto* images = app.add_subcommand("images", "Run an image-classification experiment grid");
  add_grid_flags(images, img);
  images->add_option("--data-dir", img.data_dir, "Directory holding <name>/<idx files> (else $BAE_DATA_DIR, data)");

  std::string instance;
  int k = 0, restarts = 0;
  long long seed = -1;
  bool oracle = false, solve_json = false;
  auto* solve = app.add_subcommand("solve", "Solve a K-finite autoencoder instance");
  solve->add_option("instance", instance, "Instance file (JSON)")->required()->check(CLI::ExistingFile);
  solve->add_option("--k", k, "Number of actions")->check(CLI::PositiveNumber);
  solve->add_option("--restarts", restarts, "Restarts")->check(CLI::PositiveNumber);
  solve->add_option("--seed", seed, "Seed")->check(CLI::NonNegativeNumber);
  solve->add_flag("--oracle", oracle, "Cross-check against exhaustive search (n <= 10)");
  solve->add_flag("--json", solve_json, "Print JSON");

  std::string verify_path;
  bool verify_json = false;
  auto* verify = app.add_subcommand("verify", "Check a policy against the optimality conditions");
  verify->add_option("spec", verify_path, "Verification file (JSON)")->required()->check(CLI::ExistingFile);
  verify->add_flag("--json", verify_json, "Print JSON");

  std::string run_dir;
  auto* report = app.add_subcommand("report", "Re-aggregate a run directory into summary tables");
  report->add_option("dir", run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  sim.seeds_given = simulate->count("--seeds") > 0;
  img.seeds_given = images->count("--seeds") > 0;
  try {
    if (*simulate) return run_grid(sim, bae::DatasetKind::simulated);
    if (*images) return run_grid(img, bae::DatasetKind::images);
    if (*solve) return cmd_solve(instance, k, restarts, seed, oracle, solve_json);
    if (*verify) return cmd_verify(verify_path, verify_json);
    if (*report) return cmd_report(run_dir);
  } catch (const bae::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    const bool validation =
        e.kind() == bae::ErrorKind::invalid_argument || e.kind() == bae::ErrorKind::shape;
    return validation ? kValidation : kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kValidation;
}
