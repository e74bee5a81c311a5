#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pno/commands.hpp"
#include "pno/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic neural operators on 1-D periodic grids"};
  app.require_subcommand(1);

  std::string config_path, dataset_dir, out_dir, kind;
  std::vector<std::string> checkpoints;
  bool force = false;
  int m_eval = 100;
  int trials = 10000, atoms = 5, dims = 3;
  std::uint64_t seed = 0;
  std::int64_t eval_seed = -1;

  auto* generate = app.add_subcommand("generate-data", "Generate a dataset");
  generate->add_option("--config", config_path, "Data config (JSON)")->required();
  generate->add_option("--out", out_dir, "Output directory")->required();
  generate->add_flag("--force", force, "Overwrite a non-empty directory");

  auto* train = app.add_subcommand("train", "Train one model");
  train->add_option("--config", config_path, "Train config (JSON)")->required();
  train->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  train->add_option("--out", out_dir, "Output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate checkpoints");
  evaluate->add_option("--checkpoint", checkpoints, "Checkpoint file (repeatable)")
      ->required();
  evaluate->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  evaluate->add_option("--out", out_dir, "Output directory")->required();
  evaluate->add_option("--m-eval", m_eval, "Ensemble members per test item");
  evaluate->add_option("--eval-seed", eval_seed,
                       "Sampling seed (default: the checkpoint's train seed)");

  auto* propriety =
      app.add_subcommand("check-propriety", "Fuzz the propriety inequality");
  propriety->add_option("--trials", trials, "Random (P, Q) pairs");
  propriety->add_option("--atoms", atoms, "Max atoms per measure (<= 5)");
  propriety->add_option("--dims", dims, "Max dimension (<= 3)");
  propriety->add_option("--seed", seed, "RNG seed");

  auto* gradcheck =
      app.add_subcommand("grad-check", "Finite-difference gradient suite");
  gradcheck->add_option("--seed", seed, "RNG seed");

  auto* sweep = app.add_subcommand("sweep", "Dropout-rate or sample-size sweep");
  sweep->add_option("--kind", kind, "dropout | samples")->required();
  sweep->add_option("--config", config_path, "Base train config (JSON)")
      ->required();
  sweep->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  sweep->add_option("--out", out_dir, "Output directory")->required();
  sweep->add_option("--m-eval", m_eval, "Ensemble members per test item");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (generate->parsed()) return pno::cmd_generate_data(config_path, out_dir, force);
    if (train->parsed()) return pno::cmd_train(config_path, dataset_dir, out_dir);
    if (evaluate->parsed())
      return pno::cmd_evaluate(checkpoints, dataset_dir, out_dir, m_eval,
                               eval_seed);
    if (propriety->parsed())
      return pno::cmd_check_propriety(trials, atoms, dims, seed);
    if (gradcheck->parsed()) return pno::cmd_grad_check(seed);
    if (sweep->parsed())
      return pno::cmd_sweep(kind, config_path, dataset_dir, out_dir, m_eval);
  } catch (const pno::config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const pno::format_error& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
