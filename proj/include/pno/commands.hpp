#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pno {

// Subcommand bodies behind the CLI. Each returns the process exit code for a
// completed run (0 success, 1 verification failure); configuration problems
// are thrown as config_error / format_error and mapped to exit code 2 by the
// caller.

int cmd_generate_data(const std::string& config_path, const std::string& out_dir,
                      bool force);

int cmd_train(const std::string& config_path, const std::string& dataset_dir,
              const std::string& out_dir);

// eval_seed < 0 uses each checkpoint's own training seed.
int cmd_evaluate(const std::vector<std::string>& checkpoint_paths,
                 const std::string& dataset_dir, const std::string& out_dir,
                 int m_eval, std::int64_t eval_seed);

struct ProprietyReport {
  int pair_trials = 0;
  int equal_trials = 0;
  int kernel_trials = 0;
  double min_gap = 0.0;        // over P != Q pairs, S(Q,P) - S(P,P)
  double max_equal_gap = 0.0;  // over same-measure pairs, |gap|
  double max_kernel_err = 0.0; // |induced kernel score - energy score|
  double max_z0_spread = 0.0;  // score spread across anchors per trial
  int violations = 0;
  std::string worst_case;      // dump of the first offending pair, if any
};

// Brute-force fuzz of the propriety inequality and of the kernel identity on
// random discrete measures with up to `atoms` atoms in dimension 1..dims.
ProprietyReport run_propriety_fuzz(int trials, int atoms, int dims,
                                   std::uint64_t seed);

int cmd_check_propriety(int trials, int atoms, int dims, std::uint64_t seed);

int cmd_grad_check(std::uint64_t seed);

// kind: "dropout" (5x5 dropout-rate grid) or "samples" (M in {3,5,10,20,50}).
int cmd_sweep(const std::string& kind, const std::string& config_path,
              const std::string& dataset_dir, const std::string& out_dir,
              int m_eval);

}  // namespace pno
