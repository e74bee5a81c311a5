#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pno {

struct GradCheckRow {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  bool all_passed() const;
};

// Central finite differences (h = 1e-6) against the tape, with relative error
// |ad - fd| / max(1, |ad|, |fd|). One row per differentiable primitive
// (tolerance 1e-5), then one row per training pipeline — model, sampler,
// ensemble score — on a tiny model (width 4, 4 modes, 16 grid points, M = 3;
// tolerance 1e-4).
GradCheckReport run_gradient_checks(std::uint64_t seed);

std::string format_gradcheck_report(const GradCheckReport& report);

}  // namespace pno
