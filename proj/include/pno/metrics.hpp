#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pno/dataset.hpp"
#include "pno/operator.hpp"

namespace pno {

// One evaluation row: either a single test item (item = its index) or the
// aggregate over the test set (item = "mean"). All metrics are computed in
// physical (denormalized) units; ES and CRPS may legitimately be negative for
// misspecified ensembles, so nothing here asserts non-negativity.
struct MetricsRecord {
  std::string method;
  std::uint64_t seed = 0;
  std::string dataset_id;
  std::string item;
  double l2 = 0.0;
  double l2_rel = 0.0;
  double es = 0.0;
  double crps = 0.0;
  double nll = 0.0;
  double coverage_95 = 0.0;
  double width_95 = 0.0;
  double nll_floored = 0.0;  // fraction of grid points at the variance floor
  int epochs = 0;
};

struct EvaluationOutput {
  std::vector<MetricsRecord> per_item;
  MetricsRecord aggregate;  // plain mean of the per-item rows
};

// Draws m_eval members per test item with the method-appropriate sampler
// (stochastic dropout passes for pno_d and mcd, reparameterization noise for
// pno_r), denormalizes them, and scores against the physical-unit target.
// Noise is drawn from substream (eval_seed, "eval", item index), so the same
// arguments always reproduce the same rows.
EvaluationOutput evaluate_model(const OperatorModel& model,
                                const std::string& method,
                                std::uint64_t seed_label,
                                const std::string& dataset_id,
                                const SplitData& test,
                                const NormalizerStats& input_norm,
                                const NormalizerStats& target_norm, int m_eval,
                                std::uint64_t eval_seed, int epochs_run);

// 17-significant-digit scientific notation; every double written to a CSV
// goes through this so files parse back losslessly.
std::string format_full(double x);

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRecord>& rows);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

nlohmann::json record_to_json(const MetricsRecord& r);

}  // namespace pno
