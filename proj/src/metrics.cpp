#include "pno/metrics.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pno/errors.hpp"
#include "pno/rng.hpp"
#include "pno/scoring.hpp"

namespace pno {

namespace {

constexpr const char* kCsvHeader =
    "method,seed,dataset,item,l2,l2_rel,es,crps,nll,coverage_95,width_95,"
    "nll_floored,epochs";

std::vector<Eigen::MatrixXd> draw_members(const OperatorModel& model,
                                          const std::string& method,
                                          const Eigen::MatrixXd& a, int m,
                                          Rng& rng) {
  if (method == "pno_r") return sample_pno_r(model, a, m, rng);
  if (method == "pno_d" || method == "mcd") return sample_pno_d(model, a, m, rng);
  throw config_error("unknown method '" + method + "'");
}

}  // namespace

EvaluationOutput evaluate_model(const OperatorModel& model,
                                const std::string& method,
                                std::uint64_t seed_label,
                                const std::string& dataset_id,
                                const SplitData& test,
                                const NormalizerStats& input_norm,
                                const NormalizerStats& target_norm, int m_eval,
                                std::uint64_t eval_seed, int epochs_run) {
  if (m_eval < 2) throw config_error("evaluation needs at least 2 members");
  const auto n_items = test.inputs.size();
  if (n_items == 0) throw config_error("evaluation needs a non-empty test split");
  if (test.targets.size() != n_items)
    throw config_error("test split has mismatched input and target counts");

  EvaluationOutput out;
  out.per_item.reserve(n_items);
  for (std::size_t i = 0; i < n_items; ++i) {
    const Eigen::MatrixXd a_norm = input_norm.apply(test.inputs[i]);
    const Eigen::MatrixXd& u_phys = test.targets[i];
    const Eigen::Index n_flat = u_phys.size();

    Rng rng = Rng::substream(eval_seed, "eval", i);
    const auto members = draw_members(model, method, a_norm, m_eval, rng);

    Eigen::MatrixXd stacked(m_eval, n_flat);
    for (int j = 0; j < m_eval; ++j)
      stacked.row(j) = flatten_rowwise(target_norm.invert(members[j]));
    const PredictiveEnsemble ensemble(std::move(stacked), 1.0);
    const GridFunction obs(flatten_rowwise(u_phys), 1.0);

    MetricsRecord r;
    r.method = method;
    r.seed = seed_label;
    r.dataset_id = dataset_id;
    r.item = std::to_string(i);
    r.epochs = epochs_run;
    r.l2 = l2_metric(ensemble, obs);
    r.l2_rel = l2_relative(ensemble, obs);
    r.es = energy_score_estimator(ensemble, obs);

    double crps_sum = 0.0;
    for (Eigen::Index p = 0; p < n_flat; ++p)
      crps_sum +=
          crps_ensemble(ensemble.members.col(p), obs.values(p), CrpsKind::fair);
    r.crps = crps_sum / static_cast<double>(n_flat);

    const Eigen::VectorXd mean = ensemble.members.colwise().mean().transpose();
    // Unbiased per-point variance over the members.
    Eigen::VectorXd variance = (ensemble.members.rowwise() - mean.transpose())
                                   .colwise()
                                   .squaredNorm()
                                   .transpose() /
                               static_cast<double>(m_eval - 1);
    Eigen::Index floored = 0;
    r.nll = gaussian_nll(GridFunction(mean, 1.0),
                         GridFunction(std::move(variance), 1.0), obs, &floored);
    r.nll_floored = static_cast<double>(floored) / static_cast<double>(n_flat);

    const CoverageWidth cw = coverage_and_width(ensemble, obs, 0.05);
    r.coverage_95 = cw.coverage;
    r.width_95 = cw.width;
    out.per_item.push_back(std::move(r));
  }

  MetricsRecord agg;
  agg.method = method;
  agg.seed = seed_label;
  agg.dataset_id = dataset_id;
  agg.item = "mean";
  agg.epochs = epochs_run;
  const double inv = 1.0 / static_cast<double>(n_items);
  for (const auto& r : out.per_item) {
    agg.l2 += inv * r.l2;
    agg.l2_rel += inv * r.l2_rel;
    agg.es += inv * r.es;
    agg.crps += inv * r.crps;
    agg.nll += inv * r.nll;
    agg.coverage_95 += inv * r.coverage_95;
    agg.width_95 += inv * r.width_95;
    agg.nll_floored += inv * r.nll_floored;
  }
  out.aggregate = std::move(agg);
  return out;
}

std::string format_full(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.16e", x);
  return buf;
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot open '" + path.string() + "' for writing");
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.method << ',' << r.seed << ',' << r.dataset_id << ',' << r.item
        << ',' << format_full(r.l2) << ',' << format_full(r.l2_rel) << ','
        << format_full(r.es) << ',' << format_full(r.crps) << ','
        << format_full(r.nll) << ',' << format_full(r.coverage_95) << ','
        << format_full(r.width_95) << ',' << format_full(r.nll_floored) << ','
        << r.epochs << '\n';
  }
  if (!out.flush()) throw config_error("failed writing '" + path.string() + "'");
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw format_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw format_error(path.string() + ": unexpected metrics CSV header");

  std::vector<MetricsRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 13)
      throw format_error(path.string() + ": bad metrics row '" + line + "'");
    MetricsRecord r;
    r.method = fields[0];
    r.seed = std::strtoull(fields[1].c_str(), nullptr, 10);
    r.dataset_id = fields[2];
    r.item = fields[3];
    r.l2 = std::strtod(fields[4].c_str(), nullptr);
    r.l2_rel = std::strtod(fields[5].c_str(), nullptr);
    r.es = std::strtod(fields[6].c_str(), nullptr);
    r.crps = std::strtod(fields[7].c_str(), nullptr);
    r.nll = std::strtod(fields[8].c_str(), nullptr);
    r.coverage_95 = std::strtod(fields[9].c_str(), nullptr);
    r.width_95 = std::strtod(fields[10].c_str(), nullptr);
    r.nll_floored = std::strtod(fields[11].c_str(), nullptr);
    r.epochs = static_cast<int>(std::strtol(fields[12].c_str(), nullptr, 10));
    rows.push_back(std::move(r));
  }
  return rows;
}

nlohmann::json record_to_json(const MetricsRecord& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["seed"] = r.seed;
  j["dataset"] = r.dataset_id;
  j["item"] = r.item;
  j["l2"] = r.l2;
  j["l2_rel"] = r.l2_rel;
  j["es"] = r.es;
  j["crps"] = r.crps;
  j["nll"] = r.nll;
  j["coverage_95"] = r.coverage_95;
  j["width_95"] = r.width_95;
  j["nll_floored"] = r.nll_floored;
  j["epochs"] = r.epochs;
  return j;
}

}  // namespace pno
