#include "pno/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "pno/checkpoint.hpp"
#include "pno/config.hpp"
#include "pno/dataset.hpp"
#include "pno/errors.hpp"
#include "pno/gradcheck.hpp"
#include "pno/metrics.hpp"
#include "pno/scoring.hpp"
#include "pno/training.hpp"

namespace pno {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out.flush()) throw config_error("failed writing '" + path.string() + "'");
}

void write_history_csv(const fs::path& path,
                       const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,seconds,max_grad_norm,learning_rate\n";
  for (const auto& e : history) {
    out << e.epoch << ',' << format_full(e.train_loss) << ','
        << format_full(e.val_loss) << ',' << format_full(e.seconds) << ','
        << format_full(e.max_grad_norm) << ',' << format_full(e.learning_rate)
        << '\n';
  }
  write_text_file(path, out.str());
}

void check_dataset_compatible(const ModelCheckpoint& ckpt, const Dataset& ds,
                              const std::string& ckpt_path) {
  if (ckpt.grid_points != ds.grid_points)
    throw config_error("checkpoint '" + ckpt_path + "' was trained on " +
                       std::to_string(ckpt.grid_points) +
                       " grid points but the dataset has " +
                       std::to_string(ds.grid_points));
  if (ckpt.t_in != ds.t_in || ckpt.t_out != ds.t_out)
    throw config_error("checkpoint '" + ckpt_path +
                       "' window sizes do not match the dataset");
}

DiscreteMeasure random_measure(Rng& rng, int max_atoms, int d) {
  const int n =
      1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_atoms)));
  Eigen::MatrixXd atoms(n, d);
  for (Eigen::Index i = 0; i < atoms.rows(); ++i)
    for (Eigen::Index j = 0; j < atoms.cols(); ++j) atoms(i, j) = rng.normal();
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.uniform(0.05, 1.0);
  w /= w.sum();
  return DiscreteMeasure(std::move(atoms), std::move(w));
}

DiscreteMeasure reversed_measure(const DiscreteMeasure& p) {
  return DiscreteMeasure(p.atoms.colwise().reverse(),
                         p.weights.reverse());
}

std::string dump_measure(const char* name, const DiscreteMeasure& p) {
  std::ostringstream out;
  out << name << " atoms (one per row):\n"
      << p.atoms << "\n"
      << name << " weights: " << p.weights.transpose() << "\n";
  return out.str();
}

// One sweep cell: overrides applied to the base config, outcome and timing.
struct SweepRow {
  TrainConfig config;
  std::string dataset_id;
  MetricsRecord metrics;  // aggregate over the test set; zeros on failure
  double seconds = 0.0;
  double seconds_per_epoch = 0.0;
  int epochs = 0;
  std::string status = "ok";
};

SweepRow run_sweep_cell(const TrainConfig& tc, const Dataset& ds, int m_eval) {
  SweepRow row;
  row.config = tc;
  row.dataset_id = ds.id;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    FitResult fitres = fit(ds, tc);
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    row.epochs = fitres.epochs_run;
    row.seconds_per_epoch = row.seconds / static_cast<double>(fitres.epochs_run);
    const EvaluationOutput eval = evaluate_model(
        fitres.model, tc.method, tc.seed, ds.id, ds.test, ds.input_norm,
        ds.target_norm, m_eval, tc.seed, fitres.epochs_run);
    row.metrics = eval.aggregate;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    row.status = "failed: " + msg;
  }
  return row;
}

void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "method,seed,dataset,weight_dropout,fourier_dropout,m_train,l2,l2_rel,"
         "es,crps,nll,coverage_95,width_95,nll_floored,epochs,seconds,"
         "seconds_per_epoch,status\n";
  for (const auto& r : rows) {
    out << r.config.method << ',' << r.config.seed << ',' << r.dataset_id << ','
        << format_full(r.config.weight_dropout) << ','
        << format_full(r.config.fourier_dropout) << ',' << r.config.m_train
        << ',' << format_full(r.metrics.l2) << ','
        << format_full(r.metrics.l2_rel) << ',' << format_full(r.metrics.es)
        << ',' << format_full(r.metrics.crps) << ',' << format_full(r.metrics.nll)
        << ',' << format_full(r.metrics.coverage_95) << ','
        << format_full(r.metrics.width_95) << ','
        << format_full(r.metrics.nll_floored) << ',' << r.epochs << ','
        << format_full(r.seconds) << ',' << format_full(r.seconds_per_epoch)
        << ',' << r.status << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace

int cmd_generate_data(const std::string& config_path, const std::string& out_dir,
                      bool force) {
  const DataConfig config = data_config_from_json(load_json_file(config_path));
  const fs::path dir(out_dir);
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw config_error("output directory '" + out_dir +
                       "' is not empty; pass --force to overwrite");
  const Dataset ds = generate_dataset(config);
  save_dataset(dir, ds);
  std::printf("dataset '%s': %zu train / %zu val / %zu test windows, %lld grid points\n",
              ds.id.c_str(), ds.train.inputs.size(), ds.val.inputs.size(),
              ds.test.inputs.size(), static_cast<long long>(ds.grid_points));
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& dataset_dir,
              const std::string& out_dir) {
  const TrainConfig config = train_config_from_json(load_json_file(config_path));
  const Dataset ds = load_dataset(dataset_dir);
  if (config.modes > ds.grid_points / 2 + 1)
    throw config_error("modes exceeds the dataset's representable spectrum");

  FitResult result = fit(ds, config);

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  ModelCheckpoint ckpt;
  ckpt.train = config;
  ckpt.dataset_id = ds.id;
  ckpt.t_in = ds.t_in;
  ckpt.t_out = ds.t_out;
  ckpt.grid_points = ds.grid_points;
  ckpt.domain_length = ds.domain_length;
  ckpt.input_norm = ds.input_norm;
  ckpt.target_norm = ds.target_norm;
  ckpt.epochs_run = result.epochs_run;
  ckpt.best_epoch = result.best_epoch;
  ckpt.best_val = result.best_val;
  ckpt.model = std::move(result.model);
  save_model_checkpoint(dir / "checkpoint.pnoc", ckpt);
  write_history_csv(dir / "history.csv", result.history);
  write_text_file(dir / "resolved_config.json", to_json(config).dump(2) + "\n");

  std::printf("%s on '%s': %d epochs, best epoch %d, best val loss %.6g\n",
              config.method.c_str(), ds.id.c_str(), result.epochs_run,
              result.best_epoch, result.best_val);
  return 0;
}

int cmd_evaluate(const std::vector<std::string>& checkpoint_paths,
                 const std::string& dataset_dir, const std::string& out_dir,
                 int m_eval, std::int64_t eval_seed) {
  if (checkpoint_paths.empty())
    throw config_error("evaluate needs at least one --checkpoint");
  const Dataset ds = load_dataset(dataset_dir);

  std::vector<MetricsRecord> aggregates;
  std::vector<MetricsRecord> per_item;
  for (const auto& path : checkpoint_paths) {
    const ModelCheckpoint ckpt = load_model_checkpoint(path);
    check_dataset_compatible(ckpt, ds, path);
    const std::uint64_t noise_seed =
        eval_seed < 0 ? ckpt.train.seed : static_cast<std::uint64_t>(eval_seed);
    const EvaluationOutput eval = evaluate_model(
        ckpt.model, ckpt.train.method, ckpt.train.seed, ds.id, ds.test,
        ckpt.input_norm, ckpt.target_norm, m_eval, noise_seed, ckpt.epochs_run);
    aggregates.push_back(eval.aggregate);
    per_item.insert(per_item.end(), eval.per_item.begin(), eval.per_item.end());
  }

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_metrics_csv(dir / "metrics.csv", aggregates);
  write_metrics_csv(dir / "per_item.csv", per_item);

  json out;
  out["aggregate"] = json::array();
  for (const auto& r : aggregates) out["aggregate"].push_back(record_to_json(r));
  out["per_item"] = json::array();
  for (const auto& r : per_item) out["per_item"].push_back(record_to_json(r));

  // Mean and sample standard deviation over seeds, per method.
  json by_method = json::object();
  std::vector<std::string> methods;
  for (const auto& r : aggregates)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
      methods.push_back(r.method);
  for (const auto& method : methods) {
    std::vector<const MetricsRecord*> rows;
    for (const auto& r : aggregates)
      if (r.method == method) rows.push_back(&r);
    auto stat = [&](auto field) {
      const double n = static_cast<double>(rows.size());
      double mean = 0.0;
      for (const auto* r : rows) mean += field(*r) / n;
      double var = 0.0;
      if (rows.size() > 1)
        for (const auto* r : rows)
          var += (field(*r) - mean) * (field(*r) - mean) / (n - 1.0);
      return json{{"mean", mean}, {"std", std::sqrt(var)}};
    };
    by_method[method] = {
        {"runs", rows.size()},
        {"l2", stat([](const MetricsRecord& r) { return r.l2; })},
        {"es", stat([](const MetricsRecord& r) { return r.es; })},
        {"crps", stat([](const MetricsRecord& r) { return r.crps; })},
        {"nll", stat([](const MetricsRecord& r) { return r.nll; })},
        {"coverage_95",
         stat([](const MetricsRecord& r) { return r.coverage_95; })},
        {"width_95", stat([](const MetricsRecord& r) { return r.width_95; })}};
  }
  out["by_method"] = by_method;
  write_text_file(dir / "metrics.json", out.dump(2) + "\n");

  for (const auto& r : aggregates)
    std::printf("%s seed %llu: l2 %.6g  es %.6g  crps %.6g  nll %.6g  cov95 %.3f  width95 %.6g\n",
                r.method.c_str(), static_cast<unsigned long long>(r.seed), r.l2,
                r.es, r.crps, r.nll, r.coverage_95, r.width_95);
  return 0;
}

ProprietyReport run_propriety_fuzz(int trials, int atoms, int dims,
                                   std::uint64_t seed) {
  if (trials < 1) throw config_error("trials must be >= 1");
  if (atoms < 1 || atoms > 5) throw config_error("atoms must lie in [1, 5]");
  if (dims < 1 || dims > 3) throw config_error("dims must lie in [1, 3]");

  ProprietyReport report;
  report.pair_trials = trials;
  report.equal_trials = std::max(1, trials / 10);
  report.kernel_trials = trials;
  report.min_gap = std::numeric_limits<double>::infinity();

  Rng rng = Rng::substream(seed, "propriety");
  for (int t = 0; t < report.pair_trials; ++t) {
    const int d = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(dims)));
    const DiscreteMeasure p = random_measure(rng, atoms, d);
    const DiscreteMeasure q = random_measure(rng, atoms, d);
    const double gap =
        expected_energy_score(q, p) - expected_energy_score(p, p);
    report.min_gap = std::min(report.min_gap, gap);
    if (gap < -1e-12) {
      ++report.violations;
      if (report.worst_case.empty())
        report.worst_case = "propriety gap " + std::to_string(gap) + "\n" +
                            dump_measure("P", p) + dump_measure("Q", q);
    }
  }

  Rng eq_rng = Rng::substream(seed, "propriety-equal");
  for (int t = 0; t < report.equal_trials; ++t) {
    const int d =
        1 + static_cast<int>(eq_rng.below(static_cast<std::uint64_t>(dims)));
    const DiscreteMeasure p = random_measure(eq_rng, atoms, d);
    const DiscreteMeasure q = reversed_measure(p);  // same measure, reordered
    const double gap =
        std::abs(expected_energy_score(q, p) - expected_energy_score(p, p));
    report.max_equal_gap = std::max(report.max_equal_gap, gap);
    if (gap > 1e-9) {
      ++report.violations;
      if (report.worst_case.empty())
        report.worst_case = "same-measure gap " + std::to_string(gap) + "\n" +
                            dump_measure("P", p);
    }
  }

  Rng k_rng = Rng::substream(seed, "propriety-kernel");
  for (int t = 0; t < report.kernel_trials; ++t) {
    const int d =
        1 + static_cast<int>(k_rng.below(static_cast<std::uint64_t>(dims)));
    const DiscreteMeasure p = random_measure(k_rng, atoms, d);
    Eigen::VectorXd x(d);
    for (Eigen::Index i = 0; i < d; ++i) x(i) = k_rng.normal();
    const double es = energy_score_population(p, x);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    double err = 0.0;
    for (int a = 0; a < 3; ++a) {
      Eigen::VectorXd z0(d);
      for (Eigen::Index i = 0; i < d; ++i) z0(i) = k_rng.normal();
      const double ks = kernel_score_induced(p, x, z0);
      lo = std::min(lo, ks);
      hi = std::max(hi, ks);
      err = std::max(err, std::abs(ks - es));
    }
    report.max_kernel_err = std::max(report.max_kernel_err, err);
    report.max_z0_spread = std::max(report.max_z0_spread, hi - lo);
    if (err > 1e-12 || hi - lo > 1e-12) {
      ++report.violations;
      if (report.worst_case.empty())
        report.worst_case = "kernel identity error " + std::to_string(err) +
                            ", anchor spread " + std::to_string(hi - lo) + "\n" +
                            dump_measure("P", p);
    }
  }
  return report;
}

int cmd_check_propriety(int trials, int atoms, int dims, std::uint64_t seed) {
  const ProprietyReport report = run_propriety_fuzz(trials, atoms, dims, seed);
  std::printf("propriety fuzz: %d pair trials, %d same-measure trials, %d kernel trials\n",
              report.pair_trials, report.equal_trials, report.kernel_trials);
  std::printf("  min gap S(Q,P) - S(P,P):   %.6e  (must be >= -1e-12)\n",
              report.min_gap);
  std::printf("  max same-measure |gap|:    %.6e  (must be <  1e-9)\n",
              report.max_equal_gap);
  std::printf("  max kernel identity error: %.6e  (must be <  1e-12)\n",
              report.max_kernel_err);
  std::printf("  max anchor spread:         %.6e  (must be <  1e-12)\n",
              report.max_z0_spread);
  if (report.violations > 0) {
    std::fprintf(stderr, "propriety check FAILED (%d violations)\n%s",
                 report.violations, report.worst_case.c_str());
    return 1;
  }
  std::printf("propriety check passed\n");
  return 0;
}

int cmd_grad_check(std::uint64_t seed) {
  const GradCheckReport report = run_gradient_checks(seed);
  std::fputs(format_gradcheck_report(report).c_str(), stdout);
  if (!report.all_passed()) {
    std::fprintf(stderr, "gradient check FAILED\n");
    return 1;
  }
  std::printf("gradient check passed\n");
  return 0;
}

int cmd_sweep(const std::string& kind, const std::string& config_path,
              const std::string& dataset_dir, const std::string& out_dir,
              int m_eval) {
  const TrainConfig base = train_config_from_json(load_json_file(config_path));
  const Dataset ds = load_dataset(dataset_dir);
  const fs::path dir(out_dir);
  fs::create_directories(dir);

  std::vector<SweepRow> rows;
  if (kind == "dropout") {
    const double rates[] = {0.01, 0.02, 0.05, 0.1, 0.2};
    for (double pw : rates) {
      for (double pf : rates) {
        TrainConfig tc = base;
        tc.weight_dropout = pw;
        tc.fourier_dropout = pf;
        std::printf("sweep cell weight_dropout=%.2f fourier_dropout=%.2f...\n",
                    pw, pf);
        std::fflush(stdout);
        rows.push_back(run_sweep_cell(tc, ds, m_eval));
      }
    }
  } else if (kind == "samples") {
    const int sizes[] = {3, 5, 10, 20, 50};
    for (int m : sizes) {
      TrainConfig tc = base;
      tc.m_train = m;
      std::printf("sweep cell m_train=%d...\n", m);
      std::fflush(stdout);
      rows.push_back(run_sweep_cell(tc, ds, m_eval));
    }
  } else {
    throw config_error("unknown sweep kind '" + kind +
                       "' (valid: dropout, samples)");
  }

  write_sweep_csv(dir / "sweep.csv", rows);
  int failed = 0;
  for (const auto& r : rows)
    if (r.status != "ok") ++failed;
  std::printf("sweep '%s': %zu cells, %d failed; wrote %s\n", kind.c_str(),
              rows.size(), failed, (dir / "sweep.csv").string().c_str());
  return 0;
}

}  // namespace pno
