#include "pno/dataset.hpp"

#include <fstream>

#include "pno/errors.hpp"
#include "pno/fft.hpp"
#include "pno/tensor_io.hpp"

namespace pno {

namespace {

using nlohmann::json;

constexpr double kStdFloor = 1e-12;

Eigen::MatrixXd broadcast_rows(const Eigen::VectorXd& v, Eigen::Index cols) {
  return v.replicate(1, cols);
}

std::vector<Eigen::MatrixXd> windows_from(const Trajectory& traj, int t_in,
                                          int t_out, int stride, int limit,
                                          bool want_inputs) {
  const Eigen::Index s = traj.snapshots.rows();
  std::vector<Eigen::MatrixXd> out;
  for (Eigen::Index start = 0; start + t_in + t_out <= s && limit > 0;
       start += stride, --limit) {
    if (want_inputs)
      out.push_back(traj.snapshots.middleRows(start, t_in));
    else
      out.push_back(traj.snapshots.middleRows(start + t_in, t_out));
  }
  return out;
}

void fill_split(SplitData& split, int needed,
                const std::vector<Trajectory>& trajectories, std::size_t& next,
                const DataConfig& c) {
  while (needed > 0) {
    if (next >= trajectories.size())
      throw config_error("not enough trajectories to fill the splits");
    const Trajectory& traj = trajectories[next++];
    auto ins = windows_from(traj, c.t_in, c.t_out, c.window_stride, needed, true);
    auto outs = windows_from(traj, c.t_in, c.t_out, c.window_stride, needed, false);
    needed -= static_cast<int>(ins.size());
    for (auto& m : ins) split.inputs.push_back(std::move(m));
    for (auto& m : outs) split.targets.push_back(std::move(m));
  }
}

Dataset generate_ks(const DataConfig& c) {
  const Eigen::Index windows_per_traj =
      (c.snapshots_per_trajectory - c.t_in - c.t_out) / c.window_stride + 1;
  const int total = c.n_train + c.n_val + c.n_test;
  // +2 spare trajectories: each split rounds up to whole trajectories
  const int n_traj =
      static_cast<int>((total + windows_per_traj - 1) / windows_per_traj) + 2;

  std::vector<Trajectory> trajectories;
  trajectories.reserve(static_cast<std::size_t>(n_traj));
  for (int i = 0; i < n_traj; ++i) {
    Rng rng = Rng::substream(c.seed, "ks-ic", static_cast<std::uint64_t>(i));
    Eigen::VectorXd u0(c.grid_points);
    for (Eigen::Index p = 0; p < u0.size(); ++p) u0[p] = rng.uniform(-1.0, 1.0);
    u0.array() -= u0.mean();  // the mean mode is conserved; keep it at zero
    trajectories.push_back(simulate_ks(u0, c.domain_length, c.dt,
                                       c.burn_in_time, c.save_interval,
                                       c.snapshots_per_trajectory));
  }
  return make_dataset(trajectories, c);
}

Dataset generate_paired(const DataConfig& c) {
  Dataset ds;
  auto fill = [&](SplitData& split, int count, const std::string& purpose) {
    Rng rng = Rng::substream(c.seed, purpose);
    for (int i = 0; i < count; ++i) {
      if (c.generator == "gaussian") {
        BenchmarkPair p = gaussian_benchmark_sample(c.grid_points, c.k_smooth,
                                                    c.sigma_eta, rng);
        split.inputs.push_back(p.input.transpose());
        split.targets.push_back(p.target.transpose());
      } else {  // heat
        Eigen::VectorXcd spec = Eigen::VectorXcd::Zero(c.grid_points / 2 + 1);
        const double half_n = static_cast<double>(c.grid_points) / 2.0;
        for (int k = 1; k <= c.k_max; ++k)
          spec[k] = {half_n * rng.normal(), -half_n * rng.normal()};
        const Eigen::VectorXd u0 = ifft_real(spec, c.grid_points);
        split.inputs.push_back(u0.transpose());
        split.targets.push_back(
            heat_evolve(u0, c.diffusion_time, c.domain_length).transpose());
      }
    }
  };
  fill(ds.train, c.n_train, "train-samples");
  fill(ds.val, c.n_val, "val-samples");
  fill(ds.test, c.n_test, "test-samples");
  return ds;
}

}  // namespace

json norm_stats_to_json(const NormalizerStats& s) {
  json j;
  j["mean"] = std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size());
  j["stddev"] =
      std::vector<double>(s.stddev.data(), s.stddev.data() + s.stddev.size());
  j["floored"] = s.floored;
  return j;
}

NormalizerStats norm_stats_from_json(const json& j) {
  NormalizerStats s;
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto stddev = j.at("stddev").get<std::vector<double>>();
  s.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(),
                                             static_cast<Eigen::Index>(mean.size()));
  s.stddev = Eigen::Map<const Eigen::VectorXd>(
      stddev.data(), static_cast<Eigen::Index>(stddev.size()));
  s.floored = j.at("floored").get<std::vector<int>>();
  return s;
}

Eigen::MatrixXd NormalizerStats::apply(const Eigen::MatrixXd& x) const {
  if (x.rows() != mean.size())
    throw config_error("normalizer channel count does not match the sample");
  return (x - broadcast_rows(mean, x.cols()))
      .cwiseQuotient(broadcast_rows(stddev, x.cols()));
}

Eigen::MatrixXd NormalizerStats::invert(const Eigen::MatrixXd& x) const {
  if (x.rows() != mean.size())
    throw config_error("normalizer channel count does not match the sample");
  return x.cwiseProduct(broadcast_rows(stddev, x.cols())) +
         broadcast_rows(mean, x.cols());
}

NormalizerStats fit_normalizer(const std::vector<Eigen::MatrixXd>& samples) {
  if (samples.empty()) throw config_error("cannot fit a normalizer on nothing");
  const Eigen::Index channels = samples[0].rows();
  const Eigen::Index cols = samples[0].cols();
  const double count = static_cast<double>(samples.size()) * static_cast<double>(cols);

  NormalizerStats s;
  s.mean = Eigen::VectorXd::Zero(channels);
  for (const auto& m : samples) s.mean += m.rowwise().sum();
  s.mean /= count;

  Eigen::VectorXd var = Eigen::VectorXd::Zero(channels);
  for (const auto& m : samples)
    var += (m.colwise() - s.mean).array().square().matrix().rowwise().sum();
  var /= count;

  s.stddev.resize(channels);
  for (Eigen::Index ch = 0; ch < channels; ++ch) {
    const double sd = std::sqrt(var[ch]);
    if (sd < kStdFloor) {
      s.stddev[ch] = 1.0;
      s.floored.push_back(static_cast<int>(ch));
    } else {
      s.stddev[ch] = sd;
    }
  }
  return s;
}

Dataset make_dataset(const std::vector<Trajectory>& trajectories,
                     const DataConfig& config) {
  config.validate();
  Dataset ds;
  std::size_t next = 0;
  fill_split(ds.train, config.n_train, trajectories, next, config);
  fill_split(ds.val, config.n_val, trajectories, next, config);
  fill_split(ds.test, config.n_test, trajectories, next, config);
  ds.id = config.id;
  ds.t_in = config.t_in;
  ds.t_out = config.t_out;
  ds.grid_points = config.grid_points;
  ds.domain_length = config.domain_length;
  ds.config = to_json(config);
  ds.input_norm = fit_normalizer(ds.train.inputs);
  ds.target_norm = fit_normalizer(ds.train.targets);
  return ds;
}

Dataset generate_dataset(const DataConfig& config) {
  config.validate();
  Dataset ds;
  if (config.generator == "ks") {
    ds = generate_ks(config);
  } else {
    ds = generate_paired(config);
    ds.id = config.id;
    ds.t_in = config.t_in;
    ds.t_out = config.t_out;
    ds.grid_points = config.grid_points;
    ds.domain_length = config.domain_length;
    ds.config = to_json(config);
    ds.input_norm = fit_normalizer(ds.train.inputs);
    ds.target_norm = fit_normalizer(ds.train.targets);
  }
  return ds;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  save_tensor(dir / "train_inputs.pnot", Tensor::from_stack(ds.train.inputs));
  save_tensor(dir / "train_targets.pnot", Tensor::from_stack(ds.train.targets));
  save_tensor(dir / "val_inputs.pnot", Tensor::from_stack(ds.val.inputs));
  save_tensor(dir / "val_targets.pnot", Tensor::from_stack(ds.val.targets));
  save_tensor(dir / "test_inputs.pnot", Tensor::from_stack(ds.test.inputs));
  save_tensor(dir / "test_targets.pnot", Tensor::from_stack(ds.test.targets));

  json manifest;
  manifest["format"] = 1;
  manifest["id"] = ds.id;
  manifest["t_in"] = ds.t_in;
  manifest["t_out"] = ds.t_out;
  manifest["grid_points"] = static_cast<std::int64_t>(ds.grid_points);
  manifest["domain_length"] = ds.domain_length;
  manifest["counts"] = {{"train", ds.train.inputs.size()},
                        {"val", ds.val.inputs.size()},
                        {"test", ds.test.inputs.size()}};
  manifest["normalization"] = {{"input", norm_stats_to_json(ds.input_norm)},
                               {"target", norm_stats_to_json(ds.target_norm)}};
  manifest["config"] = ds.config;

  std::ofstream out(dir / "manifest.json");
  if (!out) throw format_error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw format_error("no dataset manifest at " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw format_error("unparseable manifest " + manifest_path.string() + ": " +
                       e.what());
  }

  Dataset ds;
  try {
    ds.id = manifest.at("id").get<std::string>();
    ds.t_in = manifest.at("t_in").get<int>();
    ds.t_out = manifest.at("t_out").get<int>();
    ds.grid_points = manifest.at("grid_points").get<std::int64_t>();
    ds.domain_length = manifest.at("domain_length").get<double>();
    ds.input_norm =
        norm_stats_from_json(manifest.at("normalization").at("input"));
    ds.target_norm =
        norm_stats_from_json(manifest.at("normalization").at("target"));
    ds.config = manifest.at("config");
  } catch (const json::exception& e) {
    throw format_error("manifest " + manifest_path.string() +
                       " is missing fields: " + e.what());
  }

  ds.train.inputs = load_tensor(dir / "train_inputs.pnot").to_stack();
  ds.train.targets = load_tensor(dir / "train_targets.pnot").to_stack();
  ds.val.inputs = load_tensor(dir / "val_inputs.pnot").to_stack();
  ds.val.targets = load_tensor(dir / "val_targets.pnot").to_stack();
  ds.test.inputs = load_tensor(dir / "test_inputs.pnot").to_stack();
  ds.test.targets = load_tensor(dir / "test_targets.pnot").to_stack();

  auto check = [&](const SplitData& s, const char* name, const json& counts) {
    if (s.inputs.size() != s.targets.size() ||
        s.inputs.size() != counts.at(name).get<std::size_t>())
      throw format_error(std::string("dataset split '") + name +
                         "' does not match its manifest count");
    for (const auto& m : s.inputs)
      if (m.rows() != ds.t_in || m.cols() != ds.grid_points)
        throw format_error(std::string("bad input shape in split '") + name + "'");
    for (const auto& m : s.targets)
      if (m.rows() != ds.t_out || m.cols() != ds.grid_points)
        throw format_error(std::string("bad target shape in split '") + name + "'");
  };
  const json& counts = manifest.at("counts");
  check(ds.train, "train", counts);
  check(ds.val, "val", counts);
  check(ds.test, "test", counts);
  return ds;
}

}  // namespace pno
