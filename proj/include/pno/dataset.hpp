#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "pno/config.hpp"
#include "pno/pde.hpp"

namespace pno {

// Paired samples; each entry is a (channels, grid) matrix.
struct SplitData {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> targets;
};

// Per-channel z-normalization fitted on the training split. Channels whose
// standard deviation collapses are floored to 1 and flagged.
struct NormalizerStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  std::vector<int> floored;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& x) const;
};

NormalizerStats fit_normalizer(const std::vector<Eigen::MatrixXd>& samples);

nlohmann::json norm_stats_to_json(const NormalizerStats& s);
NormalizerStats norm_stats_from_json(const nlohmann::json& j);

struct Dataset {
  std::string id;
  SplitData train, val, test;
  NormalizerStats input_norm, target_norm;  // fitted on the training split
  int t_in = 1;
  int t_out = 1;
  Eigen::Index grid_points = 0;
  double domain_length = 1.0;
  nlohmann::json config;  // resolved generation config
};

// Cut sliding input/target windows out of trajectories, filling train, then
// val, then test. A trajectory's windows never straddle split boundaries.
Dataset make_dataset(const std::vector<Trajectory>& trajectories,
                     const DataConfig& config);

// Generate from scratch according to the config (ks | gaussian | heat).
Dataset generate_dataset(const DataConfig& config);

// Directory layout: manifest.json plus one tensor container per split array,
// all values in physical units.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace pno
