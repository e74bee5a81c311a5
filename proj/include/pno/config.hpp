#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace pno {

// Dataset generation. Some defaults depend on the generator and are resolved
// during parsing: the Kuramoto-Sivashinsky generator defaults to a length-100
// domain with 10 input and 10 target snapshots per window; the gaussian and
// heat generators are single-channel on a unit domain.
struct DataConfig {
  std::string id;  // defaults to the generator name
  std::string generator = "ks";  // ks | gaussian | heat
  std::uint64_t seed = 1;
  int n_train = 1000;
  int n_val = 125;
  int n_test = 200;
  int grid_points = 128;
  int t_in = 10;
  int t_out = 10;
  double domain_length = 100.0;
  // ks
  double dt = 0.05;
  double save_interval = 2.0;
  double burn_in_time = 50.0;
  int snapshots_per_trajectory = 41;
  int window_stride = 1;
  // gaussian
  int k_smooth = 16;
  double sigma_eta = 0.3;
  // heat
  int k_max = 12;
  double diffusion_time = 0.01;

  void validate() const;
};

DataConfig data_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DataConfig& c);

struct TrainConfig {
  std::string method = "pno_r";  // pno_d | pno_r | mcd
  std::uint64_t seed = 0;
  int m_train = 3;  // ensemble members per training sample
  double learning_rate = 1e-3;
  int batch_size = 32;
  int max_epochs = 200;
  int patience = 10;
  double clip_norm = 1.0;
  double weight_dropout = 0.0;
  double fourier_dropout = 0.0;
  int modes = 16;
  int width = 24;
  int depth = 3;
  int projection_width = 64;
  bool lr_halving = false;      // halve the rate on a validation plateau
  int lr_halving_patience = 5;

  void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);

nlohmann::json load_json_file(const std::string& path);

}  // namespace pno
