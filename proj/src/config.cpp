#include "pno/config.hpp"

#include <fstream>
#include <set>

#include "pno/errors.hpp"

namespace pno {

namespace {

using nlohmann::json;

// Reject unknown keys so typos surface as configuration errors instead of
// silently running with defaults.
void check_keys(const json& j, const std::set<std::string>& known,
                const char* what) {
  if (!j.is_object()) throw config_error(std::string(what) + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key))
      throw config_error(std::string(what) + ": unknown key '" + key + "'");
}

template <typename T>
void fetch(const json& j, const char* key, T& into) {
  if (!j.contains(key)) return;
  try {
    into = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw config_error(std::string("bad value for '") + key + "'");
  }
}

}  // namespace

void DataConfig::validate() const {
  if (generator != "ks" && generator != "gaussian" && generator != "heat")
    throw config_error("unknown generator '" + generator +
                       "' (valid: ks, gaussian, heat)");
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw config_error("split sizes must be >= 1");
  if (grid_points < 4 || (grid_points & (grid_points - 1)) != 0)
    throw config_error("grid_points must be a power of two >= 4");
  if (t_in < 1 || t_out < 1) throw config_error("t_in and t_out must be >= 1");
  if (!(domain_length > 0.0)) throw config_error("domain_length must be positive");
  if (generator == "ks") {
    if (!(dt > 0.0) || !(save_interval > 0.0) || burn_in_time < 0.0)
      throw config_error("ks time parameters must be positive");
    if (snapshots_per_trajectory < t_in + t_out)
      throw config_error("snapshots_per_trajectory too small for one window");
    if (window_stride < 1) throw config_error("window_stride must be >= 1");
  }
  if (generator == "gaussian") {
    if (k_smooth < 2 || k_smooth > grid_points / 2)
      throw config_error("k_smooth must lie in [2, grid_points/2]");
    if (!(sigma_eta > 0.0)) throw config_error("sigma_eta must be positive");
    if (t_in != 1 || t_out != 1)
      throw config_error("the gaussian benchmark is single-channel");
  }
  if (generator == "heat") {
    if (k_max < 1 || k_max > grid_points / 2)
      throw config_error("k_max must lie in [1, grid_points/2]");
    if (!(diffusion_time > 0.0))
      throw config_error("diffusion_time must be positive");
    if (t_in != 1 || t_out != 1)
      throw config_error("the heat benchmark is single-channel");
  }
}

DataConfig data_config_from_json(const json& j) {
  check_keys(j,
             {"id", "generator", "seed", "n_train", "n_val", "n_test",
              "grid_points", "t_in", "t_out", "domain_length", "dt",
              "save_interval", "burn_in_time", "snapshots_per_trajectory",
              "window_stride", "k_smooth", "sigma_eta", "k_max",
              "diffusion_time"},
             "data config");
  DataConfig c;
  fetch(j, "generator", c.generator);
  if (c.generator != "ks") {
    // single-channel generators on a unit domain unless overridden
    c.t_in = 1;
    c.t_out = 1;
    c.domain_length = 1.0;
  }
  fetch(j, "id", c.id);
  fetch(j, "seed", c.seed);
  fetch(j, "n_train", c.n_train);
  fetch(j, "n_val", c.n_val);
  fetch(j, "n_test", c.n_test);
  fetch(j, "grid_points", c.grid_points);
  fetch(j, "t_in", c.t_in);
  fetch(j, "t_out", c.t_out);
  fetch(j, "domain_length", c.domain_length);
  fetch(j, "dt", c.dt);
  fetch(j, "save_interval", c.save_interval);
  fetch(j, "burn_in_time", c.burn_in_time);
  fetch(j, "snapshots_per_trajectory", c.snapshots_per_trajectory);
  fetch(j, "window_stride", c.window_stride);
  fetch(j, "k_smooth", c.k_smooth);
  fetch(j, "sigma_eta", c.sigma_eta);
  fetch(j, "k_max", c.k_max);
  fetch(j, "diffusion_time", c.diffusion_time);
  if (c.id.empty()) c.id = c.generator;
  c.validate();
  return c;
}

json to_json(const DataConfig& c) {
  json j{{"id", c.id},
         {"generator", c.generator},
         {"seed", c.seed},
         {"n_train", c.n_train},
         {"n_val", c.n_val},
         {"n_test", c.n_test},
         {"grid_points", c.grid_points},
         {"t_in", c.t_in},
         {"t_out", c.t_out},
         {"domain_length", c.domain_length}};
  if (c.generator == "ks") {
    j["dt"] = c.dt;
    j["save_interval"] = c.save_interval;
    j["burn_in_time"] = c.burn_in_time;
    j["snapshots_per_trajectory"] = c.snapshots_per_trajectory;
    j["window_stride"] = c.window_stride;
  } else if (c.generator == "gaussian") {
    j["k_smooth"] = c.k_smooth;
    j["sigma_eta"] = c.sigma_eta;
  } else if (c.generator == "heat") {
    j["k_max"] = c.k_max;
    j["diffusion_time"] = c.diffusion_time;
  }
  return j;
}

void TrainConfig::validate() const {
  if (method != "pno_d" && method != "pno_r" && method != "mcd")
    throw config_error("unknown method '" + method + "'");
  if ((method == "pno_d" || method == "pno_r") && m_train < 2)
    throw config_error("ensemble training needs m_train >= 2");
  if (m_train < 1) throw config_error("m_train must be >= 1");
  if ((method == "pno_d" || method == "mcd") && weight_dropout <= 0.0 &&
      fourier_dropout <= 0.0)
    throw config_error(method + " needs a positive dropout rate");
  if (!(learning_rate > 0.0)) throw config_error("learning_rate must be positive");
  if (batch_size < 1) throw config_error("batch_size must be >= 1");
  if (max_epochs < 1) throw config_error("max_epochs must be >= 1");
  if (patience < 1) throw config_error("patience must be >= 1");
  if (!(clip_norm > 0.0)) throw config_error("clip_norm must be positive");
  if (weight_dropout < 0.0 || weight_dropout >= 1.0 || fourier_dropout < 0.0 ||
      fourier_dropout >= 1.0)
    throw config_error("dropout rates must lie in [0, 1)");
  if (modes < 1 || width < 1 || depth < 1 || projection_width < 1)
    throw config_error("architecture sizes must be >= 1");
  if (lr_halving && lr_halving_patience < 1)
    throw config_error("lr_halving_patience must be >= 1");
}

TrainConfig train_config_from_json(const json& j) {
  check_keys(j,
             {"method", "seed", "m_train", "learning_rate", "batch_size",
              "max_epochs", "patience", "clip_norm", "weight_dropout",
              "fourier_dropout", "modes", "width", "depth", "projection_width",
              "lr_halving", "lr_halving_patience"},
             "train config");
  TrainConfig c;
  fetch(j, "method", c.method);
  fetch(j, "seed", c.seed);
  fetch(j, "m_train", c.m_train);
  fetch(j, "learning_rate", c.learning_rate);
  fetch(j, "batch_size", c.batch_size);
  fetch(j, "max_epochs", c.max_epochs);
  fetch(j, "patience", c.patience);
  fetch(j, "clip_norm", c.clip_norm);
  fetch(j, "weight_dropout", c.weight_dropout);
  fetch(j, "fourier_dropout", c.fourier_dropout);
  fetch(j, "modes", c.modes);
  fetch(j, "width", c.width);
  fetch(j, "depth", c.depth);
  fetch(j, "projection_width", c.projection_width);
  fetch(j, "lr_halving", c.lr_halving);
  fetch(j, "lr_halving_patience", c.lr_halving_patience);
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  return json{{"method", c.method},
              {"seed", c.seed},
              {"m_train", c.m_train},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"clip_norm", c.clip_norm},
              {"weight_dropout", c.weight_dropout},
              {"fourier_dropout", c.fourier_dropout},
              {"modes", c.modes},
              {"width", c.width},
              {"depth", c.depth},
              {"projection_width", c.projection_width},
              {"lr_halving", c.lr_halving},
              {"lr_halving_patience", c.lr_halving_patience}};
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw config_error("unparseable JSON in " + path + ": " + e.what());
  }
}

}  // namespace pno
