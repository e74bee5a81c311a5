#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "pno/config.hpp"
#include "pno/dataset.hpp"
#include "pno/operator.hpp"

namespace pno {

// Everything needed to reload a trained model and evaluate it on fresh data:
// the resolved training configuration, the dataset fingerprint it was fitted
// to, the normalization statistics, and the parameter tensors themselves.
struct ModelCheckpoint {
  TrainConfig train;
  std::string dataset_id;
  int t_in = 1;
  int t_out = 1;
  Eigen::Index grid_points = 0;
  double domain_length = 1.0;
  NormalizerStats input_norm;
  NormalizerStats target_norm;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val = 0.0;
  OperatorModel model;
};

void save_model_checkpoint(const std::filesystem::path& path,
                           const ModelCheckpoint& ckpt);
ModelCheckpoint load_model_checkpoint(const std::filesystem::path& path);

}  // namespace pno
