#include "pno/checkpoint.hpp"

#include <utility>

#include "pno/errors.hpp"
#include "pno/tensor_io.hpp"
#include "pno/training.hpp"

namespace pno {

using nlohmann::json;

void save_model_checkpoint(const std::filesystem::path& path,
                           const ModelCheckpoint& ckpt) {
  json header;
  header["format"] = 1;
  header["train"] = to_json(ckpt.train);
  header["dataset_id"] = ckpt.dataset_id;
  header["t_in"] = ckpt.t_in;
  header["t_out"] = ckpt.t_out;
  header["grid_points"] = static_cast<std::int64_t>(ckpt.grid_points);
  header["domain_length"] = ckpt.domain_length;
  header["normalization"] = {{"input", norm_stats_to_json(ckpt.input_norm)},
                             {"target", norm_stats_to_json(ckpt.target_norm)}};
  header["epochs_run"] = ckpt.epochs_run;
  header["best_epoch"] = ckpt.best_epoch;
  header["best_val"] = ckpt.best_val;

  NamedTensors records;
  ckpt.model.for_each_parameter([&](const std::string& name, const Value& v) {
    records.emplace_back(name, Tensor::from_value(v));
  });
  save_checkpoint(path, header, records);
}

ModelCheckpoint load_model_checkpoint(const std::filesystem::path& path) {
  auto [header, records] = load_checkpoint(path);
  ModelCheckpoint ckpt;
  try {
    if (header.at("format").get<int>() != 1)
      throw format_error(path.string() + ": unsupported checkpoint format");
    ckpt.train = train_config_from_json(header.at("train"));
    ckpt.dataset_id = header.at("dataset_id").get<std::string>();
    ckpt.t_in = header.at("t_in").get<int>();
    ckpt.t_out = header.at("t_out").get<int>();
    ckpt.grid_points = header.at("grid_points").get<std::int64_t>();
    ckpt.domain_length = header.at("domain_length").get<double>();
    ckpt.input_norm =
        norm_stats_from_json(header.at("normalization").at("input"));
    ckpt.target_norm =
        norm_stats_from_json(header.at("normalization").at("target"));
    ckpt.epochs_run = header.at("epochs_run").get<int>();
    ckpt.best_epoch = header.at("best_epoch").get<int>();
    ckpt.best_val = header.at("best_val").get<double>();
  } catch (const json::exception& e) {
    throw format_error(path.string() + ": bad checkpoint header: " + e.what());
  }

  // Rebuild the architecture, then overwrite every parameter from its record.
  Rng scratch(0);
  ckpt.model = OperatorModel::init(
      operator_config_for(ckpt.train, ckpt.t_in, ckpt.t_out), scratch);

  std::size_t next = 0;
  ckpt.model.for_each_parameter([&](const std::string& name, Value& v) {
    if (next >= records.size())
      throw format_error(path.string() + ": missing parameter record '" +
                         name + "'");
    auto& [rec_name, tensor] = records[next++];
    if (rec_name != name)
      throw format_error(path.string() + ": expected parameter record '" +
                         name + "', found '" + rec_name + "'");
    Value loaded = tensor.to_value();
    if (loaded.re.rows() != v.re.rows() || loaded.re.cols() != v.re.cols() ||
        loaded.is_complex() != v.is_complex())
      throw format_error(path.string() + ": parameter '" + name +
                         "' has the wrong shape");
    v = std::move(loaded);
  });
  if (next != records.size())
    throw format_error(path.string() + ": unexpected extra parameter records");
  return ckpt;
}

}  // namespace pno
