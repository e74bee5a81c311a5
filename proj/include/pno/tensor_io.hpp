#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pno/tape.hpp"

namespace pno {

// N-dimensional float64 container, row-major. Complex tensors interleave
// (re, im) per entry. On disk: magic "PNOT", version u32 = 1, dtype u8
// (0 real, 1 complex), ndim u8, ndim x u64 shape, payload; all fields
// little-endian.
struct Tensor {
  std::vector<std::uint64_t> shape;
  bool is_complex = false;
  std::vector<double> data;

  std::uint64_t element_count() const;
  void validate() const;

  static Tensor from_matrix(const Eigen::MatrixXd& m);
  static Tensor from_value(const Value& v);
  // Stack of equally sized matrices -> (count, rows, cols).
  static Tensor from_stack(const std::vector<Eigen::MatrixXd>& ms);

  Eigen::MatrixXd to_matrix() const;         // 2-D real
  Value to_value() const;                    // 2-D real or complex
  std::vector<Eigen::MatrixXd> to_stack() const;  // 3-D real
};

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// Checkpoint: magic "PNOC", version u32 = 1, u64 header length, header JSON
// bytes, u32 record count, then per record a u16 name length, the name, and
// an embedded tensor blob in the container layout above.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const std::filesystem::path& path,
                     const nlohmann::json& header, const NamedTensors& records);
std::pair<nlohmann::json, NamedTensors> load_checkpoint(
    const std::filesystem::path& path);

}  // namespace pno
