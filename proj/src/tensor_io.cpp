#include "pno/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "pno/errors.hpp"

namespace pno {

namespace {

constexpr char kTensorMagic[4] = {'P', 'N', 'O', 'T'};
constexpr char kCheckpointMagic[4] = {'P', 'N', 'O', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kMaxRank = 8;

// All integers and doubles are written in little-endian byte order; this
// assumes a little-endian host (checked below via a static assertion on the
// common platforms this builds for).
static_assert(std::numeric_limits<double>::is_iec559, "IEEE-754 doubles required");

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw format_error("cannot open " + path.string() + " for writing");
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw format_error("write failed on " + path_.string());
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof(T));
  }
  void close() {
    out_.close();
    if (!out_) throw format_error("close failed on " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw format_error("cannot open " + path.string());
    in_.seekg(0, std::ios::end);
    size_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0);
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_)
      throw format_error(path_.string() + ": truncated at byte offset " +
                         std::to_string(offset_));
    offset_ += n;
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  std::uint64_t offset() const { return offset_; }
  std::uint64_t remaining() const { return size_ - offset_; }
  std::string where() const {
    return path_.string() + " at byte offset " + std::to_string(offset_);
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t size_ = 0;
  std::uint64_t offset_ = 0;
};

void write_tensor_blob(Writer& w, const Tensor& t) {
  t.validate();
  w.bytes(kTensorMagic, 4);
  w.pod<std::uint32_t>(kVersion);
  w.pod<std::uint8_t>(t.is_complex ? 1 : 0);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(t.shape.size()));
  for (std::uint64_t d : t.shape) w.pod<std::uint64_t>(d);
  w.bytes(t.data.data(), t.data.size() * sizeof(double));
}

Tensor read_tensor_blob(Reader& r) {
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kTensorMagic, 4) != 0)
    throw format_error("bad tensor magic in " + r.where());
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion)
    throw format_error("unsupported tensor version " + std::to_string(version) +
                       " in " + r.where());
  const auto dtype = r.pod<std::uint8_t>();
  if (dtype > 1) throw format_error("bad dtype byte in " + r.where());
  const auto ndim = r.pod<std::uint8_t>();
  if (ndim == 0 || ndim > kMaxRank)
    throw format_error("bad rank in " + r.where());
  Tensor t;
  t.is_complex = dtype == 1;
  t.shape.resize(ndim);
  std::uint64_t count = 1;
  for (auto& d : t.shape) {
    d = r.pod<std::uint64_t>();
    if (d == 0 || count > (std::uint64_t{1} << 40) / std::max<std::uint64_t>(d, 1))
      throw format_error("implausible shape in " + r.where());
    count *= d;
  }
  const std::uint64_t scalars = count * (t.is_complex ? 2 : 1);
  if (r.remaining() < scalars * sizeof(double))
    throw format_error("payload shorter than shape demands in " + r.where());
  t.data.resize(scalars);
  r.bytes(t.data.data(), scalars * sizeof(double));
  return t;
}

}  // namespace

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (std::uint64_t d : shape) n *= d;
  return n;
}

void Tensor::validate() const {
  if (shape.empty() || shape.size() > kMaxRank)
    throw config_error("tensor rank must lie in [1, 8]");
  for (std::uint64_t d : shape)
    if (d == 0) throw config_error("tensor dimensions must be positive");
  const std::uint64_t want = element_count() * (is_complex ? 2 : 1);
  if (data.size() != want)
    throw config_error("tensor holds " + std::to_string(data.size()) +
                       " scalars, shape demands " + std::to_string(want));
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m) {
  Tensor t;
  t.shape = {static_cast<std::uint64_t>(m.rows()),
             static_cast<std::uint64_t>(m.cols())};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(m(r, c));
  return t;
}

Tensor Tensor::from_value(const Value& v) {
  if (!v.is_complex()) return from_matrix(v.re);
  Tensor t;
  t.is_complex = true;
  t.shape = {static_cast<std::uint64_t>(v.rows()),
             static_cast<std::uint64_t>(v.cols())};
  t.data.reserve(static_cast<std::size_t>(2 * v.re.size()));
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      t.data.push_back(v.re(r, c));
      t.data.push_back(v.im(r, c));
    }
  }
  return t;
}

Tensor Tensor::from_stack(const std::vector<Eigen::MatrixXd>& ms) {
  if (ms.empty()) throw config_error("cannot stack zero matrices");
  Tensor t;
  t.shape = {ms.size(), static_cast<std::uint64_t>(ms[0].rows()),
             static_cast<std::uint64_t>(ms[0].cols())};
  t.data.reserve(ms.size() * static_cast<std::size_t>(ms[0].size()));
  for (const auto& m : ms) {
    if (m.rows() != ms[0].rows() || m.cols() != ms[0].cols())
      throw config_error("stacked matrices must share one shape");
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(m(r, c));
  }
  return t;
}

Eigen::MatrixXd Tensor::to_matrix() const {
  validate();
  if (is_complex || shape.size() != 2)
    throw config_error("tensor is not a real matrix");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(shape[0]),
                    static_cast<Eigen::Index>(shape[1]));
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data[i++];
  return m;
}

Value Tensor::to_value() const {
  validate();
  if (shape.size() != 2) throw config_error("tensor is not a matrix");
  const auto rows = static_cast<Eigen::Index>(shape[0]);
  const auto cols = static_cast<Eigen::Index>(shape[1]);
  if (!is_complex) return Value::real(to_matrix());
  Eigen::MatrixXd re(rows, cols), im(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      re(r, c) = data[i++];
      im(r, c) = data[i++];
    }
  }
  return Value::complex(std::move(re), std::move(im));
}

std::vector<Eigen::MatrixXd> Tensor::to_stack() const {
  validate();
  if (is_complex || shape.size() != 3)
    throw config_error("tensor is not a real 3-D stack");
  const auto count = static_cast<std::size_t>(shape[0]);
  const auto rows = static_cast<Eigen::Index>(shape[1]);
  const auto cols = static_cast<Eigen::Index>(shape[2]);
  std::vector<Eigen::MatrixXd> out(count);
  std::size_t i = 0;
  for (auto& m : out) {
    m.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[i++];
  }
  return out;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  Writer w(path);
  write_tensor_blob(w, t);
  w.close();
}

Tensor load_tensor(const std::filesystem::path& path) {
  Reader r(path);
  Tensor t = read_tensor_blob(r);
  if (r.remaining() != 0)
    throw format_error("trailing bytes in " + r.where());
  return t;
}

void save_checkpoint(const std::filesystem::path& path,
                     const nlohmann::json& header, const NamedTensors& records) {
  Writer w(path);
  w.bytes(kCheckpointMagic, 4);
  w.pod<std::uint32_t>(kVersion);
  const std::string head = header.dump();
  w.pod<std::uint64_t>(head.size());
  w.bytes(head.data(), head.size());
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(records.size()));
  for (const auto& [name, tensor] : records) {
    if (name.empty() || name.size() > 0xffff)
      throw config_error("record name length out of range");
    w.pod<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    write_tensor_blob(w, tensor);
  }
  w.close();
}

std::pair<nlohmann::json, NamedTensors> load_checkpoint(
    const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw format_error("bad checkpoint magic in " + r.where());
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion)
    throw format_error("unsupported checkpoint version in " + r.where());
  const auto head_len = r.pod<std::uint64_t>();
  if (head_len > r.remaining())
    throw format_error("header longer than file in " + r.where());
  std::string head(head_len, '\0');
  r.bytes(head.data(), head_len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception& e) {
    throw format_error("unparseable checkpoint header in " + path.string() +
                       ": " + e.what());
  }
  const auto count = r.pod<std::uint32_t>();
  NamedTensors records;
  records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.pod<std::uint16_t>();
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    records.emplace_back(std::move(name), read_tensor_blob(r));
  }
  if (r.remaining() != 0)
    throw format_error("trailing bytes in " + r.where());
  return {std::move(header), std::move(records)};
}

}  // namespace pno
