#include "pno/operator.hpp"

#include <cmath>

#include "pno/activations.hpp"
#include "pno/fft.hpp"

namespace pno {

namespace {

Eigen::MatrixXd gelu_mat(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return detail::gelu(v); });
}

Eigen::MatrixXd softplus_mat(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return detail::softplus(v); });
}

Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo,
                               double hi, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  return m;
}

Value pointwise_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in,
                     Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Value::real(uniform_matrix(rows, cols, -bound, bound, rng));
}

// One (c_in, c_out) contraction per retained mode.
Eigen::MatrixXcd mode_contract(const Value& w, const Eigen::MatrixXcd& x) {
  const Eigen::Index c_in = x.rows();
  const Eigen::Index k = x.cols();
  const Eigen::Index c_out = w.cols();
  Eigen::MatrixXcd out(c_out, k);
  Eigen::VectorXd xre(c_in), xim(c_in), yre(c_out), yim(c_out);
  for (Eigen::Index m = 0; m < k; ++m) {
    const auto wre = w.re.block(m * c_in, 0, c_in, c_out);
    const auto wim = w.im.block(m * c_in, 0, c_in, c_out);
    xre = x.col(m).real();
    xim = x.col(m).imag();
    yre.noalias() = wre.transpose() * xre;
    yre.noalias() -= wim.transpose() * xim;
    yim.noalias() = wre.transpose() * xim;
    yim.noalias() += wim.transpose() * xre;
    out.col(m).real() = yre;
    out.col(m).imag() = yim;
  }
  return out;
}

void check_input(const OperatorConfig& c, const Eigen::MatrixXd& a) {
  if (a.rows() != c.t_in)
    throw config_error("input has " + std::to_string(a.rows()) +
                       " channels, model expects " + std::to_string(c.t_in));
  const Eigen::Index n = a.cols();
  if (!is_power_of_two(n) || n < 2)
    throw config_error("grid size must be a power of two >= 2");
  if (c.modes > n / 2 + 1)
    throw config_error("retained modes exceed the grid's spectrum");
}

bool dropout_active(const OperatorConfig& c, ForwardMode mode) {
  return mode == ForwardMode::train &&
         (c.weight_dropout > 0.0 || c.fourier_dropout > 0.0);
}

}  // namespace

void OperatorConfig::validate() const {
  if (t_in < 1 || t_out < 1) throw config_error("head channels must be >= 1");
  if (modes < 1) throw config_error("retained modes must be >= 1");
  if (width < 1 || projection_width < 1)
    throw config_error("widths must be >= 1");
  if (depth < 1) throw config_error("depth must be >= 1");
  if (weight_dropout < 0.0 || weight_dropout >= 1.0 || fourier_dropout < 0.0 ||
      fourier_dropout >= 1.0)
    throw config_error("dropout rates must lie in [0, 1)");
}

OperatorModel OperatorModel::init(const OperatorConfig& config, Rng& rng) {
  config.validate();
  OperatorModel m;
  m.config = config;
  const Eigen::Index w = config.width;
  m.lift_w = pointwise_init(w, config.t_in, config.t_in, rng);
  m.lift_b = pointwise_init(w, 1, config.t_in, rng);
  const double scale = 1.0 / (static_cast<double>(w) * static_cast<double>(w));
  for (int d = 0; d < config.depth; ++d) {
    SpectralBlock b;
    Eigen::MatrixXd re(config.modes * w, w), im(config.modes * w, w);
    for (Eigen::Index r = 0; r < re.rows(); ++r) {
      for (Eigen::Index c = 0; c < re.cols(); ++c) {
        re(r, c) = rng.uniform(0.0, scale);
        im(r, c) = rng.uniform(0.0, scale);
      }
    }
    b.modes_weight = Value::complex(std::move(re), std::move(im));
    b.bypass_weight = pointwise_init(w, w, w, rng);
    b.bias = pointwise_init(w, 1, w, rng);
    m.blocks.push_back(std::move(b));
  }
  m.proj_w = pointwise_init(config.projection_width, w, w, rng);
  m.proj_b = pointwise_init(config.projection_width, 1, w, rng);
  m.mean_w = pointwise_init(config.t_out, config.projection_width,
                            config.projection_width, rng);
  m.mean_b = pointwise_init(config.t_out, 1, config.projection_width, rng);
  if (config.head == HeadKind::reparam) {
    m.std_w = pointwise_init(config.t_out, config.projection_width,
                             config.projection_width, rng);
    m.std_b = pointwise_init(config.t_out, 1, config.projection_width, rng);
  }
  return m;
}

void OperatorModel::for_each_parameter(
    const std::function<void(const std::string&, Value&)>& fn) {
  fn("lift.w", lift_w);
  fn("lift.b", lift_b);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "block" + std::to_string(i);
    fn(p + ".modes", blocks[i].modes_weight);
    fn(p + ".bypass", blocks[i].bypass_weight);
    fn(p + ".bias", blocks[i].bias);
  }
  fn("proj.w", proj_w);
  fn("proj.b", proj_b);
  fn("head.mean.w", mean_w);
  fn("head.mean.b", mean_b);
  if (config.head == HeadKind::reparam) {
    fn("head.std.w", std_w);
    fn("head.std.b", std_b);
  }
}

void OperatorModel::for_each_parameter(
    const std::function<void(const std::string&, const Value&)>& fn) const {
  const_cast<OperatorModel*>(this)->for_each_parameter(
      [&](const std::string& name, Value& v) { fn(name, v); });
}

std::vector<Value*> OperatorModel::parameters() {
  std::vector<Value*> out;
  for_each_parameter([&](const std::string&, Value& v) { out.push_back(&v); });
  return out;
}

Eigen::MatrixXd weight_dropout_mask(Eigen::Index rows, Eigen::Index cols,
                                    double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw config_error("dropout rate outside [0, 1)");
  const double keep_scale = 1.0 / (1.0 - p);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = rng.bernoulli(p) ? 0.0 : keep_scale;
  return m;
}

Eigen::VectorXd fourier_dropout_mask(Eigen::Index k, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw config_error("dropout rate outside [0, 1)");
  if (k < 1) throw config_error("mask needs at least one mode");
  const double keep_scale = 1.0 / (1.0 - p);
  Eigen::VectorXd m(k);
  m[0] = 1.0;
  for (Eigen::Index i = 1; i < k; ++i)
    m[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
  return m;
}

Eigen::MatrixXd apply_weight_dropout(const Eigen::MatrixXd& activations,
                                     double p, Rng& rng) {
  if (p == 0.0) return activations;
  return activations.cwiseProduct(
      weight_dropout_mask(activations.rows(), activations.cols(), p, rng));
}

Eigen::MatrixXcd apply_fourier_dropout(const Eigen::MatrixXcd& modes, double p,
                                       Rng& rng) {
  if (p == 0.0) return modes;
  const Eigen::VectorXd mask = fourier_dropout_mask(modes.cols(), p, rng);
  return modes * mask.asDiagonal();
}

Eigen::MatrixXd spectral_conv_forward(const SpectralBlock& block, int modes,
                                      const Eigen::MatrixXd& v,
                                      const Eigen::VectorXd* fourier_mask,
                                      bool activation) {
  const Eigen::Index n = v.cols();
  if (!is_power_of_two(n)) throw config_error("grid size must be a power of two");
  const Eigen::Index half = n / 2 + 1;
  if (modes < 1 || modes > half)
    throw config_error("retained modes exceed the grid's spectrum");
  if (block.modes_weight.rows() != modes * v.rows())
    throw config_error("spectral weight rows must be modes*c_in");
  if (block.bypass_weight.cols() != v.rows())
    throw config_error("bypass weight does not match input channels");
  if (fourier_mask && fourier_mask->size() != modes)
    throw config_error("fourier mask does not match retained modes");

  const Eigen::MatrixXcd spectrum = fft_real_rows(v);
  Eigen::MatrixXcd kept = mode_contract(block.modes_weight, spectrum.leftCols(modes));
  if (fourier_mask) kept = kept * fourier_mask->asDiagonal();
  Eigen::MatrixXcd padded = Eigen::MatrixXcd::Zero(kept.rows(), half);
  padded.leftCols(modes) = kept;

  Eigen::MatrixXd out = ifft_real_rows(padded, n);
  out.noalias() += block.bypass_weight.re * v;
  out.colwise() += block.bias.re.col(0);
  if (activation) out = gelu_mat(out);
  return out;
}

ForwardResult model_forward(const OperatorModel& model, const Eigen::MatrixXd& a,
                            ForwardMode mode, Rng* rng) {
  const OperatorConfig& c = model.config;
  c.validate();
  check_input(c, a);
  const bool stochastic = dropout_active(c, mode);
  if (stochastic && !rng)
    throw config_error("stochastic forward needs a random stream");

  Eigen::MatrixXd v = model.lift_w.re * a;
  v.colwise() += model.lift_b.re.col(0);

  const bool fdrop = mode == ForwardMode::train && c.fourier_dropout > 0.0;
  const bool wdrop = mode == ForwardMode::train && c.weight_dropout > 0.0;
  for (int i = 0; i < c.depth; ++i) {
    Eigen::VectorXd fmask;
    const Eigen::VectorXd* fm = nullptr;
    if (fdrop) {
      fmask = fourier_dropout_mask(c.modes, c.fourier_dropout, *rng);
      fm = &fmask;
    }
    const bool act = model.activations_enabled && i + 1 < c.depth;
    v = spectral_conv_forward(model.blocks[static_cast<std::size_t>(i)], c.modes,
                              v, fm, act);
    if (wdrop)
      v = v.cwiseProduct(
          weight_dropout_mask(v.rows(), v.cols(), c.weight_dropout, *rng));
  }

  Eigen::MatrixXd h = model.proj_w.re * v;
  h.colwise() += model.proj_b.re.col(0);
  if (model.activations_enabled) h = gelu_mat(h);

  ForwardResult r;
  r.out = model.mean_w.re * h;
  r.out.colwise() += model.mean_b.re.col(0);
  if (c.head == HeadKind::reparam) {
    Eigen::MatrixXd pre = model.std_w.re * h;
    pre.colwise() += model.std_b.re.col(0);
    r.stddev = softplus_mat(pre).array() + 1e-6;
  }
  return r;
}

ModelBinding bind_model(Tape& tape, const OperatorModel& model) {
  ModelBinding b;
  b.model = &model;
  auto put = [&](const Value& v) {
    const Tape::Id id = tape.leaf(v);
    b.all.push_back(id);
    return id;
  };
  b.lift_w = put(model.lift_w);
  b.lift_b = put(model.lift_b);
  for (const auto& blk : model.blocks) {
    ModelBinding::BlockIds ids;
    ids.modes = put(blk.modes_weight);
    ids.bypass = put(blk.bypass_weight);
    ids.bias = put(blk.bias);
    b.blocks.push_back(ids);
  }
  b.proj_w = put(model.proj_w);
  b.proj_b = put(model.proj_b);
  b.mean_w = put(model.mean_w);
  b.mean_b = put(model.mean_b);
  if (model.config.head == HeadKind::reparam) {
    b.std_w = put(model.std_w);
    b.std_b = put(model.std_b);
  }
  return b;
}

TapeForward model_forward_tape(Tape& tape, const ModelBinding& binding,
                               const Eigen::MatrixXd& a, ForwardMode mode,
                               Rng* rng) {
  if (!binding.model) throw config_error("binding is not attached to a model");
  const OperatorModel& model = *binding.model;
  const OperatorConfig& c = model.config;
  check_input(c, a);
  const bool stochastic = dropout_active(c, mode);
  if (stochastic && !rng)
    throw config_error("stochastic forward needs a random stream");
  const int n = static_cast<int>(a.cols());
  const int half = n / 2 + 1;

  Tape::Id v = tape.channel_linear(binding.lift_w, binding.lift_b,
                                   tape.constant(Value::real(a)));

  const bool fdrop = mode == ForwardMode::train && c.fourier_dropout > 0.0;
  const bool wdrop = mode == ForwardMode::train && c.weight_dropout > 0.0;
  for (int i = 0; i < c.depth; ++i) {
    const auto& ids = binding.blocks[static_cast<std::size_t>(i)];
    Tape::Id spec = tape.truncate_modes(tape.fft_real(v), c.modes);
    Tape::Id kept = tape.mode_multiply(ids.modes, spec);
    if (fdrop) {
      const Eigen::VectorXd mask =
          fourier_dropout_mask(c.modes, c.fourier_dropout, *rng);
      const Eigen::Index rows = tape.value(kept).rows();
      Eigen::MatrixXd mre = mask.transpose().replicate(rows, 1);
      kept = tape.multiply(
          kept, tape.constant(Value::complex(
                    std::move(mre), Eigen::MatrixXd::Zero(rows, c.modes))));
    }
    Tape::Id s = tape.ifft_real(tape.pad_modes(kept, half), n);
    Tape::Id z = tape.add(s, tape.channel_linear(ids.bypass, ids.bias, v));
    if (model.activations_enabled && i + 1 < c.depth) z = tape.gelu(z);
    if (wdrop) {
      const Eigen::MatrixXd mask = weight_dropout_mask(
          tape.value(z).rows(), tape.value(z).cols(), c.weight_dropout, *rng);
      z = tape.multiply(z, tape.constant(Value::real(mask)));
    }
    v = z;
  }

  Tape::Id h = tape.channel_linear(binding.proj_w, binding.proj_b, v);
  if (model.activations_enabled) h = tape.gelu(h);

  TapeForward r;
  r.out = tape.channel_linear(binding.mean_w, binding.mean_b, h);
  if (c.head == HeadKind::reparam) {
    Tape::Id pre = tape.channel_linear(binding.std_w, binding.std_b, h);
    const Eigen::Index rows = tape.value(pre).rows();
    const Eigen::Index cols = tape.value(pre).cols();
    r.stddev = tape.add(
        tape.softplus(pre),
        tape.constant(Value::real(Eigen::MatrixXd::Constant(rows, cols, 1e-6))));
  }
  return r;
}

std::vector<Eigen::MatrixXd> sample_pno_d(const OperatorModel& model,
                                          const Eigen::MatrixXd& a, int m,
                                          Rng& rng) {
  const OperatorConfig& c = model.config;
  if (c.weight_dropout <= 0.0 && c.fourier_dropout <= 0.0)
    throw config_error(
        "dropout sampling with all rates zero gives a degenerate ensemble");
  if (m < 1) throw config_error("ensemble size must be >= 1");
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j)
    out.push_back(model_forward(model, a, ForwardMode::train, &rng).out);
  return out;
}

std::vector<Eigen::MatrixXd> sample_pno_r(const OperatorModel& model,
                                          const Eigen::MatrixXd& a, int m,
                                          Rng& rng) {
  const OperatorConfig& c = model.config;
  if (c.head != HeadKind::reparam)
    throw config_error("reparam sampling needs a reparam head");
  if (m < 1) throw config_error("ensemble size must be >= 1");
  const ForwardResult base = model_forward(model, a, ForwardMode::eval, nullptr);
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    Eigen::MatrixXd eps(base.out.rows(), base.out.cols());
    for (Eigen::Index r = 0; r < eps.rows(); ++r)
      for (Eigen::Index cc = 0; cc < eps.cols(); ++cc) eps(r, cc) = rng.normal();
    out.push_back(base.out + base.stddev.cwiseProduct(eps));
  }
  return out;
}

std::vector<Tape::Id> sample_pno_d_tape(Tape& tape, const ModelBinding& binding,
                                        const Eigen::MatrixXd& a, int m,
                                        Rng& rng) {
  const OperatorConfig& c = binding.model->config;
  if (c.weight_dropout <= 0.0 && c.fourier_dropout <= 0.0)
    throw config_error(
        "dropout sampling with all rates zero gives a degenerate ensemble");
  if (m < 1) throw config_error("ensemble size must be >= 1");
  std::vector<Tape::Id> out;
  for (int j = 0; j < m; ++j)
    out.push_back(model_forward_tape(tape, binding, a, ForwardMode::train, &rng).out);
  return out;
}

std::vector<Tape::Id> sample_pno_r_tape(Tape& tape, const ModelBinding& binding,
                                        const Eigen::MatrixXd& a, int m,
                                        Rng& rng) {
  const OperatorConfig& c = binding.model->config;
  if (c.head != HeadKind::reparam)
    throw config_error("reparam sampling needs a reparam head");
  if (m < 1) throw config_error("ensemble size must be >= 1");
  const TapeForward base =
      model_forward_tape(tape, binding, a, ForwardMode::train, &rng);
  const Eigen::Index rows = tape.value(base.out).rows();
  const Eigen::Index cols = tape.value(base.out).cols();
  std::vector<Tape::Id> out;
  for (int j = 0; j < m; ++j) {
    Eigen::MatrixXd eps(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index cc = 0; cc < cols; ++cc) eps(r, cc) = rng.normal();
    const Tape::Id noise =
        tape.multiply(base.stddev, tape.constant(Value::real(std::move(eps))));
    out.push_back(tape.add(base.out, noise));
  }
  return out;
}

}  // namespace pno
