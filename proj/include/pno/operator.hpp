#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "pno/rng.hpp"
#include "pno/tape.hpp"

namespace pno {

enum class HeadKind { deterministic, reparam };

struct OperatorConfig {
  int t_in = 1;
  int t_out = 1;
  int modes = 16;       // retained Fourier modes per spectral block
  int width = 24;       // hidden channels
  int depth = 3;        // spectral blocks
  int projection_width = 64;
  HeadKind head = HeadKind::deterministic;
  double weight_dropout = 0.0;   // elementwise on hidden activations
  double fourier_dropout = 0.0;  // whole retained modes, DC exempt
  void validate() const;
};

struct SpectralBlock {
  Value modes_weight;   // complex (modes*width, width), one block per mode
  Value bypass_weight;  // real (width, width)
  Value bias;           // real (width, 1)
};

// Resolution-free 1-D spectral operator: lift -> [spectral conv + pointwise
// bypass, GELU between blocks] x depth -> pointwise projection; the head is a
// single output map, or a mean map plus a softplus standard-deviation map.
struct OperatorModel {
  OperatorConfig config;
  Value lift_w, lift_b;
  std::vector<SpectralBlock> blocks;
  Value proj_w, proj_b;
  Value mean_w, mean_b;
  Value std_w, std_b;  // reparam head only
  // Spectral-block GELUs; switched off only to probe linearity in tests.
  bool activations_enabled = true;

  static OperatorModel init(const OperatorConfig& config, Rng& rng);

  // Canonical parameter order: lift, blocks in order (modes, bypass, bias),
  // projection, mean head, std head. Initialization draws, gradient readout,
  // the optimizer state, and checkpoints all follow it.
  void for_each_parameter(
      const std::function<void(const std::string&, Value&)>& fn);
  void for_each_parameter(
      const std::function<void(const std::string&, const Value&)>& fn) const;
  std::vector<Value*> parameters();
};

// Inverted-dropout masks. Entries are 0 with probability p, else 1/(1-p).
Eigen::MatrixXd weight_dropout_mask(Eigen::Index rows, Eigen::Index cols,
                                    double p, Rng& rng);
// Per-mode scales shared by all channels; the DC entry is never dropped and
// never rescaled (rescaling an always-kept mode would bias its expectation).
Eigen::VectorXd fourier_dropout_mask(Eigen::Index k, double p, Rng& rng);

// Standalone dropout ops on concrete arrays.
Eigen::MatrixXd apply_weight_dropout(const Eigen::MatrixXd& activations,
                                     double p, Rng& rng);
// modes is (channels, k); one Bernoulli per retained mode.
Eigen::MatrixXcd apply_fourier_dropout(const Eigen::MatrixXcd& modes, double p,
                                       Rng& rng);

// One spectral block on a concrete field v (width, n): truncate the spectrum
// to `modes`, contract channels per mode, optionally scale modes by
// fourier_mask, invert, add bypass and bias, optionally apply GELU.
Eigen::MatrixXd spectral_conv_forward(const SpectralBlock& block, int modes,
                                      const Eigen::MatrixXd& v,
                                      const Eigen::VectorXd* fourier_mask,
                                      bool activation);

enum class ForwardMode { train, eval };

struct ForwardResult {
  Eigen::MatrixXd out;     // head output; the mean under a reparam head
  Eigen::MatrixXd stddev;  // reparam head only, else empty
};

// Dropout is active only in train mode; rng may be null otherwise.
ForwardResult model_forward(const OperatorModel& model, const Eigen::MatrixXd& a,
                            ForwardMode mode, Rng* rng);

// Tape-recorded forward. Parameters enter the tape once per binding; masks
// and noise enter as constants, drawn in the same order as the concrete
// forward.
struct ModelBinding {
  struct BlockIds {
    Tape::Id modes = -1, bypass = -1, bias = -1;
  };
  Tape::Id lift_w = -1, lift_b = -1;
  std::vector<BlockIds> blocks;
  Tape::Id proj_w = -1, proj_b = -1;
  Tape::Id mean_w = -1, mean_b = -1;
  Tape::Id std_w = -1, std_b = -1;
  std::vector<Tape::Id> all;  // canonical order
  const OperatorModel* model = nullptr;
};

ModelBinding bind_model(Tape& tape, const OperatorModel& model);

struct TapeForward {
  Tape::Id out = -1;
  Tape::Id stddev = -1;
};

TapeForward model_forward_tape(Tape& tape, const ModelBinding& binding,
                               const Eigen::MatrixXd& a, ForwardMode mode,
                               Rng* rng);

// Ensemble draws. Dropout sampling runs M stochastic forwards (this is also
// the mechanism behind the dropout baseline); the reparam head draws M
// Gaussian perturbations around one deterministic backbone pass.
std::vector<Eigen::MatrixXd> sample_pno_d(const OperatorModel& model,
                                          const Eigen::MatrixXd& a, int m,
                                          Rng& rng);
std::vector<Eigen::MatrixXd> sample_pno_r(const OperatorModel& model,
                                          const Eigen::MatrixXd& a, int m,
                                          Rng& rng);

std::vector<Tape::Id> sample_pno_d_tape(Tape& tape, const ModelBinding& binding,
                                        const Eigen::MatrixXd& a, int m,
                                        Rng& rng);
std::vector<Tape::Id> sample_pno_r_tape(Tape& tape, const ModelBinding& binding,
                                        const Eigen::MatrixXd& a, int m,
                                        Rng& rng);

}  // namespace pno
