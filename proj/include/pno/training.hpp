#pragma once

#include <Eigen/Core>
#include <vector>

#include "pno/config.hpp"
#include "pno/dataset.hpp"
#include "pno/operator.hpp"

namespace pno {

// Adam moments in canonical parameter order.
struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Value> m;
  std::vector<Value> v;

  static OptimizerState like(const OperatorModel& model);
};

// Scales all gradients in place so the global norm is at most max_norm;
// returns the post-clip norm.
double clip_gradients(std::vector<Value>& grads, double max_norm);

// One bias-corrected Adam update over the model parameters.
void adam_step(OperatorModel& model, OptimizerState& opt,
               const std::vector<Value>& grads, double lr);

// Per-item training losses on a tape, in normalized units. The ensemble loss
// scores m sampled members against the target; the plain loss is the grid
// norm of the residual of a single (dropout-active) pass.
Tape::Id loss_pno(Tape& tape, const ModelBinding& binding,
                  const Eigen::MatrixXd& input, const Eigen::MatrixXd& target,
                  int m, Rng& rng);
Tape::Id loss_l2(Tape& tape, const ModelBinding& binding,
                 const Eigen::MatrixXd& input, const Eigen::MatrixXd& target,
                 Rng& rng);

// Concrete counterpart used for validation: the same loss family the method
// trains with (the plain loss evaluates without dropout).
double eval_loss(const OperatorModel& model, const std::string& method,
                 const Eigen::MatrixXd& input, const Eigen::MatrixXd& target,
                 int m, Rng& rng);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
  double max_grad_norm = 0.0;  // largest post-clip step norm in the epoch
  double learning_rate = 0.0;
};

struct FitResult {
  OperatorModel model;  // parameters of the best validation epoch
  std::vector<EpochRecord> history;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val = 0.0;
};

// The operator configuration implied by a training configuration and the
// window sizes of the dataset it trains on.
OperatorConfig operator_config_for(const TrainConfig& config, int t_in,
                                   int t_out);

OperatorModel build_model(const TrainConfig& config, int t_in, int t_out);

// Mini-batch Adam with global-norm clipping, per-epoch validation, and early
// stopping after `patience` epochs without improvement.
FitResult fit_model(OperatorModel model, const Dataset& ds,
                    const TrainConfig& config);
FitResult fit(const Dataset& ds, const TrainConfig& config);

}  // namespace pno
