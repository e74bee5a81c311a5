#include "pno/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "pno/errors.hpp"
#include "pno/grid.hpp"
#include "pno/scoring.hpp"

namespace pno {

namespace {

double loss_weight(const Eigen::MatrixXd& target) {
  return 1.0 / static_cast<double>(target.size());
}

PredictiveEnsemble ensemble_of(const std::vector<Eigen::MatrixXd>& members) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(members.size()),
                       members[0].size());
  for (std::size_t j = 0; j < members.size(); ++j)
    rows.row(static_cast<Eigen::Index>(j)) = flatten_rowwise(members[j]);
  return PredictiveEnsemble(std::move(rows), 1.0);
}

std::vector<Value> zero_grads_like(OperatorModel& model) {
  std::vector<Value> grads;
  model.for_each_parameter([&](const std::string&, Value& v) {
    grads.push_back(Value::zeros_like(v));
  });
  return grads;
}

}  // namespace

OptimizerState OptimizerState::like(const OperatorModel& model) {
  OptimizerState opt;
  model.for_each_parameter([&](const std::string&, const Value& v) {
    opt.m.push_back(Value::zeros_like(v));
    opt.v.push_back(Value::zeros_like(v));
  });
  return opt;
}

double clip_gradients(std::vector<Value>& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw config_error("clip norm must be positive");
  double sq = 0.0;
  for (const Value& g : grads) {
    sq += g.re.squaredNorm();
    if (g.is_complex()) sq += g.im.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return norm;
  const double scale = max_norm / norm;
  for (Value& g : grads) {
    g.re *= scale;
    if (g.is_complex()) g.im *= scale;
  }
  return max_norm;
}

void adam_step(OperatorModel& model, OptimizerState& opt,
               const std::vector<Value>& grads, double lr) {
  ++opt.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  std::size_t i = 0;
  auto update = [&](Eigen::MatrixXd& theta, Eigen::MatrixXd& m,
                    Eigen::MatrixXd& v, const Eigen::MatrixXd& g) {
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseProduct(g);
    const Eigen::ArrayXXd mhat = m.array() / bc1;
    const Eigen::ArrayXXd vhat = v.array() / bc2;
    theta.array() -= lr * mhat / (vhat.sqrt() + opt.eps);
  };
  model.for_each_parameter([&](const std::string&, Value& p) {
    if (i >= grads.size()) throw config_error("gradient list too short");
    update(p.re, opt.m[i].re, opt.v[i].re, grads[i].re);
    if (p.is_complex()) update(p.im, opt.m[i].im, opt.v[i].im, grads[i].im);
    ++i;
  });
  if (i != grads.size()) throw config_error("gradient list too long");
}

Tape::Id loss_pno(Tape& tape, const ModelBinding& binding,
                  const Eigen::MatrixXd& input, const Eigen::MatrixXd& target,
                  int m, Rng& rng) {
  if (m < 2) throw config_error("ensemble loss needs m >= 2");
  const std::vector<Tape::Id> members =
      binding.model->config.head == HeadKind::reparam
          ? sample_pno_r_tape(tape, binding, input, m, rng)
          : sample_pno_d_tape(tape, binding, input, m, rng);
  const Tape::Id obs = tape.constant(Value::real(target));
  return energy_score_on_tape(tape, members, obs, loss_weight(target));
}

Tape::Id loss_l2(Tape& tape, const ModelBinding& binding,
                 const Eigen::MatrixXd& input, const Eigen::MatrixXd& target,
                 Rng& rng) {
  const TapeForward fwd =
      model_forward_tape(tape, binding, input, ForwardMode::train, &rng);
  const Tape::Id obs = tape.constant(Value::real(target));
  return tape.grid_norm(tape.subtract(fwd.out, obs), loss_weight(target));
}

double eval_loss(const OperatorModel& model, const std::string& method,
                 const Eigen::MatrixXd& input, const Eigen::MatrixXd& target,
                 int m, Rng& rng) {
  if (method == "mcd") {
    const ForwardResult fwd = model_forward(model, input, ForwardMode::eval, nullptr);
    return std::sqrt(loss_weight(target) * (fwd.out - target).squaredNorm());
  }
  const std::vector<Eigen::MatrixXd> members =
      method == "pno_r" ? sample_pno_r(model, input, m, rng)
                        : sample_pno_d(model, input, m, rng);
  return energy_score_estimator(ensemble_of(members),
                                GridFunction(flatten_rowwise(target), 1.0));
}

OperatorConfig operator_config_for(const TrainConfig& config, int t_in,
                                   int t_out) {
  OperatorConfig oc;
  oc.t_in = t_in;
  oc.t_out = t_out;
  oc.modes = config.modes;
  oc.width = config.width;
  oc.depth = config.depth;
  oc.projection_width = config.projection_width;
  oc.head = config.method == "pno_r" ? HeadKind::reparam : HeadKind::deterministic;
  oc.weight_dropout = config.weight_dropout;
  oc.fourier_dropout = config.fourier_dropout;
  return oc;
}

OperatorModel build_model(const TrainConfig& config, int t_in, int t_out) {
  config.validate();
  Rng rng = Rng::substream(config.seed, "init");
  return OperatorModel::init(operator_config_for(config, t_in, t_out), rng);
}

FitResult fit_model(OperatorModel model, const Dataset& ds,
                    const TrainConfig& config) {
  config.validate();
  const int n_train = static_cast<int>(ds.train.inputs.size());
  const int n_val = static_cast<int>(ds.val.inputs.size());
  if (n_train < 1 || n_val < 1)
    throw config_error("training needs non-empty train and val splits");

  // Normalize once up front; training works entirely in normalized units.
  std::vector<Eigen::MatrixXd> tr_in(ds.train.inputs.size()),
      tr_out(ds.train.targets.size()), va_in(ds.val.inputs.size()),
      va_out(ds.val.targets.size());
  for (std::size_t i = 0; i < ds.train.inputs.size(); ++i) {
    tr_in[i] = ds.input_norm.apply(ds.train.inputs[i]);
    tr_out[i] = ds.target_norm.apply(ds.train.targets[i]);
  }
  for (std::size_t i = 0; i < ds.val.inputs.size(); ++i) {
    va_in[i] = ds.input_norm.apply(ds.val.inputs[i]);
    va_out[i] = ds.target_norm.apply(ds.val.targets[i]);
  }

  OptimizerState opt = OptimizerState::like(model);
  const std::size_t n_params = opt.m.size();
  double lr = config.learning_rate;

  FitResult result;
  result.best_val = std::numeric_limits<double>::infinity();
  std::vector<Value> best_params;
  model.for_each_parameter(
      [&](const std::string&, Value& v) { best_params.push_back(v); });

  std::vector<int> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), 0);
  int since_improve = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng =
        Rng::substream(config.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    double max_step_norm = 0.0;
    int position = 0;
    while (position < n_train) {
      const int batch =
          std::min(config.batch_size, n_train - position);
      std::vector<Value> grads;
      double batch_loss = 0.0;
      for (int b = 0; b < batch; ++b, ++position) {
        const int item = order[static_cast<std::size_t>(position)];
        Rng noise = Rng::substream(
            config.seed, "train-noise",
            static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(n_train) +
                static_cast<std::uint64_t>(position));
        Tape tape;
        const ModelBinding binding = bind_model(tape, model);
        const Tape::Id root =
            config.method == "mcd"
                ? loss_l2(tape, binding, tr_in[item], tr_out[item], noise)
                : loss_pno(tape, binding, tr_in[item], tr_out[item],
                           config.m_train, noise);
        const double loss = tape.value(root).re(0, 0);
        if (!std::isfinite(loss))
          throw train_error("loss became non-finite at epoch " +
                            std::to_string(epoch) + ", batch starting at item " +
                            std::to_string(position - b));
        batch_loss += loss;
        tape.backward(root);
        if (grads.empty()) grads = zero_grads_like(model);
        for (std::size_t p = 0; p < n_params; ++p) {
          const Value g = tape.grad_of(binding.all[p]);
          grads[p].re += g.re;
          if (g.is_complex()) grads[p].im += g.im;
        }
      }
      const double inv_b = 1.0 / static_cast<double>(batch);
      for (Value& g : grads) {
        g.re *= inv_b;
        if (g.is_complex()) g.im *= inv_b;
      }
      const double step_norm = clip_gradients(grads, config.clip_norm);
      max_step_norm = std::max(max_step_norm, step_norm);
      adam_step(model, opt, grads, lr);
      epoch_loss += batch_loss;
    }
    epoch_loss /= static_cast<double>(n_train);

    double val_loss = 0.0;
    for (int i = 0; i < n_val; ++i) {
      Rng noise =
          Rng::substream(config.seed, "val-noise", static_cast<std::uint64_t>(i));
      val_loss += eval_loss(model, config.method, va_in[static_cast<std::size_t>(i)],
                            va_out[static_cast<std::size_t>(i)], config.m_train,
                            noise);
    }
    val_loss /= static_cast<double>(n_val);
    if (!std::isfinite(val_loss))
      throw train_error("validation loss became non-finite at epoch " +
                        std::to_string(epoch));

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.history.push_back(
        {epoch, epoch_loss, val_loss, seconds, max_step_norm, lr});
    result.epochs_run = epoch + 1;

    if (val_loss < result.best_val) {
      result.best_val = val_loss;
      result.best_epoch = epoch;
      since_improve = 0;
      std::size_t p = 0;
      model.for_each_parameter(
          [&](const std::string&, Value& v) { best_params[p++] = v; });
    } else {
      ++since_improve;
      if (config.lr_halving && since_improve % config.lr_halving_patience == 0)
        lr *= 0.5;
      if (since_improve >= config.patience) break;
    }
  }

  std::size_t p = 0;
  model.for_each_parameter(
      [&](const std::string&, Value& v) { v = best_params[p++]; });
  result.model = std::move(model);
  return result;
}

FitResult fit(const Dataset& ds, const TrainConfig& config) {
  return fit_model(build_model(config, ds.t_in, ds.t_out), ds, config);
}

}  // namespace pno
