#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "pno/errors.hpp"
#include "pno/metrics.hpp"
#include "pno/rng.hpp"
#include "pno/training.hpp"

using namespace pno;
namespace fs = std::filesystem;

namespace {

DataConfig gaussian_config() {
  DataConfig c;
  c.id = "bench";
  c.generator = "gaussian";
  c.seed = 9;
  c.n_train = 32;
  c.n_val = 8;
  c.n_test = 8;
  c.grid_points = 32;
  c.t_in = 1;
  c.t_out = 1;
  c.k_smooth = 8;
  c.sigma_eta = 0.3;
  c.domain_length = 1.0;
  return c;
}

TrainConfig small_pno_r() {
  TrainConfig t;
  t.method = "pno_r";
  t.seed = 3;
  t.m_train = 3;
  t.learning_rate = 2e-3;
  t.batch_size = 8;
  t.max_epochs = 40;
  t.patience = 40;
  t.modes = 8;
  t.width = 8;
  t.depth = 2;
  t.projection_width = 16;
  return t;
}

// The validation loss fit_model computes for a model, replicated.
double validation_loss(const OperatorModel& model, const Dataset& ds,
                       const TrainConfig& config) {
  double acc = 0.0;
  for (std::size_t i = 0; i < ds.val.inputs.size(); ++i) {
    Rng noise = Rng::substream(config.seed, "val-noise",
                               static_cast<std::uint64_t>(i));
    acc += eval_loss(model, config.method,
                     ds.input_norm.apply(ds.val.inputs[i]),
                     ds.target_norm.apply(ds.val.targets[i]), config.m_train,
                     noise);
  }
  return acc / static_cast<double>(ds.val.inputs.size());
}

std::vector<Value> constant_gradients(OperatorModel& model, double g) {
  std::vector<Value> grads;
  for (Value* p : model.parameters()) {
    Value v = Value::zeros_like(*p);
    v.re.setConstant(g);
    if (v.is_complex()) v.im.setConstant(g);
    grads.push_back(std::move(v));
  }
  return grads;
}

}  // namespace

TEST_CASE("first Adam steps match the closed form") {
  TrainConfig tc = small_pno_r();
  OperatorModel model = build_model(tc, 1, 1);
  const OperatorModel before = model;
  OptimizerState opt = OptimizerState::like(model);

  // Every entry gets gradient 2: the bias-corrected first step is
  // -lr * g / (|g| + eps) for every coordinate, and the second step with the
  // same gradient repeats it exactly.
  const double lr = 1e-3;
  const double delta = -lr * 2.0 / (2.0 + 1e-8);
  const std::vector<Value> grads = constant_gradients(model, 2.0);
  adam_step(model, opt, grads, lr);
  CHECK(opt.step == 1);

  auto p_before = const_cast<OperatorModel&>(before).parameters();
  auto p_after = model.parameters();
  for (std::size_t i = 0; i < p_after.size(); ++i) {
    const Eigen::MatrixXd diff =
        p_after[i]->re - p_before[i]->re -
        Eigen::MatrixXd::Constant(p_after[i]->rows(), p_after[i]->cols(), delta);
    CHECK(diff.cwiseAbs().maxCoeff() < 1e-15);
    if (p_after[i]->is_complex()) {
      const Eigen::MatrixXd idiff =
          p_after[i]->im - p_before[i]->im -
          Eigen::MatrixXd::Constant(p_after[i]->rows(), p_after[i]->cols(),
                                    delta);
      CHECK(idiff.cwiseAbs().maxCoeff() < 1e-15);
    }
  }

  adam_step(model, opt, grads, lr);
  CHECK(opt.step == 2);
  for (std::size_t i = 0; i < p_after.size(); ++i) {
    const Eigen::MatrixXd diff =
        p_after[i]->re - p_before[i]->re -
        Eigen::MatrixXd::Constant(p_after[i]->rows(), p_after[i]->cols(),
                                  2.0 * delta);
    CHECK(diff.cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("gradient clipping rescales to the global norm") {
  std::vector<Value> grads;
  grads.push_back(Value::real(Eigen::MatrixXd::Constant(1, 1, 3.0)));
  grads.push_back(Value::real(Eigen::MatrixXd::Constant(1, 1, 4.0)));

  // Norm 5 clipped to 1: entries scale by 1/5 and the post-clip norm is 1.
  CHECK(clip_gradients(grads, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(grads[0].re(0, 0) == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(grads[1].re(0, 0) == doctest::Approx(0.8).epsilon(1e-14));

  // Already inside the ball: untouched, norm reported as is.
  std::vector<Value> small;
  small.push_back(Value::real(Eigen::MatrixXd::Constant(1, 1, 0.3)));
  small.push_back(Value::real(Eigen::MatrixXd::Constant(1, 1, 0.4)));
  CHECK(clip_gradients(small, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(small[0].re(0, 0) == 0.3);

  // Imaginary parts participate in the norm.
  std::vector<Value> cplx;
  cplx.push_back(Value::complex(Eigen::MatrixXd::Constant(1, 1, 3.0),
                                Eigen::MatrixXd::Constant(1, 1, 4.0)));
  CHECK(clip_gradients(cplx, 2.5) == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(cplx[0].re(0, 0) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(cplx[0].im(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("configuration validation") {
  TrainConfig tc = small_pno_r();
  tc.m_train = 1;
  CHECK_THROWS_AS(tc.validate(), config_error);
  tc = small_pno_r();
  tc.method = "diffusion";
  CHECK_THROWS_AS(tc.validate(), config_error);
  tc = small_pno_r();
  tc.method = "pno_d";
  tc.weight_dropout = 0.0;
  tc.fourier_dropout = 0.0;
  CHECK_THROWS_AS(tc.validate(), config_error);
  tc.weight_dropout = 0.1;
  tc.validate();
  tc = small_pno_r();
  tc.method = "mcd";
  tc.weight_dropout = 0.0;
  CHECK_THROWS_AS(tc.validate(), config_error);
  tc = small_pno_r();
  tc.learning_rate = 0.0;
  CHECK_THROWS_AS(tc.validate(), config_error);
}

TEST_CASE("training on the smoothing benchmark reduces the score") {
  const Dataset ds = generate_dataset(gaussian_config());
  const TrainConfig tc = small_pno_r();
  const FitResult result = fit(ds, tc);

  REQUIRE(!result.history.empty());
  CHECK(result.epochs_run == static_cast<int>(result.history.size()));
  const double first = result.history.front().train_loss;
  const double last = result.history.back().train_loss;
  CHECK(last < 0.5 * first);

  // Bookkeeping: best_val is the running minimum, the stored model attains
  // exactly that value, epochs are 1-based and contiguous.
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  for (const auto& row : result.history) {
    if (row.val_loss < best) {
      best = row.val_loss;
      best_epoch = row.epoch;
    }
    CHECK(row.learning_rate == tc.learning_rate);  // halving disabled
    CHECK(std::isfinite(row.max_grad_norm));
  }
  CHECK(result.best_val == best);
  CHECK(result.best_epoch == best_epoch);
  for (std::size_t i = 0; i < result.history.size(); ++i)
    CHECK(result.history[i].epoch == static_cast<int>(i));
  CHECK(validation_loss(result.model, ds, tc) ==
        doctest::Approx(result.best_val).epsilon(1e-12));
}

TEST_CASE("early stopping and learning-rate halving follow the history") {
  const Dataset ds = generate_dataset(gaussian_config());
  TrainConfig tc = small_pno_r();
  tc.max_epochs = 30;
  tc.patience = 2;
  const FitResult result = fit(ds, tc);
  CHECK(result.epochs_run <= 30);

  // Strict-improvement rule: the run ends at max_epochs or exactly when the
  // non-improving streak reaches the patience.
  double best = std::numeric_limits<double>::infinity();
  int streak = 0;
  for (const auto& row : result.history) {
    if (row.val_loss < best) {
      best = row.val_loss;
      streak = 0;
    } else {
      ++streak;
    }
  }
  CHECK(streak <= tc.patience);
  CHECK((streak == tc.patience || result.epochs_run == tc.max_epochs));
  if (result.epochs_run < tc.max_epochs)
    CHECK(result.epochs_run == result.best_epoch + tc.patience + 1);

  // Halving: the rate recorded for an epoch is the one it trained with, and
  // it halves after every lr_halving_patience epochs without improvement.
  TrainConfig th = small_pno_r();
  th.max_epochs = 20;
  th.patience = 20;
  th.lr_halving = true;
  th.lr_halving_patience = 1;
  const FitResult halved = fit(ds, th);
  double expect_lr = th.learning_rate;
  double hbest = std::numeric_limits<double>::infinity();
  int hstreak = 0;
  bool ever_halved = false;
  for (const auto& row : halved.history) {
    CHECK(row.learning_rate == expect_lr);
    if (row.val_loss < hbest) {
      hbest = row.val_loss;
      hstreak = 0;
    } else if (++hstreak % th.lr_halving_patience == 0) {
      expect_lr /= 2.0;
      ever_halved = true;
    }
  }
  CHECK(ever_halved);
}

TEST_CASE("the whole fit is seed-deterministic") {
  const Dataset ds = generate_dataset(gaussian_config());
  TrainConfig tc = small_pno_r();
  tc.max_epochs = 6;
  const FitResult a = fit(ds, tc);
  const FitResult b = fit(ds, tc);

  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
    CHECK(a.history[i].max_grad_norm == b.history[i].max_grad_norm);
  }
  auto pa = const_cast<FitResult&>(a).model.parameters();
  auto pb = const_cast<FitResult&>(b).model.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->re == pb[i]->re);
    CHECK(pa[i]->im == pb[i]->im);
  }

  TrainConfig other = tc;
  other.seed = 4;
  const FitResult c = fit(ds, other);
  CHECK(a.history.front().train_loss != c.history.front().train_loss);
}

TEST_CASE("dropout methods train on their own losses") {
  const Dataset ds = generate_dataset(gaussian_config());
  TrainConfig tc = small_pno_r();
  tc.method = "mcd";
  tc.weight_dropout = 0.2;
  tc.max_epochs = 4;
  const FitResult mcd = fit(ds, tc);
  CHECK(mcd.epochs_run == 4);
  for (const auto& row : mcd.history) {
    CHECK(std::isfinite(row.train_loss));
    CHECK(std::isfinite(row.val_loss));
  }

  tc.method = "pno_d";
  tc.m_train = 3;
  const FitResult pd = fit(ds, tc);
  CHECK(pd.epochs_run == 4);
  CHECK(std::isfinite(pd.best_val));
}

TEST_CASE("taped losses agree with their concrete counterparts") {
  const Dataset ds = generate_dataset(gaussian_config());
  const TrainConfig tc = small_pno_r();
  const OperatorModel model = build_model(tc, ds.t_in, ds.t_out);
  const Eigen::MatrixXd in = ds.input_norm.apply(ds.train.inputs[0]);
  const Eigen::MatrixXd out = ds.target_norm.apply(ds.train.targets[0]);

  // Without dropout the pno_r training loss and the evaluation loss draw the
  // same members from the same stream.
  Tape tape;
  const ModelBinding binding = bind_model(tape, model);
  Rng r1 = Rng::substream(3, "train-noise", 0);
  Rng r2 = Rng::substream(3, "train-noise", 0);
  const Tape::Id loss = loss_pno(tape, binding, in, out, tc.m_train, r1);
  const double eager = eval_loss(model, "pno_r", in, out, tc.m_train, r2);
  CHECK(tape.value(loss).re(0, 0) == doctest::Approx(eager).epsilon(1e-12));
  CHECK(tape.value(loss).re(0, 0) >= 0.0);
}

TEST_CASE("evaluation produces consistent per-item and aggregate records") {
  const Dataset ds = generate_dataset(gaussian_config());
  TrainConfig tc = small_pno_r();
  tc.max_epochs = 8;
  const FitResult result = fit(ds, tc);

  const EvaluationOutput ev =
      evaluate_model(result.model, tc.method, 3, ds.id, ds.test,
                     ds.input_norm, ds.target_norm, 50, 1234, result.epochs_run);
  REQUIRE(ev.per_item.size() == ds.test.inputs.size());
  CHECK(ev.aggregate.item == "mean");
  CHECK(ev.aggregate.method == "pno_r");
  CHECK(ev.aggregate.dataset_id == "bench");
  CHECK(ev.aggregate.seed == 3);
  CHECK(ev.aggregate.epochs == result.epochs_run);

  double es = 0.0, crps = 0.0, cov = 0.0;
  for (const auto& row : ev.per_item) {
    es += row.es;
    crps += row.crps;
    cov += row.coverage_95;
    CHECK(row.l2 >= 0.0);
    CHECK(std::isfinite(row.es));
    CHECK(row.coverage_95 >= 0.0);
    CHECK(row.coverage_95 <= 1.0);
    CHECK(row.width_95 >= 0.0);
    CHECK(std::isfinite(row.nll));
  }
  const double n = static_cast<double>(ev.per_item.size());
  CHECK(ev.aggregate.es == doctest::Approx(es / n).epsilon(1e-14));
  CHECK(ev.aggregate.crps == doctest::Approx(crps / n).epsilon(1e-14));
  CHECK(ev.aggregate.coverage_95 == doctest::Approx(cov / n).epsilon(1e-14));

  // Same evaluation seed, same records; different seed, different draws.
  const EvaluationOutput ev2 =
      evaluate_model(result.model, tc.method, 3, ds.id, ds.test,
                     ds.input_norm, ds.target_norm, 50, 1234, result.epochs_run);
  CHECK(ev2.aggregate.es == ev.aggregate.es);
  CHECK(ev2.per_item.front().crps == ev.per_item.front().crps);
  const EvaluationOutput ev3 =
      evaluate_model(result.model, tc.method, 3, ds.id, ds.test,
                     ds.input_norm, ds.target_norm, 50, 999, result.epochs_run);
  CHECK(ev3.per_item.front().es != ev.per_item.front().es);

  // CSV round-trip at full precision.
  const fs::path dir = fs::temp_directory_path() / "pno_training_test";
  fs::create_directories(dir);
  const fs::path csv = dir / "metrics.csv";
  std::vector<MetricsRecord> rows = ev.per_item;
  rows.push_back(ev.aggregate);
  write_metrics_csv(csv, rows);
  const std::vector<MetricsRecord> back = read_metrics_csv(csv);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].method == rows[i].method);
    CHECK(back[i].item == rows[i].item);
    CHECK(back[i].l2 == rows[i].l2);
    CHECK(back[i].l2_rel == rows[i].l2_rel);
    CHECK(back[i].es == rows[i].es);
    CHECK(back[i].crps == rows[i].crps);
    CHECK(back[i].nll == rows[i].nll);
    CHECK(back[i].coverage_95 == rows[i].coverage_95);
    CHECK(back[i].width_95 == rows[i].width_95);
    CHECK(back[i].nll_floored == rows[i].nll_floored);
    CHECK(back[i].epochs == rows[i].epochs);
  }
  fs::remove_all(dir);
}
