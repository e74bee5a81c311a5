#include "pno/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "pno/operator.hpp"
#include "pno/rng.hpp"
#include "pno/tape.hpp"
#include "pno/training.hpp"

namespace pno {

namespace {

constexpr double kStep = 1e-6;
constexpr double kPrimitiveTol = 1e-5;
constexpr double kPipelineTol = 1e-4;

double rel_err(double ad, double fd) {
  return std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
}

Eigen::MatrixXd rand_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

Value rand_real(Rng& rng, Eigen::Index r, Eigen::Index c) {
  return Value::real(rand_matrix(rng, r, c));
}

Value rand_complex(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd re = rand_matrix(rng, r, c);
  return Value::complex(std::move(re), rand_matrix(rng, r, c));
}

// A primitive under test: leaf inputs plus a builder that applies the op and
// collapses its output to a real scalar root (via a captured random constant,
// so every output entry influences the root).
struct PrimitiveCheck {
  std::string name;
  std::vector<Value> inputs;
  std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)> run;
};

double eval_check(const PrimitiveCheck& check, const std::vector<Value>& inputs) {
  Tape tape;
  std::vector<Tape::Id> ids;
  ids.reserve(inputs.size());
  for (const auto& v : inputs) ids.push_back(tape.leaf(v));
  return tape.value(check.run(tape, ids)).re(0, 0);
}

GradCheckRow run_primitive(const PrimitiveCheck& check) {
  Tape tape;
  std::vector<Tape::Id> ids;
  ids.reserve(check.inputs.size());
  for (const auto& v : check.inputs) ids.push_back(tape.leaf(v));
  tape.backward(check.run(tape, ids));

  double worst = 0.0;
  for (std::size_t k = 0; k < check.inputs.size(); ++k) {
    const Value grad = tape.grad_of(ids[k]);
    const bool complex = check.inputs[k].is_complex();
    for (int part = 0; part < (complex ? 2 : 1); ++part) {
      const Eigen::MatrixXd& g = part == 0 ? grad.re : grad.im;
      const Eigen::MatrixXd& base =
          part == 0 ? check.inputs[k].re : check.inputs[k].im;
      for (Eigen::Index i = 0; i < base.rows(); ++i) {
        for (Eigen::Index j = 0; j < base.cols(); ++j) {
          auto perturbed = check.inputs;
          Eigen::MatrixXd& target =
              part == 0 ? perturbed[k].re : perturbed[k].im;
          target(i, j) += kStep;
          const double up = eval_check(check, perturbed);
          target(i, j) -= 2.0 * kStep;
          const double down = eval_check(check, perturbed);
          worst = std::max(worst, rel_err(g(i, j), (up - down) / (2.0 * kStep)));
        }
      }
    }
  }
  return {check.name, worst, kPrimitiveTol, worst < kPrimitiveTol};
}

std::vector<PrimitiveCheck> make_primitive_checks(std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "grad-prim");
  std::vector<PrimitiveCheck> checks;

  auto real_collapse = [](Tape& tape, Tape::Id out, const Value& c) {
    return tape.reduce_sum(tape.multiply(out, tape.constant(c)));
  };

  {
    Value c = rand_complex(rng, 2, 3);
    checks.push_back({"add",
                      {rand_complex(rng, 2, 3), rand_complex(rng, 2, 3)},
                      [c, real_collapse](Tape& t, const std::vector<Tape::Id>& in) {
                        return real_collapse(t, t.add(in[0], in[1]), c);
                      }});
  }
  {
    Value c = rand_real(rng, 3, 4);
    checks.push_back({"subtract",
                      {rand_real(rng, 3, 4), rand_real(rng, 3, 4)},
                      [c, real_collapse](Tape& t, const std::vector<Tape::Id>& in) {
                        return real_collapse(t, t.subtract(in[0], in[1]), c);
                      }});
  }
  {
    Value c = rand_complex(rng, 2, 4);
    checks.push_back({"multiply",
                      {rand_complex(rng, 2, 4), rand_complex(rng, 2, 4)},
                      [c, real_collapse](Tape& t, const std::vector<Tape::Id>& in) {
                        return real_collapse(t, t.multiply(in[0], in[1]), c);
                      }});
  }
  {
    Value c = rand_real(rng, 2, 5);
    checks.push_back({"channel_linear",
                      {rand_real(rng, 2, 3), rand_real(rng, 2, 1),
                       rand_real(rng, 3, 5)},
                      [c, real_collapse](Tape& t, const std::vector<Tape::Id>& in) {
                        return real_collapse(
                            t, t.channel_linear(in[0], in[1], in[2]), c);
                      }});
  }
  {
    Value c = rand_complex(rng, 2, 4);
    checks.push_back({"mode_multiply",
                      {rand_complex(rng, 12, 2), rand_complex(rng, 3, 4)},
                      [c, real_collapse](Tape& t, const std::vector<Tape::Id>& in) {
                        return real_collapse(t, t.mode_multiply(in[0], in[1]), c);
                      }});
  }
  {
    Value c = rand_complex(rng, 2, 5);
    checks.push_back({"fft_real",
                      {rand_real(rng, 2, 8)},
                      [c, real_collapse](Tape& t, const std::vector<Tape::Id>& in) {
                        return real_collapse(t, t.fft_real(in[0]), c);
                      }});
  }
  {
    Value c = rand_real(rng, 2, 8);
    checks.push_back({"ifft_real",
                      {rand_complex(rng, 2, 5)},
                      [c, real_collapse](Tape& t, const std::vector<Tape::Id>& in) {
                        return real_collapse(t, t.ifft_real(in[0], 8), c);
                      }});
  }
  {
    Value c = rand_real(rng, 2, 6);
    checks.push_back({"gelu",
                      {rand_real(rng, 2, 6)},
                      [c, real_collapse](Tape& t, const std::vector<Tape::Id>& in) {
                        return real_collapse(t, t.gelu(in[0]), c);
                      }});
  }
  {
    Value c = rand_real(rng, 2, 6);
    checks.push_back({"softplus",
                      {rand_real(rng, 2, 6)},
                      [c, real_collapse](Tape& t, const std::vector<Tape::Id>& in) {
                        return real_collapse(t, t.softplus(in[0]), c);
                      }});
  }
  {
    Value c = rand_real(rng, 2, 5);
    Eigen::MatrixXd pos = rand_matrix(rng, 2, 5).array().abs() + 0.5;
    checks.push_back({"sqrt_elem",
                      {Value::real(std::move(pos))},
                      [c, real_collapse](Tape& t, const std::vector<Tape::Id>& in) {
                        return real_collapse(t, t.sqrt_elem(in[0]), c);
                      }});
  }
  {
    Value c = rand_complex(rng, 2, 3);
    checks.push_back({"truncate_modes",
                      {rand_complex(rng, 2, 5)},
                      [c, real_collapse](Tape& t, const std::vector<Tape::Id>& in) {
                        return real_collapse(t, t.truncate_modes(in[0], 3), c);
                      }});
  }
  {
    Value c = rand_complex(rng, 2, 5);
    checks.push_back({"pad_modes",
                      {rand_complex(rng, 2, 3)},
                      [c, real_collapse](Tape& t, const std::vector<Tape::Id>& in) {
                        return real_collapse(t, t.pad_modes(in[0], 5), c);
                      }});
  }
  {
    checks.push_back({"reduce_sum",
                      {rand_complex(rng, 3, 4)},
                      [](Tape& t, const std::vector<Tape::Id>& in) {
                        return t.reduce_sum(in[0]);
                      }});
  }
  {
    checks.push_back({"grid_norm",
                      {rand_real(rng, 2, 6)},
                      [](Tape& t, const std::vector<Tape::Id>& in) {
                        return t.grid_norm(in[0], 0.25);
                      }});
  }
  return checks;
}

// Loss of the full pipeline as a function of the parameters only; masks,
// noise, and data are pinned by the substreams so repeated evaluations see
// identical randomness.
double pipeline_loss(const OperatorModel& model, const std::string& method,
                     const Eigen::MatrixXd& input, const Eigen::MatrixXd& target,
                     std::uint64_t seed, Tape* out_tape, ModelBinding* out_bind) {
  Tape local;
  Tape& tape = out_tape ? *out_tape : local;
  ModelBinding binding = bind_model(tape, model);
  Rng rng = Rng::substream(seed, "grad-pipe-noise");
  const Tape::Id root = method == "mcd"
                            ? loss_l2(tape, binding, input, target, rng)
                            : loss_pno(tape, binding, input, target, 3, rng);
  if (out_tape) {
    tape.backward(root);
    *out_bind = std::move(binding);
  }
  return tape.value(root).re(0, 0);
}

GradCheckRow run_pipeline(const std::string& method, std::uint64_t seed) {
  TrainConfig tc;
  tc.method = method;
  tc.seed = seed;
  tc.modes = 4;
  tc.width = 4;
  tc.depth = 2;
  tc.projection_width = 8;
  if (method != "pno_r") {
    tc.weight_dropout = 0.1;
    tc.fourier_dropout = 0.1;
  }
  OperatorModel model = build_model(tc, 2, 2);

  Rng data_rng = Rng::substream(seed, "grad-pipe-data");
  const Eigen::MatrixXd input = rand_matrix(data_rng, 2, 16);
  const Eigen::MatrixXd target = rand_matrix(data_rng, 2, 16);

  Tape tape;
  ModelBinding binding;
  pipeline_loss(model, method, input, target, seed, &tape, &binding);

  double worst = 0.0;
  auto params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Value grad = tape.grad_of(binding.all[k]);
    const bool complex = params[k]->is_complex();
    for (int part = 0; part < (complex ? 2 : 1); ++part) {
      const Eigen::MatrixXd& g = part == 0 ? grad.re : grad.im;
      Eigen::MatrixXd& entries = part == 0 ? params[k]->re : params[k]->im;
      for (Eigen::Index i = 0; i < entries.rows(); ++i) {
        for (Eigen::Index j = 0; j < entries.cols(); ++j) {
          const double saved = entries(i, j);
          entries(i, j) = saved + kStep;
          const double up =
              pipeline_loss(model, method, input, target, seed, nullptr, nullptr);
          entries(i, j) = saved - kStep;
          const double down =
              pipeline_loss(model, method, input, target, seed, nullptr, nullptr);
          entries(i, j) = saved;
          worst = std::max(worst, rel_err(g(i, j), (up - down) / (2.0 * kStep)));
        }
      }
    }
  }
  return {"pipeline_" + method, worst, kPipelineTol, worst < kPipelineTol};
}

}  // namespace

bool GradCheckReport::all_passed() const {
  return std::all_of(rows.begin(), rows.end(),
                     [](const GradCheckRow& r) { return r.passed; });
}

GradCheckReport run_gradient_checks(std::uint64_t seed) {
  GradCheckReport report;
  for (const auto& check : make_primitive_checks(seed))
    report.rows.push_back(run_primitive(check));
  for (const char* method : {"pno_d", "pno_r", "mcd"})
    report.rows.push_back(run_pipeline(method, seed));
  return report;
}

std::string format_gradcheck_report(const GradCheckReport& report) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-18s %14s %11s  %s\n", "check",
                "max_rel_err", "tolerance", "status");
  out << line;
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof(line), "%-18s %14.6e %11.1e  %s\n",
                  r.name.c_str(), r.max_rel_err, r.tolerance,
                  r.passed ? "ok" : "FAIL");
    out << line;
  }
  return out.str();
}

}  // namespace pno
