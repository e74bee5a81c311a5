#include "pno/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace pno {

namespace {

void check_alignment(const PredictiveEnsemble& forecast, const GridFunction& obs) {
  if (forecast.grid_points() != obs.size())
    throw config_error("ensemble and observation grids differ in size");
  if (std::abs(forecast.domain_length - obs.domain_length) >
      1e-12 * std::max(1.0, obs.domain_length))
    throw config_error("ensemble and observation domain lengths differ");
}

}  // namespace

double energy_score_estimator(const PredictiveEnsemble& forecast,
                              const GridFunction& obs) {
  check_alignment(forecast, obs);
  const Eigen::Index m = forecast.size();
  if (m < 2) throw config_error("ensemble score needs at least two members");
  const double w = forecast.weight();
  const auto& mem = forecast.members;

  double to_obs = 0.0;
  for (Eigen::Index j = 0; j < m; ++j)
    to_obs += std::sqrt(w * (mem.row(j).transpose() - obs.values).squaredNorm());
  to_obs /= static_cast<double>(m);

  double pairwise = 0.0;  // over unordered pairs
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index h = j + 1; h < m; ++h)
      pairwise += std::sqrt(w * (mem.row(j) - mem.row(h)).squaredNorm());
  // ordered-pair mean / 2  ==  unordered sum / (M(M-1))
  return to_obs - pairwise / (static_cast<double>(m) * static_cast<double>(m - 1));
}

double energy_score_population(const DiscreteMeasure& p,
                               const Eigen::VectorXd& x) {
  if (x.size() != p.atoms.cols())
    throw config_error("measure atoms and point dimensions differ");
  const Eigen::Index n = p.atoms.rows();
  double to_x = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    to_x += p.weights[i] * (p.atoms.row(i).transpose() - x).norm();
  double pairwise = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      pairwise += p.weights[i] * p.weights[j] *
                  (p.atoms.row(i) - p.atoms.row(j)).norm();
  return to_x - 0.5 * pairwise;
}

double kernel_score_induced(const DiscreteMeasure& p, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& z0) {
  if (x.size() != p.atoms.cols() || z0.size() != p.atoms.cols())
    throw config_error("measure atoms, point, and anchor dimensions differ");
  const Eigen::Index n = p.atoms.rows();
  auto kernel = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - z0).norm() + (b - z0).norm() - (a - b).norm();
  };
  double pair_term = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      pair_term += p.weights[i] * p.weights[j] *
                   kernel(p.atoms.row(i), p.atoms.row(j));
  double cross_term = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    cross_term += p.weights[i] * kernel(p.atoms.row(i), x);
  return 0.5 * pair_term - cross_term + 0.5 * kernel(x, x);
}

double expected_energy_score(const DiscreteMeasure& q, const DiscreteMeasure& p) {
  if (q.atoms.cols() != p.atoms.cols())
    throw config_error("measures live in different dimensions");
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.atoms.rows(); ++i)
    s += p.weights[i] * energy_score_population(q, p.atoms.row(i).transpose());
  return s;
}

double crps_ensemble(const Eigen::VectorXd& samples, double obs, CrpsKind kind) {
  const Eigen::Index m = samples.size();
  if (m < 1) throw config_error("crps needs at least one sample");
  if (kind == CrpsKind::fair && m < 2)
    throw config_error("fair crps needs at least two samples");
  std::vector<double> s(samples.data(), samples.data() + m);
  std::sort(s.begin(), s.end());

  double to_obs = 0.0;
  for (double v : s) to_obs += std::abs(v - obs);
  to_obs /= static_cast<double>(m);

  // sum_{j,h} |x_j - x_h| = 2 sum_i (2i - M + 1) x_(i) over the sorted values.
  double pair_sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    pair_sum += (2.0 * static_cast<double>(i) - static_cast<double>(m) + 1.0) *
                s[static_cast<std::size_t>(i)];
  pair_sum *= 2.0;

  const double denom =
      kind == CrpsKind::fair
          ? static_cast<double>(m) * static_cast<double>(m - 1)
          : static_cast<double>(m) * static_cast<double>(m);
  return to_obs - 0.5 * pair_sum / denom;
}

double quantile_score(double q, double obs, double alpha) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw config_error("quantile level must lie in (0, 1)");
  const double indicator = obs < q ? 1.0 : 0.0;
  return 2.0 * (alpha - indicator) * (obs - q);
}

double quantile_sorted(const double* sorted, Eigen::Index m, double p) {
  if (m < 1) throw config_error("quantile needs at least one sample");
  if (p < 0.0 || p > 1.0) throw config_error("quantile level outside [0, 1]");
  if (m == 1) return sorted[0];
  const double h = p * static_cast<double>(m - 1);  // 0-based fractional rank
  const Eigen::Index lo = static_cast<Eigen::Index>(std::floor(h));
  const Eigen::Index hi = std::min(lo + 1, m - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double empirical_quantile(const Eigen::VectorXd& samples, double p) {
  std::vector<double> s(samples.data(), samples.data() + samples.size());
  std::sort(s.begin(), s.end());
  return quantile_sorted(s.data(), static_cast<Eigen::Index>(s.size()), p);
}

double gaussian_nll(const GridFunction& mean, const GridFunction& variance,
                    const GridFunction& obs, Eigen::Index* floored_count) {
  if (mean.size() != obs.size() || variance.size() != obs.size())
    throw config_error("nll fields differ in size");
  constexpr double kFloor = 1e-12;
  Eigen::Index floored = 0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < obs.size(); ++i) {
    double v = variance.values[i];
    if (v <= kFloor) {
      v = kFloor;
      ++floored;
    }
    const double d = mean.values[i] - obs.values[i];
    acc += std::log(2.0 * M_PI * v) + d * d / v;
  }
  if (floored_count) *floored_count = floored;
  return acc / (2.0 * static_cast<double>(obs.size()));
}

CoverageWidth coverage_and_width(const PredictiveEnsemble& forecast,
                                 const GridFunction& obs, double alpha) {
  check_alignment(forecast, obs);
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw config_error("interval level must lie in (0, 1)");
  const Eigen::Index m = forecast.size();
  const Eigen::Index n = forecast.grid_points();
  std::vector<double> col(static_cast<std::size_t>(m));
  CoverageWidth out;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j)
      col[static_cast<std::size_t>(j)] = forecast.members(j, i);
    std::sort(col.begin(), col.end());
    const double lo = quantile_sorted(col.data(), m, alpha / 2.0);
    const double hi = quantile_sorted(col.data(), m, 1.0 - alpha / 2.0);
    const double y = obs.values[i];
    if (y >= lo && y <= hi) out.coverage += 1.0;
    out.width += hi - lo;
  }
  out.coverage /= static_cast<double>(n);
  out.width /= static_cast<double>(n);
  return out;
}

double l2_metric(const PredictiveEnsemble& forecast, const GridFunction& obs) {
  check_alignment(forecast, obs);
  const Eigen::VectorXd mean = forecast.members.colwise().mean().transpose();
  return std::sqrt(forecast.weight() * (mean - obs.values).squaredNorm());
}

double l2_relative(const PredictiveEnsemble& forecast, const GridFunction& obs) {
  const double abs_err = l2_metric(forecast, obs);
  const double denom = grid_norm(obs);
  return denom > 0.0 ? abs_err / denom : abs_err;
}

Tape::Id energy_score_on_tape(Tape& tape, const std::vector<Tape::Id>& members,
                              Tape::Id obs, double weight) {
  const std::size_t m = members.size();
  if (m < 2) throw config_error("ensemble score needs at least two members");

  Tape::Id to_obs = -1;
  for (Tape::Id mem : members) {
    const Tape::Id d = tape.grid_norm(tape.subtract(mem, obs), weight);
    to_obs = to_obs < 0 ? d : tape.add(to_obs, d);
  }
  to_obs = tape.multiply(tape.scalar_constant(1.0 / static_cast<double>(m)), to_obs);

  Tape::Id pairwise = -1;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t h = j + 1; h < m; ++h) {
      const Tape::Id d =
          tape.grid_norm(tape.subtract(members[j], members[h]), weight);
      pairwise = pairwise < 0 ? d : tape.add(pairwise, d);
    }
  }
  // unordered sum / (M(M-1)) == ordered mean / 2
  pairwise = tape.multiply(
      tape.scalar_constant(1.0 / (static_cast<double>(m) * static_cast<double>(m - 1))),
      pairwise);
  return tape.subtract(to_obs, pairwise);
}

}  // namespace pno
