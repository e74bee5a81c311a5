#include "pno/pde.hpp"

#include <cmath>
#include <complex>

#include "pno/errors.hpp"
#include "pno/fft.hpp"

namespace pno {

namespace {

constexpr int kContourPoints = 32;

// Re mean_j f((z + exp(i theta_j))) over a unit circle around z; evaluates
// the phi-function combinations without cancellation near z = 0.
template <typename F>
double contour_mean(double z, F f) {
  std::complex<double> acc = 0.0;
  for (int j = 0; j < kContourPoints; ++j) {
    const double theta =
        2.0 * M_PI * (static_cast<double>(j) + 0.5) / kContourPoints;
    acc += f(std::complex<double>(z + std::cos(theta), std::sin(theta)));
  }
  return acc.real() / kContourPoints;
}

}  // namespace

KsStepper::KsStepper(Eigen::Index n, double domain_length, double dt)
    : n_(n), length_(domain_length), dt_(dt) {
  if (!is_power_of_two(n) || n < 4)
    throw config_error("grid size must be a power of two >= 4");
  if (!(domain_length > 0.0)) throw config_error("domain length must be positive");
  if (!(dt > 0.0)) throw config_error("time step must be positive");

  q_.resize(n);
  dealias_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double k = i <= n / 2 ? static_cast<double>(i)
                                : static_cast<double>(i) - static_cast<double>(n);
    q_[i] = 2.0 * M_PI * k / length_;
    dealias_[i] = std::abs(k) > static_cast<double>(n) / 3.0 ? 0.0 : 1.0;
  }

  const Eigen::ArrayXd lambda = q_.square() - q_.square().square();
  e_full_ = (lambda * dt).exp();
  e_half_ = (lambda * dt / 2.0).exp();
  Q_.resize(n);
  f1_.resize(n);
  f2_.resize(n);
  f3_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z0 = lambda[i] * dt;
    Q_[i] = dt * contour_mean(z0, [](std::complex<double> z) {
      return (std::exp(z / 2.0) - 1.0) / z;
    });
    f1_[i] = dt * contour_mean(z0, [](std::complex<double> z) {
      return (-4.0 - z + std::exp(z) * (4.0 - 3.0 * z + z * z)) / (z * z * z);
    });
    f2_[i] = dt * contour_mean(z0, [](std::complex<double> z) {
      return (2.0 + z + std::exp(z) * (-2.0 + z)) / (z * z * z);
    });
    f3_[i] = dt * contour_mean(z0, [](std::complex<double> z) {
      return (-4.0 - 3.0 * z - z * z + std::exp(z) * (4.0 - z)) / (z * z * z);
    });
  }

  v_ = Eigen::VectorXcd::Zero(n);
}

void KsStepper::set_state(const Eigen::VectorXd& u) {
  if (u.size() != n_) throw config_error("state size does not match the grid");
  v_ = u.cast<std::complex<double>>();
  fft_inplace(v_, false);
  steps_taken_ = 0;
}

Eigen::VectorXd KsStepper::state() const {
  Eigen::VectorXcd u = v_;
  fft_inplace(u, true);
  return u.real();
}

Eigen::VectorXcd KsStepper::nonlinear(const Eigen::VectorXcd& v) const {
  Eigen::VectorXcd u = v;
  fft_inplace(u, true);
  Eigen::VectorXcd w(n_);
  for (Eigen::Index i = 0; i < n_; ++i) {
    const double ur = u[i].real();
    w[i] = {ur * ur, 0.0};
  }
  fft_inplace(w, false);
  for (Eigen::Index i = 0; i < n_; ++i)
    w[i] *= std::complex<double>(0.0, -0.5 * q_[i] * dealias_[i]);
  return w;
}

void KsStepper::step() {
  const Eigen::VectorXcd nv = nonlinear(v_);
  Eigen::VectorXcd a(n_), b(n_), c(n_);
  for (Eigen::Index i = 0; i < n_; ++i) a[i] = e_half_[i] * v_[i] + Q_[i] * nv[i];
  const Eigen::VectorXcd na = nonlinear(a);
  for (Eigen::Index i = 0; i < n_; ++i) b[i] = e_half_[i] * v_[i] + Q_[i] * na[i];
  const Eigen::VectorXcd nb = nonlinear(b);
  for (Eigen::Index i = 0; i < n_; ++i)
    c[i] = e_half_[i] * a[i] + Q_[i] * (2.0 * nb[i] - nv[i]);
  const Eigen::VectorXcd nc = nonlinear(c);
  for (Eigen::Index i = 0; i < n_; ++i)
    v_[i] = e_full_[i] * v_[i] + f1_[i] * nv[i] +
            2.0 * f2_[i] * (na[i] + nb[i]) + f3_[i] * nc[i];
  ++steps_taken_;
  if (!v_.allFinite())
    throw blowup_error("field became non-finite at step " +
                       std::to_string(steps_taken_));
}

Trajectory simulate_ks(const Eigen::VectorXd& u0, double domain_length,
                       double dt, double burn_in_time, double save_interval,
                       int n_snapshots) {
  if (n_snapshots < 1) throw config_error("need at least one snapshot");
  auto steps_of = [&](double t, const char* what) {
    const double raw = t / dt;
    const long s = std::lround(raw);
    if (std::abs(raw - static_cast<double>(s)) > 1e-9)
      throw config_error(std::string(what) + " must be an integer multiple of dt");
    return s;
  };
  const long burn_steps = steps_of(burn_in_time, "burn-in time");
  const long stride = steps_of(save_interval, "save interval");
  if (stride < 1) throw config_error("save interval must cover at least one step");

  KsStepper stepper(u0.size(), domain_length, dt);
  stepper.set_state(u0);
  for (long s = 0; s < burn_steps; ++s) stepper.step();

  Trajectory traj;
  traj.save_interval = save_interval;
  traj.domain_length = domain_length;
  traj.snapshots.resize(n_snapshots, u0.size());
  traj.snapshots.row(0) = stepper.state();
  for (int snap = 1; snap < n_snapshots; ++snap) {
    for (long s = 0; s < stride; ++s) stepper.step();
    traj.snapshots.row(snap) = stepper.state();
  }
  return traj;
}

Eigen::VectorXd heat_sine_mode(int k, double t, Eigen::Index n, double L) {
  if (k < 1) throw config_error("mode index must be >= 1");
  if (n < 2) throw config_error("grid needs >= 2 points");
  const double q = 2.0 * M_PI * static_cast<double>(k) / L;
  const double amp = std::exp(-q * q * t);
  Eigen::VectorXd u(n);
  for (Eigen::Index i = 0; i < n; ++i)
    u[i] = amp * std::sin(q * L * static_cast<double>(i) / static_cast<double>(n));
  return u;
}

Eigen::VectorXd heat_evolve(const Eigen::VectorXd& u0, double t, double L) {
  const Eigen::Index n = u0.size();
  Eigen::VectorXcd spec = fft_real(u0);
  for (Eigen::Index k = 0; k < spec.size(); ++k) {
    const double q = 2.0 * M_PI * static_cast<double>(k) / L;
    spec[k] *= std::exp(-q * q * t);
  }
  return ifft_real(spec, n);
}

BenchmarkPair gaussian_benchmark_sample(Eigen::Index n, int k_smooth,
                                        double sigma_eta, Rng& rng) {
  if (k_smooth < 2 || k_smooth > n / 2)
    throw config_error("k_smooth must lie in [2, n/2]");
  if (!(sigma_eta >= 0.0)) throw config_error("sigma_eta must be >= 0");

  // Half-spectrum entry (N/2)(alpha - i beta) synthesizes
  // alpha cos(2 pi k x / L) + beta sin(2 pi k x / L).
  Eigen::VectorXcd spec = Eigen::VectorXcd::Zero(n / 2 + 1);
  const double half_n = static_cast<double>(n) / 2.0;
  for (int k = 1; k <= k_smooth; ++k) {
    const double alpha = rng.normal();
    const double beta = rng.normal();
    spec[k] = {half_n * alpha, -half_n * beta};
  }

  BenchmarkPair pair;
  pair.input = ifft_real(spec, n);
  Eigen::VectorXcd smooth = Eigen::VectorXcd::Zero(n / 2 + 1);
  for (int k = 1; k < (k_smooth + 1) / 2; ++k) smooth[k] = 0.5 * spec[k];
  pair.clean = ifft_real(smooth, n);
  pair.target = pair.clean;
  for (Eigen::Index i = 0; i < n; ++i) pair.target[i] += sigma_eta * rng.normal();
  return pair;
}

Eigen::VectorXd gaussian_benchmark_mean(const Eigen::VectorXd& input,
                                        int k_smooth) {
  const Eigen::Index n = input.size();
  if (k_smooth < 2 || k_smooth > n / 2)
    throw config_error("k_smooth must lie in [2, n/2]");
  Eigen::VectorXcd spec = fft_real(input);
  Eigen::VectorXcd smooth = Eigen::VectorXcd::Zero(spec.size());
  for (int k = 1; k < (k_smooth + 1) / 2; ++k) smooth[k] = 0.5 * spec[k];
  return ifft_real(smooth, n);
}

}  // namespace pno
