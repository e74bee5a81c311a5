#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "pno/errors.hpp"
#include "pno/fft.hpp"
#include "pno/pde.hpp"
#include "pno/rng.hpp"

using namespace pno;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::VectorXd grid(Eigen::Index n, double length) {
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i)
    x(i) = length * static_cast<double>(i) / static_cast<double>(n);
  return x;
}

Eigen::VectorXd ks_test_state(Eigen::Index n, double length) {
  const Eigen::VectorXd x = grid(n, length);
  Eigen::VectorXd u(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = 2.0 * kPi * x(i) / length;
    u(i) = std::cos(s) * (1.0 + std::sin(s));
  }
  return u;
}

Eigen::VectorXd integrate_ks(const Eigen::VectorXd& u0, double length,
                             double dt, double t_end) {
  KsStepper stepper(u0.size(), length, dt);
  stepper.set_state(u0);
  const long steps = std::lround(t_end / dt);
  for (long s = 0; s < steps; ++s) stepper.step();
  return stepper.state();
}

// Amplitude of the sine/cosine pair at wavenumber k from the half spectrum.
double mode_amplitude(const Eigen::VectorXd& u, int k) {
  const Eigen::VectorXcd spec = fft_real(u);
  return 2.0 * std::abs(spec(k)) / static_cast<double>(u.size());
}

}  // namespace

TEST_CASE("the time stepper converges at fourth order") {
  const double length = 32.0 * kPi;
  const Eigen::Index n = 128;
  const double t_end = 0.8;
  const Eigen::VectorXd u0 = ks_test_state(n, length);

  const Eigen::VectorXd ref = integrate_ks(u0, length, 0.1 / 64.0, t_end);
  std::vector<double> errs;
  for (int j = 0; j < 4; ++j) {
    const double dt = 0.1 / static_cast<double>(1 << j);
    errs.push_back(
        (integrate_ks(u0, length, dt, t_end) - ref).cwiseAbs().maxCoeff());
  }
  for (std::size_t j = 0; j + 1 < errs.size(); ++j) {
    REQUIRE(errs[j + 1] > 0.0);
    const double order = std::log2(errs[j] / errs[j + 1]);
    CHECK(order > 3.5);
    CHECK(order < 4.6);
  }
}

TEST_CASE("the spatial mean is conserved") {
  const double length = 100.0;
  const Eigen::Index n = 128;
  Eigen::VectorXd u0 = ks_test_state(n, length) * 1.7;
  u0.array() += 0.7;  // nonzero mean rides along untouched
  const double mean0 = u0.mean();

  KsStepper stepper(n, length, 0.05);
  stepper.set_state(u0);
  for (int s = 0; s < 200; ++s) {  // t = 10
    stepper.step();
    CHECK(std::abs(stepper.state().mean() - mean0) < 1e-8);
  }
}

TEST_CASE("tiny single modes grow at the linearized rate") {
  // Linearizing about u = 0 gives independent modes with symbol q^2 - q^4,
  // q = 2 pi k / L; at amplitude 1e-6 the nonlinear correction is invisible
  // at the 2% tolerance.
  const double length = 100.0;
  const Eigen::Index n = 256;
  const double eps = 1e-6, t_end = 1.0;
  const Eigen::VectorXd x = grid(n, length);
  for (int k : {4, 8, 16}) {
    Eigen::VectorXd u0(n);
    for (Eigen::Index i = 0; i < n; ++i)
      u0(i) = eps * std::sin(2.0 * kPi * static_cast<double>(k) * x(i) / length);
    const Eigen::VectorXd ut = integrate_ks(u0, length, 0.005, t_end);
    const double q = 2.0 * kPi * static_cast<double>(k) / length;
    const double expected = std::exp((q * q - q * q * q * q) * t_end);
    const double got = mode_amplitude(ut, k) / eps;
    CHECK(std::abs(got / expected - 1.0) < 0.02);
  }
}

TEST_CASE("dealiased bins never fill in") {
  // The 2/3 rule zeroes the nonlinear product above |k| = n/3 and the linear
  // part is diagonal, so bins that start empty above the cutoff stay exactly
  // empty.
  const Eigen::Index n = 128;
  const double length = 100.0;
  const Eigen::VectorXd x = grid(n, length);
  Eigen::VectorXd u0(n);
  for (Eigen::Index i = 0; i < n; ++i)
    u0(i) = std::sin(2.0 * kPi * 3.0 * x(i) / length);
  KsStepper stepper(n, length, 0.05);
  stepper.set_state(u0);
  for (int s = 0; s < 100; ++s) stepper.step();
  // The stepper's spectrum holds exact zeros there; reading the state goes
  // through an inverse-forward transform pair, which leaves ~1e-16 rounding.
  const Eigen::VectorXcd spec = fft_real(stepper.state());
  const Eigen::Index cutoff = 43;  // smallest k with |k| > 128/3
  for (Eigen::Index k = cutoff; k < spec.size(); ++k)
    CHECK(std::abs(spec(k)) < 1e-12);
  // Below the cutoff the cascade has populated the spectrum.
  CHECK(std::abs(spec(6)) > 0.0);
}

TEST_CASE("runaway fields raise a blow-up error") {
  const Eigen::Index n = 64;
  KsStepper stepper(n, 100.0, 0.1);
  Eigen::VectorXd huge(n);
  for (Eigen::Index i = 0; i < n; ++i)
    huge(i) = 1e160 * std::sin(2.0 * kPi * static_cast<double>(i) / 64.0);
  stepper.set_state(huge);
  CHECK_THROWS_AS(
      [&] {
        for (int s = 0; s < 10; ++s) stepper.step();
      }(),
      blowup_error);
}

TEST_CASE("trajectory bookkeeping") {
  const Eigen::Index n = 64;
  const double length = 100.0;
  const Eigen::VectorXd u0 = ks_test_state(n, length);

  CHECK_THROWS_AS(
      (void)simulate_ks(u0, length, 0.1, 0.25, 0.3, 2), config_error);
  CHECK_THROWS_AS(
      (void)simulate_ks(u0, length, 0.1, 0.2, 0.05, 2), config_error);
  CHECK_THROWS_AS(
      (void)simulate_ks(u0, length, 0.1, 0.2, 0.3, 0), config_error);

  const Trajectory traj = simulate_ks(u0, length, 0.1, 0.2, 0.3, 3);
  CHECK(traj.snapshots.rows() == 3);
  CHECK(traj.snapshots.cols() == n);
  CHECK(traj.save_interval == 0.3);
  CHECK(traj.domain_length == length);

  // First snapshot is the end of the burn-in; later ones stride along.
  KsStepper stepper(n, length, 0.1);
  stepper.set_state(u0);
  for (int s = 0; s < 2; ++s) stepper.step();
  CHECK(traj.snapshots.row(0).transpose() == stepper.state());
  for (int s = 0; s < 3; ++s) stepper.step();
  CHECK(traj.snapshots.row(1).transpose() == stepper.state());
  for (int s = 0; s < 3; ++s) stepper.step();
  CHECK(traj.snapshots.row(2).transpose() == stepper.state());
}

TEST_CASE("heat evolution matches the closed form") {
  const Eigen::Index n = 64;
  const double length = 2.0 * kPi;
  const Eigen::VectorXd x = grid(n, length);

  const Eigen::VectorXd u1 = heat_sine_mode(1, 1.0, n, length);
  for (Eigen::Index i = 0; i < n; ++i)
    CHECK(u1(i) ==
          doctest::Approx(std::exp(-1.0) * std::sin(x(i))).epsilon(1e-12));

  // Superposition with distinct decay rates, plus an untouched mean.
  const double L = 7.3, t = 0.37;
  const Eigen::VectorXd xl = grid(n, L);
  Eigen::VectorXd u0(n), want(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s2 = 2.0 * kPi * 2.0 * xl(i) / L;
    const double s5 = 2.0 * kPi * 5.0 * xl(i) / L;
    u0(i) = 3.0 * std::sin(s2) + 0.5 * std::cos(s5) + 1.2;
    const double r2 = std::pow(2.0 * kPi * 2.0 / L, 2);
    const double r5 = std::pow(2.0 * kPi * 5.0 / L, 2);
    want(i) = 3.0 * std::exp(-r2 * t) * std::sin(s2) +
              0.5 * std::exp(-r5 * t) * std::cos(s5) + 1.2;
  }
  const Eigen::VectorXd got = heat_evolve(u0, t, L);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  // t = 0 is the identity.
  CHECK((heat_evolve(u0, 0.0, L) - u0).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("benchmark pairs have the advertised conditional law") {
  Rng rng(61);
  const Eigen::Index n = 64;
  const int k_smooth = 8;
  const double sigma = 0.3;

  // Band structure and the low-pass-and-halve conditional mean.
  const BenchmarkPair pair = gaussian_benchmark_sample(n, k_smooth, sigma, rng);
  const Eigen::VectorXcd in_spec = fft_real(pair.input);
  CHECK(std::abs(in_spec(0)) < 1e-12);
  for (int k = 1; k <= k_smooth; ++k) CHECK(std::abs(in_spec(k)) > 0.0);
  for (Eigen::Index k = k_smooth + 1; k < in_spec.size(); ++k)
    CHECK(std::abs(in_spec(k)) < 1e-12);

  const Eigen::VectorXcd clean_spec = fft_real(pair.clean);
  for (int k = 0; k < k_smooth / 2; ++k)
    CHECK(std::abs(clean_spec(k) - 0.5 * in_spec(k)) < 1e-10);
  for (Eigen::Index k = k_smooth / 2; k < clean_spec.size(); ++k)
    CHECK(std::abs(clean_spec(k)) < 1e-12);
  CHECK((pair.clean - gaussian_benchmark_mean(pair.input, k_smooth))
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  // Residual noise is pointwise N(0, sigma^2): pooled variance over
  // 2000 x 64 residuals estimates sigma^2 to well under 5%.
  double acc = 0.0;
  Eigen::Index count = 0;
  for (int rep = 0; rep < 2000; ++rep) {
    const BenchmarkPair p = gaussian_benchmark_sample(n, k_smooth, sigma, rng);
    acc += (p.target - p.clean).squaredNorm();
    count += n;
  }
  const double var = acc / static_cast<double>(count);
  CHECK(std::abs(var / (sigma * sigma) - 1.0) < 0.05);

  // Zero noise collapses the target onto the conditional mean.
  const BenchmarkPair sharp = gaussian_benchmark_sample(n, k_smooth, 0.0, rng);
  CHECK((sharp.target - sharp.clean).cwiseAbs().maxCoeff() == 0.0);
}
