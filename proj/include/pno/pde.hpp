#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include "pno/rng.hpp"

namespace pno {

// Snapshots of one simulated trajectory, one row per snapshot.
struct Trajectory {
  Eigen::MatrixXd snapshots;
  double save_interval = 0.0;
  double domain_length = 0.0;
};

// u_t = -u_xx - u_xxxx - u u_x on a periodic domain of length L, integrated
// pseudo-spectrally with fourth-order exponential time differencing. The
// linear symbol is q^2 - q^4 (q = 2 pi k / L); the nonlinear term
// -0.5 d/dx (u^2) is evaluated with 2/3-rule dealiasing. The phi-function
// coefficients are averaged over a 32-point unit-circle contour around each
// eigenvalue, which is stable near z = 0.
class KsStepper {
 public:
  KsStepper(Eigen::Index n, double domain_length, double dt);

  void set_state(const Eigen::VectorXd& u);
  Eigen::VectorXd state() const;
  // Advance by one dt; throws blowup_error when the field leaves the finite
  // range.
  void step();

  Eigen::Index size() const { return n_; }
  double dt() const { return dt_; }

 private:
  Eigen::VectorXcd nonlinear(const Eigen::VectorXcd& v) const;

  Eigen::Index n_;
  double length_;
  double dt_;
  long steps_taken_ = 0;
  Eigen::ArrayXd q_;                    // signed wavenumbers 2 pi k / L
  Eigen::ArrayXd dealias_;              // 2/3-rule mask
  Eigen::ArrayXd e_full_, e_half_;      // exp(lambda dt), exp(lambda dt/2)
  Eigen::ArrayXd Q_, f1_, f2_, f3_;     // contour-averaged coefficients
  Eigen::VectorXcd v_;                  // full complex spectrum of the state
};

// Integrate from u0, discard burn_in_time, then record n_snapshots spaced
// save_interval apart (the first snapshot is taken at the end of the
// burn-in). burn_in_time and save_interval must be integer multiples of dt.
Trajectory simulate_ks(const Eigen::VectorXd& u0, double domain_length,
                       double dt, double burn_in_time, double save_interval,
                       int n_snapshots);

// Analytic heat evolution u_t = u_xx of sin(2 pi k x / L): the amplitude
// decays by exp(-(2 pi k / L)^2 t).
Eigen::VectorXd heat_sine_mode(int k, double t, Eigen::Index n, double L);

// Spectral heat evolution of an arbitrary periodic initial condition.
Eigen::VectorXd heat_evolve(const Eigen::VectorXd& u0, double t, double L);

// Smoothing benchmark with a known conditional law. The input is a
// band-limited Gaussian field (iid unit-normal cosine/sine coefficients on
// modes 1..k_smooth); the target keeps modes strictly below k_smooth/2,
// halves them, and adds iid N(0, sigma_eta^2) noise at every grid point, so
// target | input is Gaussian with computable mean and constant variance.
struct BenchmarkPair {
  Eigen::VectorXd input;
  Eigen::VectorXd target;
  Eigen::VectorXd clean;  // conditional mean of the target
};

BenchmarkPair gaussian_benchmark_sample(Eigen::Index n, int k_smooth,
                                        double sigma_eta, Rng& rng);

// The smoothing map alone (conditional mean of the target given the input).
Eigen::VectorXd gaussian_benchmark_mean(const Eigen::VectorXd& input,
                                        int k_smooth);

}  // namespace pno
