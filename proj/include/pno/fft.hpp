#pragma once

#include <Eigen/Core>
#include <complex>

namespace pno {

// Radix-2 transforms restricted to power-of-two lengths.
//
// Conventions: the forward transform of a real signal x of length N returns the
// N/2+1 non-redundant bins X_k = sum_n x_n exp(-2*pi*i*k*n/N) (unnormalized);
// the inverse applies the 1/N factor. The DC and Nyquist bins of a real
// signal's spectrum are real; the inverse uses only their real parts.

bool is_power_of_two(Eigen::Index n);

// Real signal (length N, power of two) -> half spectrum (length N/2+1).
Eigen::VectorXcd fft_real(const Eigen::Ref<const Eigen::VectorXd>& signal);

// Half spectrum (length N/2+1) -> real signal (length n). n must match the
// spectrum length: n = 2*(len-1).
Eigen::VectorXd ifft_real(const Eigen::Ref<const Eigen::VectorXcd>& spectrum,
                          Eigen::Index n);

// Adjoint of fft_real under the pair-of-real-partials convention: given the
// gradient with respect to (Re X_k, Im X_k), returns the gradient with respect
// to the signal entries.
Eigen::VectorXd fft_real_adjoint(
    const Eigen::Ref<const Eigen::VectorXcd>& grad_spectrum, Eigen::Index n);

// Adjoint of ifft_real: given the gradient with respect to the output signal,
// returns the gradient with respect to (Re X_k, Im X_k). The imaginary
// components of the DC and Nyquist bins receive zero (the inverse ignores
// them).
Eigen::VectorXcd ifft_real_adjoint(
    const Eigen::Ref<const Eigen::VectorXd>& grad_signal, Eigen::Index n);

// Row-wise variants for multi-channel grids stored as (channels, points).
Eigen::MatrixXcd fft_real_rows(const Eigen::Ref<const Eigen::MatrixXd>& signal);
Eigen::MatrixXd ifft_real_rows(const Eigen::Ref<const Eigen::MatrixXcd>& spectrum,
                               Eigen::Index n);

// Full complex transform used by the ETDRK4 stepper (in place, unnormalized
// forward; inverse applies 1/N).
void fft_inplace(Eigen::VectorXcd& v, bool inverse);

}  // namespace pno
