#include "pno/fft.hpp"

#include <unordered_map>
#include <vector>

#include "pno/errors.hpp"

namespace pno {

namespace {

// Twiddle factors exp(-2*pi*i*j/n), j = 0..n/2-1, cached per length.
const std::vector<std::complex<double>>& twiddles(Eigen::Index n) {
  thread_local std::unordered_map<Eigen::Index, std::vector<std::complex<double>>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<std::complex<double>> w(static_cast<std::size_t>(n / 2));
  for (Eigen::Index j = 0; j < n / 2; ++j) {
    const double ang = -2.0 * M_PI * static_cast<double>(j) / static_cast<double>(n);
    w[static_cast<std::size_t>(j)] = {std::cos(ang), std::sin(ang)};
  }
  return cache.emplace(n, std::move(w)).first->second;
}

void check_length(Eigen::Index n) {
  if (n < 2 || !is_power_of_two(n))
    throw config_error("transform length must be a power of two >= 2, got " +
                       std::to_string(n));
}

}  // namespace

bool is_power_of_two(Eigen::Index n) {
  return n > 0 && (n & (n - 1)) == 0;
}

void fft_inplace(Eigen::VectorXcd& v, bool inverse) {
  const Eigen::Index n = v.size();
  check_length(n);
  if (inverse) v = v.conjugate();

  // Bit-reversal permutation.
  for (Eigen::Index i = 1, j = 0; i < n; ++i) {
    Eigen::Index bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(v[i], v[j]);
  }

  const auto& w = twiddles(n);
  for (Eigen::Index len = 2; len <= n; len <<= 1) {
    const Eigen::Index stride = n / len;
    for (Eigen::Index start = 0; start < n; start += len) {
      for (Eigen::Index j = 0; j < len / 2; ++j) {
        const std::complex<double> t =
            v[start + j + len / 2] * w[static_cast<std::size_t>(j * stride)];
        v[start + j + len / 2] = v[start + j] - t;
        v[start + j] += t;
      }
    }
  }

  if (inverse) v = v.conjugate() / static_cast<double>(n);
}

Eigen::VectorXcd fft_real(const Eigen::Ref<const Eigen::VectorXd>& signal) {
  const Eigen::Index n = signal.size();
  check_length(n);
  Eigen::VectorXcd full = signal.cast<std::complex<double>>();
  fft_inplace(full, false);
  return full.head(n / 2 + 1);
}

Eigen::VectorXd ifft_real(const Eigen::Ref<const Eigen::VectorXcd>& spectrum,
                          Eigen::Index n) {
  check_length(n);
  if (spectrum.size() != n / 2 + 1)
    throw config_error("half spectrum of length " + std::to_string(spectrum.size()) +
                       " does not match signal length " + std::to_string(n));
  Eigen::VectorXcd full(n);
  full[0] = {spectrum[0].real(), 0.0};
  full[n / 2] = {spectrum[n / 2].real(), 0.0};
  for (Eigen::Index k = 1; k < n / 2; ++k) {
    full[k] = spectrum[k];
    full[n - k] = std::conj(spectrum[k]);
  }
  fft_inplace(full, true);
  return full.real();
}

Eigen::VectorXd fft_real_adjoint(
    const Eigen::Ref<const Eigen::VectorXcd>& grad_spectrum, Eigen::Index n) {
  check_length(n);
  if (grad_spectrum.size() != n / 2 + 1)
    throw config_error("adjoint spectrum length mismatch");
  // x_bar_n = Re sum_{k=0}^{N/2} g_k exp(+2*pi*i*k*n/N); evaluate by an
  // unnormalized inverse-direction transform of the zero-padded gradient.
  Eigen::VectorXcd full = Eigen::VectorXcd::Zero(n);
  full.head(n / 2 + 1) = grad_spectrum;
  full = full.conjugate();
  fft_inplace(full, false);
  return full.real();  // Re(conj(FFT(conj(g)))) = Re(IFFT_unscaled(g))
}

Eigen::VectorXcd ifft_real_adjoint(
    const Eigen::Ref<const Eigen::VectorXd>& grad_signal, Eigen::Index n) {
  check_length(n);
  if (grad_signal.size() != n)
    throw config_error("adjoint signal length mismatch");
  // X_bar_k = (c_k/N) * FFT(g)_k with c_0 = c_{N/2} = 1 and c_k = 2 otherwise;
  // the imaginary parts of the DC and Nyquist bins do not influence the
  // inverse, so their adjoints are zero.
  Eigen::VectorXcd g = fft_real(grad_signal);
  const double inv_n = 1.0 / static_cast<double>(n);
  g[0] = {g[0].real() * inv_n, 0.0};
  g[n / 2] = {g[n / 2].real() * inv_n, 0.0};
  for (Eigen::Index k = 1; k < n / 2; ++k) g[k] *= 2.0 * inv_n;
  return g;
}

Eigen::MatrixXcd fft_real_rows(const Eigen::Ref<const Eigen::MatrixXd>& signal) {
  const Eigen::Index n = signal.cols();
  check_length(n);
  Eigen::MatrixXcd out(signal.rows(), n / 2 + 1);
  Eigen::VectorXd row(n);
  for (Eigen::Index r = 0; r < signal.rows(); ++r) {
    row = signal.row(r);
    out.row(r) = fft_real(row);
  }
  return out;
}

Eigen::MatrixXd ifft_real_rows(const Eigen::Ref<const Eigen::MatrixXcd>& spectrum,
                               Eigen::Index n) {
  Eigen::MatrixXd out(spectrum.rows(), n);
  Eigen::VectorXcd row(spectrum.cols());
  for (Eigen::Index r = 0; r < spectrum.rows(); ++r) {
    row = spectrum.row(r);
    out.row(r) = ifft_real(row, n);
  }
  return out;
}

}  // namespace pno
