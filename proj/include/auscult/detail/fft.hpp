#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace auscult::detail {

inline constexpr double kPi = 3.14159265358979323846;

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Iterative radix-2 FFT with precomputed twiddles and bit-reversal table.
// Sizes are powers of two; a plan is cheap to build and reusable across
// frames, so STFT loops pay the trig cost once.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n) {
    if (!is_pow2(n)) throw std::invalid_argument("FftPlan: size must be a power of two");
    rev_.resize(n);
    std::size_t log2n = 0;
    while ((std::size_t{1} << log2n) < n) ++log2n;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < log2n; ++b) r |= ((i >> b) & 1) << (log2n - 1 - b);
      rev_[i] = r;
    }
    twiddle_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double ang = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = {std::cos(ang), std::sin(ang)};
    }
  }

  std::size_t size() const { return n_; }

  // In-place forward transform (engineering sign convention, no scaling).
  void forward(std::complex<double>* a) const { transform(a, false); }

  // In-place inverse transform, scaled by 1/n.
  void inverse(std::complex<double>* a) const {
    transform(a, true);
    const double s = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) a[i] *= s;
  }

  // Forward transform of a real signal; writes the n/2+1 nonredundant bins.
  void forward_real(const double* x, std::complex<double>* spec) const {
    scratch_.assign(n_, {0.0, 0.0});
    for (std::size_t i = 0; i < n_; ++i) scratch_[i] = {x[i], 0.0};
    transform(scratch_.data(), false);
    for (std::size_t k = 0; k <= n_ / 2; ++k) spec[k] = scratch_[k];
  }

  // Inverse of forward_real: takes n/2+1 bins of a conjugate-symmetric
  // spectrum and reconstructs the length-n real signal.
  void inverse_real(const std::complex<double>* spec, double* x) const {
    scratch_.assign(n_, {0.0, 0.0});
    for (std::size_t k = 0; k <= n_ / 2; ++k) scratch_[k] = spec[k];
    for (std::size_t k = n_ / 2 + 1; k < n_; ++k) scratch_[k] = std::conj(spec[n_ - k]);
    transform(scratch_.data(), true);
    const double s = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) x[i] = scratch_[i].real() * s;
  }

 private:
  void transform(std::complex<double>* a, bool inv) const {
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t j = rev_[i];
      if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t stride = n_ / len;
      const std::size_t half = len / 2;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t k = 0; k < half; ++k) {
          std::complex<double> w = twiddle_[k * stride];
          if (inv) w = std::conj(w);
          const std::complex<double> u = a[start + k];
          const std::complex<double> v = a[start + k + half] * w;
          a[start + k] = u + v;
          a[start + k + half] = u - v;
        }
      }
    }
  }

  std::size_t n_;
  std::vector<std::size_t> rev_;
  std::vector<std::complex<double>> twiddle_;
  mutable std::vector<std::complex<double>> scratch_;
};

// Real-signal FFT of size n done as a complex FFT of size n/2 with even/odd
// packing. This is the plan the STFT and phase vocoder use per frame.
class RealFftPlan {
 public:
  explicit RealFftPlan(std::size_t n) : n_(n), half_(n / 2), plan_(n / 2) {
    if (!is_pow2(n) || n < 4)
      throw std::invalid_argument("RealFftPlan: size must be a power of two >= 4");
    unpack_.resize(half_ + 1);
    for (std::size_t k = 0; k <= half_; ++k) {
      const double ang = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
      unpack_[k] = {std::cos(ang), std::sin(ang)};
    }
    buf_.resize(half_);
  }

  std::size_t size() const { return n_; }
  std::size_t bins() const { return half_ + 1; }

  // x: n real samples -> spec: n/2+1 bins.
  void forward(const double* x, std::complex<double>* spec) const {
    for (std::size_t k = 0; k < half_; ++k) buf_[k] = {x[2 * k], x[2 * k + 1]};
    plan_.forward(buf_.data());
    for (std::size_t k = 0; k <= half_; ++k) {
      const std::complex<double> zk = (k == half_) ? buf_[0] : buf_[k];
      const std::complex<double> znk = (k == 0) ? buf_[0] : buf_[half_ - k];
      const std::complex<double> a = 0.5 * (zk + std::conj(znk));
      const std::complex<double> b =
          std::complex<double>(0.0, -0.5) * (zk - std::conj(znk));
      spec[k] = a + unpack_[k] * b;
    }
  }

  // spec: n/2+1 bins of a conjugate-symmetric spectrum -> x: n real samples.
  void inverse(const std::complex<double>* spec, double* x) const {
    for (std::size_t k = 0; k < half_; ++k) {
      const std::complex<double> xk = spec[k];
      const std::complex<double> xnk = std::conj(spec[half_ - k]);
      const std::complex<double> a = 0.5 * (xk + xnk);
      const std::complex<double> b = 0.5 * std::conj(unpack_[k]) * (xk - xnk);
      buf_[k] = a + std::complex<double>(0.0, 1.0) * b;
    }
    plan_.inverse(buf_.data());
    for (std::size_t k = 0; k < half_; ++k) {
      x[2 * k] = buf_[k].real();
      x[2 * k + 1] = buf_[k].imag();
    }
  }

 private:
  std::size_t n_;
  std::size_t half_;
  FftPlan plan_;
  std::vector<std::complex<double>> unpack_;
  mutable std::vector<std::complex<double>> buf_;
};

}  // namespace auscult::detail
