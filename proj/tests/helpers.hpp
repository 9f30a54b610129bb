#pragma once

#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "auscult/audio.hpp"

namespace testhelp {

// Naive O(n^2) DFT magnitude — the independent oracle for spectral checks.
inline std::vector<double> dft_magnitude(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> mag(n / 2 + 1, 0.0);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * 3.14159265358979323846 * static_cast<double>(k) *
                         static_cast<double>(i) / static_cast<double>(n);
      re += x[i] * std::cos(ang);
      im += x[i] * std::sin(ang);
    }
    mag[k] = std::sqrt(re * re + im * im);
  }
  return mag;
}

// Dominant frequency of a waveform segment via the DFT oracle. Uses up to
// n_fft samples from the middle of the signal.
inline double dominant_freq_hz(const auscult::Waveform& w, std::size_t n_fft = 4096) {
  const std::size_t n = std::min(n_fft, w.size());
  const std::size_t start = (w.size() - n) / 2;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Hann window keeps leakage from smearing the peak.
    const double win = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * i / n);
    x[i] = win * w.samples[start + i];
  }
  const auto mag = dft_magnitude(x);
  std::size_t best = 0;
  for (std::size_t k = 1; k < mag.size(); ++k)
    if (mag[k] > mag[best]) best = k;
  return static_cast<double>(best) * w.sample_rate_hz / static_cast<double>(n);
}

inline double bin_width_hz(const auscult::Waveform& w, std::size_t n_fft = 4096) {
  const std::size_t n = std::min(n_fft, w.size());
  return static_cast<double>(w.sample_rate_hz) / static_cast<double>(n);
}

inline auscult::Waveform sine_wave(double freq_hz, double duration_s, int rate,
                                   double amplitude = 0.5) {
  auscult::Waveform w;
  w.sample_rate_hz = rate;
  w.samples.resize(auscult::standard_len(duration_s, rate));
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = static_cast<float>(
        amplitude * std::sin(2.0 * 3.14159265358979323846 * freq_hz * i / rate));
  return w;
}

// Fresh temp directory under the build tree.
inline std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("auscult_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testhelp
