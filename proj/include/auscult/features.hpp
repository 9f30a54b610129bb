#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "auscult/audio.hpp"
#include "auscult/detail/fft.hpp"
#include "auscult/detail/io.hpp"

namespace auscult {

// Log-mel time-frequency matrix, stored row-major [n_mel_bins x n_frames].
struct Spectrogram {
  std::vector<float> values;
  int n_mel_bins = 0;
  int n_frames = 0;
  float frame_rate_hz = 0.0f;

  float& at(int mel, int frame) { return values[static_cast<std::size_t>(mel) * n_frames + frame]; }
  float at(int mel, int frame) const {
    return values[static_cast<std::size_t>(mel) * n_frames + frame];
  }
};

struct FeatureConfig {
  int sample_rate_hz = kCanonicalRateHz;
  double window_s = 0.025;
  double hop_s = 0.010;
  int n_mels = 80;
  double fmin_hz = 60.0;
  double fmax_hz = 7800.0;
  double log_floor = 1e-6;

  int win_len() const { return static_cast<int>(std::llround(window_s * sample_rate_hz)); }
  int hop_len() const { return static_cast<int>(std::llround(hop_s * sample_rate_hz)); }
};

inline int stft_frame_count(std::size_t n_samples, int win_len, int hop) {
  if (n_samples < static_cast<std::size_t>(win_len)) return 0;
  return 1 + static_cast<int>((n_samples - static_cast<std::size_t>(win_len)) / hop);
}

// Hann-windowed STFT. FFT size is win_len rounded up to a power of two;
// frames are [n_fft/2+1 x n_frames] in frame-major order.
inline std::vector<std::vector<std::complex<double>>> stft(const Waveform& w, int win_len,
                                                           int hop) {
  if (hop <= 0) throw std::invalid_argument("stft: hop must be > 0");
  if (win_len <= 0 || static_cast<std::size_t>(win_len) > w.size())
    throw std::invalid_argument("stft: window longer than signal");
  const std::size_t n_fft = std::max<std::size_t>(4, detail::next_pow2(static_cast<std::size_t>(win_len)));
  const int n_frames = stft_frame_count(w.size(), win_len, hop);
  detail::RealFftPlan plan(n_fft);

  std::vector<double> window(static_cast<std::size_t>(win_len));
  for (int i = 0; i < win_len; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * detail::kPi * i / win_len);

  std::vector<double> frame(n_fft, 0.0);
  std::vector<std::vector<std::complex<double>>> out(
      n_frames, std::vector<std::complex<double>>(n_fft / 2 + 1));
  for (int t = 0; t < n_frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * hop;
    for (int i = 0; i < win_len; ++i)
      frame[i] = static_cast<double>(w.samples[start + i]) * window[i];
    std::fill(frame.begin() + win_len, frame.end(), 0.0);
    plan.forward(frame.data(), out[t].data());
  }
  return out;
}

namespace detail {

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters with unit peaks, equally spaced on the mel scale.
// Stored sparse: per filter, first bin index plus contiguous weights.
struct MelFilterbank {
  struct Filter {
    int first_bin = 0;
    std::vector<double> weights;
  };
  std::vector<Filter> filters;
  std::vector<double> centers_hz;

  MelFilterbank(int n_mels, double fmin, double fmax, int n_fft, int rate) {
    if (!(0.0 <= fmin && fmin < fmax && fmax <= rate / 2.0))
      throw std::invalid_argument("mel filterbank: need 0 <= fmin < fmax <= rate/2");
    if (n_mels < 1) throw std::invalid_argument("mel filterbank: n_mels must be >= 1");
    const int n_bins = n_fft / 2 + 1;
    const double mel_lo = hz_to_mel(fmin);
    const double mel_hi = hz_to_mel(fmax);
    std::vector<double> edges(n_mels + 2);
    for (int i = 0; i < n_mels + 2; ++i)
      edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
    centers_hz.assign(edges.begin() + 1, edges.end() - 1);
    filters.resize(n_mels);
    for (int m = 0; m < n_mels; ++m) {
      const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
      Filter f;
      f.first_bin = -1;
      for (int k = 0; k < n_bins; ++k) {
        const double hz = static_cast<double>(k) * rate / n_fft;
        double wgt = 0.0;
        if (hz > lo && hz < hi)
          wgt = (hz <= center) ? (hz - lo) / (center - lo) : (hi - hz) / (hi - center);
        if (wgt > 0.0) {
          if (f.first_bin < 0) f.first_bin = k;
          f.weights.push_back(wgt);
        } else if (f.first_bin >= 0) {
          break;  // triangles are contiguous in frequency
        }
      }
      if (f.first_bin < 0) f.first_bin = 0;
      filters[m] = std::move(f);
    }
  }

};

}  // namespace detail

inline std::vector<double> mel_center_frequencies(const FeatureConfig& cfg) {
  const std::size_t n_fft = detail::next_pow2(static_cast<std::size_t>(cfg.win_len()));
  return detail::MelFilterbank(cfg.n_mels, cfg.fmin_hz, cfg.fmax_hz,
                               static_cast<int>(n_fft), cfg.sample_rate_hz)
      .centers_hz;
}

namespace detail {

// Per-thread cache of the window, FFT plan, and filterbank for one feature
// configuration; training loops call log_mel with a fixed config millions of
// times.
struct MelPipeline {
  int win_len = 0, hop = 0;
  std::size_t n_fft = 0;
  FeatureConfig cfg;
  std::vector<double> window;
  RealFftPlan plan;
  MelFilterbank bank;

  explicit MelPipeline(const FeatureConfig& c)
      : win_len(c.win_len()),
        hop(c.hop_len()),
        n_fft(std::max<std::size_t>(4, next_pow2(static_cast<std::size_t>(c.win_len())))),
        cfg(c),
        plan(n_fft),
        bank(c.n_mels, c.fmin_hz, c.fmax_hz, static_cast<int>(n_fft), c.sample_rate_hz) {
    if (win_len <= 0 || hop <= 0)
      throw std::invalid_argument("log_mel: window and hop must be positive");
    window.resize(static_cast<std::size_t>(win_len));
    for (int i = 0; i < win_len; ++i)
      window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / win_len);
  }

  bool matches(const FeatureConfig& c) const {
    return cfg.sample_rate_hz == c.sample_rate_hz && cfg.window_s == c.window_s &&
           cfg.hop_s == c.hop_s && cfg.n_mels == c.n_mels && cfg.fmin_hz == c.fmin_hz &&
           cfg.fmax_hz == c.fmax_hz && cfg.log_floor == c.log_floor;
  }
};

}  // namespace detail

// Log-mel spectrogram: power spectrum -> triangular mel filterbank ->
// natural log with additive floor.
inline Spectrogram log_mel(const Waveform& w, const FeatureConfig& cfg = {}) {
  if (w.sample_rate_hz != cfg.sample_rate_hz)
    throw std::invalid_argument("log_mel: waveform rate does not match feature config");
  static thread_local std::unique_ptr<detail::MelPipeline> pipe;
  if (!pipe || !pipe->matches(cfg)) pipe = std::make_unique<detail::MelPipeline>(cfg);

  const int n_frames = stft_frame_count(w.size(), pipe->win_len, pipe->hop);
  if (n_frames <= 0) throw std::invalid_argument("log_mel: waveform shorter than the window");

  Spectrogram s;
  s.n_mel_bins = cfg.n_mels;
  s.n_frames = n_frames;
  s.frame_rate_hz = static_cast<float>(1.0 / cfg.hop_s);
  s.values.resize(static_cast<std::size_t>(s.n_mel_bins) * s.n_frames);
  std::vector<double> frame(pipe->n_fft, 0.0);
  std::vector<std::complex<double>> spec(pipe->n_fft / 2 + 1);
  std::vector<double> power(pipe->n_fft / 2 + 1);
  for (int t = 0; t < n_frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * pipe->hop;
    for (int i = 0; i < pipe->win_len; ++i)
      frame[i] = static_cast<double>(w.samples[start + i]) * pipe->window[i];
    pipe->plan.forward(frame.data(), spec.data());
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spec[k]);
    for (int m = 0; m < cfg.n_mels; ++m) {
      const auto& f = pipe->bank.filters[m];
      double acc = 0.0;
      for (std::size_t j = 0; j < f.weights.size(); ++j)
        acc += f.weights[j] * power[f.first_bin + j];
      s.at(m, t) = static_cast<float>(std::log(acc + cfg.log_floor));
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Dump formats
// ---------------------------------------------------------------------------

inline constexpr char kSpectrogramMagic[8] = {'A', 'U', 'S', 'C', 'S', 'P', 'E', 'C'};

inline std::string spectrogram_to_bytes(const Spectrogram& s) {
  detail::ByteWriter bw;
  bw.raw(kSpectrogramMagic, 8);
  bw.u32(1);  // format version
  bw.u32(static_cast<std::uint32_t>(s.n_mel_bins));
  bw.u32(static_cast<std::uint32_t>(s.n_frames));
  bw.f32(s.frame_rate_hz);
  for (float v : s.values) bw.f32(v);
  return std::move(bw.bytes);
}

inline Spectrogram spectrogram_from_bytes(std::string_view bytes) {
  detail::ByteReader br{bytes};
  char magic[8];
  br.raw(magic, 8);
  if (std::memcmp(magic, kSpectrogramMagic, 8) != 0)
    throw std::runtime_error("not a spectrogram dump");
  if (br.u32() != 1) throw std::runtime_error("unsupported spectrogram dump version");
  Spectrogram s;
  s.n_mel_bins = static_cast<int>(br.u32());
  s.n_frames = static_cast<int>(br.u32());
  s.frame_rate_hz = br.f32();
  s.values.resize(static_cast<std::size_t>(s.n_mel_bins) * s.n_frames);
  for (auto& v : s.values) v = br.f32();
  return s;
}

inline void save_spectrogram(const Spectrogram& s, const std::filesystem::path& path) {
  detail::write_file_atomic(path, spectrogram_to_bytes(s));
}

inline Spectrogram load_spectrogram(const std::filesystem::path& path) {
  return spectrogram_from_bytes(detail::read_text_file(path));
}

// Debug CSV: one row per mel bin, one column per frame.
inline std::string spectrogram_to_csv(const Spectrogram& s) {
  std::string out;
  for (int m = 0; m < s.n_mel_bins; ++m) {
    for (int t = 0; t < s.n_frames; ++t) {
      if (t) out += ",";
      out += detail::fmt_double(static_cast<double>(s.at(m, t)));
    }
    out += "\n";
  }
  return out;
}

}  // namespace auscult
