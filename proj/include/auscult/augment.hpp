#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "auscult/audio.hpp"
#include "auscult/detail/fft.hpp"
#include "auscult/detail/io.hpp"
#include "auscult/detail/trig.hpp"
#include "auscult/features.hpp"
#include "auscult/rng.hpp"

namespace auscult {

// ---------------------------------------------------------------------------
// Augmentation specs
// ---------------------------------------------------------------------------

enum class AugKind {
  CropAndPad,
  Noising,
  BrownianTapeSpeed,
  Scaling,
  PitchShift,
  TimeStretch,
  CircularTimeShift,
  SpecAugment,
};

inline constexpr int kNumAugKinds = 8;

inline const char* aug_kind_name(AugKind k) {
  switch (k) {
    case AugKind::CropAndPad: return "crop_and_pad";
    case AugKind::Noising: return "noising";
    case AugKind::BrownianTapeSpeed: return "brownian_tape_speed";
    case AugKind::Scaling: return "scaling";
    case AugKind::PitchShift: return "pitch_shift";
    case AugKind::TimeStretch: return "time_stretch";
    case AugKind::CircularTimeShift: return "circular_time_shift";
    case AugKind::SpecAugment: return "spec_augment";
  }
  throw std::invalid_argument("bad AugKind");
}

inline AugKind aug_kind_from_name(std::string_view name) {
  for (int i = 0; i < kNumAugKinds; ++i) {
    const AugKind k = static_cast<AugKind>(i);
    if (name == aug_kind_name(k)) return k;
  }
  throw std::runtime_error("unknown augmentation kind '" + std::string(name) + "'");
}

struct CropAndPadParams {
  double min_fraction = 0.0;
  double max_fraction = 0.0;
};
struct NoisingParams {
  double mean = 0.0;
  double stddev = 0.0;
};
struct BrownianTapeSpeedParams {
  double magnitude = 0.0;
};
struct ScalingParams {
  double min_factor = 0.0;
  double max_factor = 0.0;
};
struct PitchShiftParams {
  double min_factor = 0.0;
  double max_factor = 0.0;
};
struct TimeStretchParams {
  double min_stretch = 0.0;
  double max_stretch = 0.0;
};
struct CircularTimeShiftParams {};
struct SpecAugmentParams {
  int time_mask_max_frames = 0;
  int time_mask_count = 0;
  int freq_mask_max_bins = 0;
  int freq_mask_count = 0;
};

using AugParams =
    std::variant<CropAndPadParams, NoisingParams, BrownianTapeSpeedParams, ScalingParams,
                 PitchShiftParams, TimeStretchParams, CircularTimeShiftParams, SpecAugmentParams>;

// One parameterized augmentation. Constructed through the named factories,
// which enforce the parameter constraints (strict max > min where the grid
// demands it).
struct AugmentationSpec {
  AugKind kind;
  double probability;
  AugParams params;

  static AugmentationSpec crop_and_pad(double probability, double min_fraction,
                                       double max_fraction) {
    check_probability(probability);
    if (!(0.0 <= min_fraction && min_fraction < max_fraction && max_fraction <= 1.0))
      throw std::invalid_argument("crop_and_pad: need 0 <= min_fraction < max_fraction <= 1");
    return {AugKind::CropAndPad, probability, CropAndPadParams{min_fraction, max_fraction}};
  }
  static AugmentationSpec noising(double probability, double mean, double stddev) {
    check_probability(probability);
    if (stddev < 0.0) throw std::invalid_argument("noising: stddev must be >= 0");
    return {AugKind::Noising, probability, NoisingParams{mean, stddev}};
  }
  static AugmentationSpec brownian_tape_speed(double probability, double magnitude) {
    check_probability(probability);
    if (magnitude < 0.0) throw std::invalid_argument("brownian_tape_speed: magnitude must be >= 0");
    return {AugKind::BrownianTapeSpeed, probability, BrownianTapeSpeedParams{magnitude}};
  }
  static AugmentationSpec scaling(double probability, double min_factor, double max_factor) {
    check_probability(probability);
    if (!(0.0 < min_factor && min_factor < max_factor))
      throw std::invalid_argument("scaling: need 0 < min_factor < max_factor");
    return {AugKind::Scaling, probability, ScalingParams{min_factor, max_factor}};
  }
  static AugmentationSpec pitch_shift(double probability, double min_factor, double max_factor) {
    check_probability(probability);
    if (!(0.0 < min_factor && min_factor < max_factor))
      throw std::invalid_argument("pitch_shift: need 0 < min_factor < max_factor");
    return {AugKind::PitchShift, probability, PitchShiftParams{min_factor, max_factor}};
  }
  static AugmentationSpec time_stretch(double probability, double min_stretch,
                                       double max_stretch) {
    check_probability(probability);
    if (!(0.0 < min_stretch && min_stretch < max_stretch))
      throw std::invalid_argument("time_stretch: need 0 < min_stretch < max_stretch");
    return {AugKind::TimeStretch, probability, TimeStretchParams{min_stretch, max_stretch}};
  }
  static AugmentationSpec circular_time_shift(double probability) {
    check_probability(probability);
    return {AugKind::CircularTimeShift, probability, CircularTimeShiftParams{}};
  }
  static AugmentationSpec spec_augment(double probability, int time_mask_max_frames,
                                       int time_mask_count, int freq_mask_max_bins,
                                       int freq_mask_count) {
    check_probability(probability);
    if (time_mask_max_frames < 0 || time_mask_count < 0 || freq_mask_max_bins < 0 ||
        freq_mask_count < 0)
      throw std::invalid_argument("spec_augment: mask sizes and counts must be >= 0");
    return {AugKind::SpecAugment, probability,
            SpecAugmentParams{time_mask_max_frames, time_mask_count, freq_mask_max_bins,
                              freq_mask_count}};
  }

  bool is_spectrogram_domain() const { return kind == AugKind::SpecAugment; }

 private:
  static void check_probability(double p) {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("augmentation probability must be in [0, 1]");
  }
};

// Per-kind best parameters.
inline AugmentationSpec best_spec(AugKind kind) {
  switch (kind) {
    case AugKind::CropAndPad: return AugmentationSpec::crop_and_pad(1.0, 0.1, 0.5);
    case AugKind::Noising: return AugmentationSpec::noising(1.0, 0.2, 0.2);
    case AugKind::BrownianTapeSpeed: return AugmentationSpec::brownian_tape_speed(0.8, 20.0);
    case AugKind::Scaling: return AugmentationSpec::scaling(0.8, 0.25, 1.75);
    case AugKind::PitchShift: return AugmentationSpec::pitch_shift(0.8, 1.25, 1.75);
    case AugKind::TimeStretch: return AugmentationSpec::time_stretch(0.8, 0.75, 1.75);
    case AugKind::CircularTimeShift: return AugmentationSpec::circular_time_shift(1.0);
    case AugKind::SpecAugment: return AugmentationSpec::spec_augment(1.0, 24, 20, 20, 5);
  }
  throw std::invalid_argument("bad AugKind");
}

// Ordered sequence of one or two augmentations. SpecAugment, when present,
// must be the final step since it acts on the spectrogram.
struct AugmentationChain {
  std::vector<AugmentationSpec> steps;

  static AugmentationChain of(AugmentationSpec a) { return validated({std::move(a)}); }
  static AugmentationChain of(AugmentationSpec a, AugmentationSpec b) {
    return validated({std::move(a), std::move(b)});
  }
  static AugmentationChain validated(std::vector<AugmentationSpec> steps) {
    if (steps.empty() || steps.size() > 2)
      throw std::invalid_argument("chain must have 1 or 2 steps");
    int n_spec = 0;
    for (const auto& s : steps) n_spec += s.is_spectrogram_domain() ? 1 : 0;
    if (n_spec > 1) throw std::invalid_argument("chain may contain at most one spec_augment");
    if (n_spec == 1 && !steps.back().is_spectrogram_domain())
      throw std::invalid_argument("spec_augment must be the last chain step");
    AugmentationChain c;
    c.steps = std::move(steps);
    return c;
  }

  bool has_spec_augment() const {
    return !steps.empty() && steps.back().is_spectrogram_domain();
  }
};

// ---------------------------------------------------------------------------
// Deterministic kernels
// ---------------------------------------------------------------------------

// Keeps round((1-fraction)*N) samples starting at offset, zero-pads to N.
inline Waveform crop_and_pad_at(const Waveform& w, double fraction, std::size_t offset) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw std::invalid_argument("crop_and_pad_at: fraction must be in [0, 1]");
  const std::size_t n = w.size();
  const std::size_t keep =
      static_cast<std::size_t>(std::llround((1.0 - fraction) * static_cast<double>(n)));
  if (offset + keep > n) throw std::invalid_argument("crop_and_pad_at: segment out of range");
  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  out.samples.assign(n, 0.0f);
  std::copy(w.samples.begin() + static_cast<std::ptrdiff_t>(offset),
            w.samples.begin() + static_cast<std::ptrdiff_t>(offset + keep), out.samples.begin());
  return out;
}

inline Waveform crop_and_pad(const Waveform& w, double min_fraction, double max_fraction,
                             Rng& rng) {
  if (!(0.0 <= min_fraction && min_fraction < max_fraction && max_fraction <= 1.0))
    throw std::invalid_argument("crop_and_pad: need 0 <= min_fraction < max_fraction <= 1");
  const double f = rng.uniform(min_fraction, max_fraction);
  const std::size_t keep =
      static_cast<std::size_t>(std::llround((1.0 - f) * static_cast<double>(w.size())));
  const std::size_t offset = rng.uniform_int(w.size() - keep + 1);
  return crop_and_pad_at(w, f, offset);
}

inline Waveform add_noise(const Waveform& w, double mean, double stddev, Rng& rng) {
  if (stddev < 0.0) throw std::invalid_argument("add_noise: stddev must be >= 0");
  Waveform out = w;
  for (auto& x : out.samples)
    x = static_cast<float>(static_cast<double>(x) + rng.normal(mean, stddev));
  return out;
}

// Tape playback with a random-walk speed: per-sample increments of the speed
// are Normal(0, (magnitude/N)^2), speed is clamped to [0.1, 10], and the
// output reads the input at the accumulated positions (linear interpolation,
// zero once the read position passes the final sample).
inline Waveform brownian_tape_speed(const Waveform& w, double magnitude, Rng& rng) {
  if (magnitude < 0.0) throw std::invalid_argument("brownian_tape_speed: magnitude must be >= 0");
  const std::size_t n = w.size();
  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  out.samples.assign(n, 0.0f);
  if (n == 0) return out;
  out.samples[0] = w.samples[0];
  const double inc_std = magnitude / static_cast<double>(n);
  double walk = 0.0;
  double pos = 0.0;
  const double last = static_cast<double>(n - 1);
  for (std::size_t i = 1; i < n; ++i) {
    walk += rng.normal(0.0, inc_std);
    const double speed = std::clamp(1.0 + walk, 0.1, 10.0);
    pos += speed;
    if (pos > last) continue;  // past the final sample: leave zero
    const std::size_t idx = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(idx);
    out.samples[i] =
        (idx + 1 < n)
            ? static_cast<float>((1.0 - frac) * w.samples[idx] + frac * w.samples[idx + 1])
            : w.samples[n - 1];
  }
  return out;
}

inline Waveform scale_gain_by(const Waveform& w, double gain) {
  Waveform out = w;
  for (auto& x : out.samples) x = static_cast<float>(gain * static_cast<double>(x));
  return out;
}

inline Waveform scale_gain(const Waveform& w, double min_factor, double max_factor, Rng& rng) {
  if (!(0.0 < min_factor && min_factor < max_factor))
    throw std::invalid_argument("scale_gain: need 0 < min_factor < max_factor");
  return scale_gain_by(w, rng.uniform(min_factor, max_factor));
}

inline Waveform circular_shift_by(const Waveform& w, std::size_t k) {
  const std::size_t n = w.size();
  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  out.samples.resize(n);
  if (n == 0) return out;
  k %= n;
  // out[i] = w[(i - k) mod n]
  std::copy(w.samples.end() - static_cast<std::ptrdiff_t>(k), w.samples.end(),
            out.samples.begin());
  std::copy(w.samples.begin(), w.samples.end() - static_cast<std::ptrdiff_t>(k),
            out.samples.begin() + static_cast<std::ptrdiff_t>(k));
  return out;
}

inline Waveform circular_time_shift(const Waveform& w, Rng& rng) {
  if (w.size() == 0) return w;
  return circular_shift_by(w, rng.uniform_int(w.size()));
}

namespace detail {

// Phase-vocoder time-scale modification: 1024-sample FFT, 256-sample hop,
// Hann window. speed > 1 shortens, speed < 1 lengthens; pitch is preserved.
// Output length is round(N / speed).
inline Waveform pv_time_scale(const Waveform& w, double speed) {
  if (!(speed > 0.0) || !std::isfinite(speed))
    throw std::invalid_argument("pv_time_scale: speed must be positive and finite");
  constexpr int kWin = 1024;
  constexpr int kHop = 256;
  constexpr int kBins = kWin / 2 + 1;
  const std::size_t n = w.size();
  const std::size_t n_out =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) / speed));
  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  if (n_out == 0) return out;
  if (n < kWin) {
    // Too short for a single analysis frame; fall back to linear-interp reading.
    out.samples.resize(n_out, 0.0f);
    for (std::size_t i = 0; i < n_out; ++i) {
      const double p = static_cast<double>(i) * speed;
      const std::size_t idx = static_cast<std::size_t>(p);
      if (idx + 1 < n) {
        const double frac = p - static_cast<double>(idx);
        out.samples[i] =
            static_cast<float>((1.0 - frac) * w.samples[idx] + frac * w.samples[idx + 1]);
      } else if (idx < n) {
        out.samples[i] = w.samples[idx];
      }
    }
    return out;
  }

  static thread_local RealFftPlan plan(kWin);
  std::vector<double> window(kWin);
  for (int i = 0; i < kWin; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / kWin);

  std::vector<double> acc(n_out + kWin, 0.0);
  std::vector<double> norm(n_out + kWin, 0.0);
  std::vector<std::complex<double>> spec(kBins);
  std::vector<double> frame(kWin);
  std::vector<double> prev_ana_phase(kBins, 0.0);
  std::vector<double> syn_phase(kBins, 0.0);

  const auto princarg = [](double x) {
    return x - 2.0 * kPi * std::nearbyint(x / (2.0 * kPi));
  };

  long long prev_ana_pos = 0;
  for (std::size_t j = 0; static_cast<std::size_t>(j) * kHop <= n_out; ++j) {
    const long long ana_pos =
        std::llround(static_cast<double>(j) * static_cast<double>(kHop) * speed);
    for (int i = 0; i < kWin; ++i) {
      const long long src = ana_pos + i;
      frame[i] =
          (src >= 0 && src < static_cast<long long>(n)) ? window[i] * w.samples[src] : 0.0;
    }
    plan.forward(frame.data(), spec.data());

    if (j == 0) {
      for (int k = 0; k < kBins; ++k) {
        prev_ana_phase[k] = fast_atan2(spec[k].imag(), spec[k].real());
        syn_phase[k] = prev_ana_phase[k];
      }
      // First frame passes through unchanged.
    } else {
      const double dt = static_cast<double>(std::max<long long>(1, ana_pos - prev_ana_pos));
      double peak = 0.0;
      for (int k = 0; k < kBins; ++k) peak = std::max(peak, std::norm(spec[k]));
      // Bins 100 dB below the frame peak synthesize as silence; skipping
      // their phase tracking makes tonal frames cheap.
      const double gate = peak * 1e-10;
      for (int k = 0; k < kBins; ++k) {
        const double omega = 2.0 * kPi * static_cast<double>(k) / kWin;
        const double mag2 = std::norm(spec[k]);
        if (mag2 <= gate) {
          // carry the expected phases forward
          prev_ana_phase[k] = princarg(prev_ana_phase[k] + omega * dt);
          syn_phase[k] = princarg(syn_phase[k] + omega * kHop);
          spec[k] = {0.0, 0.0};
          continue;
        }
        const double ana_phase = fast_atan2(spec[k].imag(), spec[k].real());
        const double dev = princarg(ana_phase - prev_ana_phase[k] - omega * dt);
        const double inst_freq = omega + dev / dt;
        syn_phase[k] = princarg(syn_phase[k] + inst_freq * kHop);
        const double mag = std::sqrt(mag2);
        double sn, cs;
        fast_sincos(syn_phase[k], sn, cs);
        spec[k] = {mag * cs, mag * sn};
        prev_ana_phase[k] = ana_phase;
      }
    }
    prev_ana_pos = ana_pos;

    plan.inverse(spec.data(), frame.data());
    const std::size_t off = static_cast<std::size_t>(j) * kHop;
    for (int i = 0; i < kWin; ++i) {
      acc[off + i] += frame[i] * window[i];
      norm[off + i] += window[i] * window[i];
    }
  }

  out.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i)
    out.samples[i] = static_cast<float>(acc[i] / std::max(norm[i], 1e-9));
  return out;
}

// Reads the input at positions i*step with a windowed-sinc kernel (12 zero
// crossings per side); anti-aliases when step > 1.
inline Waveform resample_read_step(const Waveform& w, double step) {
  if (!(step > 0.0) || !std::isfinite(step))
    throw std::invalid_argument("resample_read_step: step must be positive and finite");
  const std::size_t n = w.size();
  const std::size_t n_out =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) / step));
  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  out.samples.resize(n_out, 0.0f);
  const double cutoff = 0.5 / std::max(1.0, step);
  const double halfwidth = 12.0 * std::max(1.0, step);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double t = static_cast<double>(i) * step;
    const std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(
        0, static_cast<std::ptrdiff_t>(std::ceil(t - halfwidth)));
    const std::ptrdiff_t j1 = std::min<std::ptrdiff_t>(
        static_cast<std::ptrdiff_t>(n) - 1,
        static_cast<std::ptrdiff_t>(std::floor(t + halfwidth)));
    double v = 0.0;
    for (std::ptrdiff_t jj = j0; jj <= j1; ++jj) {
      const double d = t - static_cast<double>(jj);
      const double sinc =
          (std::abs(d) < 1e-12) ? 2.0 * cutoff : std::sin(2.0 * kPi * cutoff * d) / (kPi * d);
      const double win = 0.5 + 0.5 * std::cos(kPi * d / halfwidth);
      v += w.samples[jj] * sinc * win;
    }
    out.samples[i] = static_cast<float>(v);
  }
  return out;
}

inline void fit_length_end(Waveform& w, std::size_t target) {
  // End-crop or zero-pad so chain steps compose on fixed-length clips.
  w.samples.resize(target, 0.0f);
}

}  // namespace detail

// Every frequency multiplied by factor, duration preserved: phase-vocoder
// stretch to round(N*factor) samples, sinc resample reading at step factor,
// end-crop/pad to N.
inline Waveform pitch_shift_by(const Waveform& w, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("pitch_shift_by: factor must be > 0");
  const std::size_t n = w.size();
  Waveform stretched = detail::pv_time_scale(w, 1.0 / factor);
  Waveform shifted = detail::resample_read_step(stretched, factor);
  detail::fit_length_end(shifted, n);
  return shifted;
}

inline Waveform pitch_shift(const Waveform& w, double min_factor, double max_factor, Rng& rng) {
  if (!(0.0 < min_factor && min_factor < max_factor))
    throw std::invalid_argument("pitch_shift: need 0 < min_factor < max_factor");
  return pitch_shift_by(w, rng.uniform(min_factor, max_factor));
}

// Phase-vocoder stretch to round(N/stretch) samples at unchanged pitch.
inline Waveform time_stretch_to(const Waveform& w, double stretch) {
  if (!(stretch > 0.0)) throw std::invalid_argument("time_stretch_to: stretch must be > 0");
  return detail::pv_time_scale(w, stretch);
}

inline Waveform time_stretch(const Waveform& w, double min_stretch, double max_stretch,
                             Rng& rng) {
  if (!(0.0 < min_stretch && min_stretch < max_stretch))
    throw std::invalid_argument("time_stretch: need 0 < min_stretch < max_stretch");
  Waveform out = time_stretch_to(w, rng.uniform(min_stretch, max_stretch));
  detail::fit_length_end(out, w.size());
  return out;
}

// Zeroes random time frames and mel bins. Mask widths are Uniform{0..max}
// (clipped to the spectrogram dimension), starts are uniform, masked cells
// are set to 0 in the log-mel domain.
inline Spectrogram spec_augment(const Spectrogram& s, int time_mask_max_frames,
                                int time_mask_count, int freq_mask_max_bins, int freq_mask_count,
                                Rng& rng) {
  if (time_mask_max_frames < 0 || time_mask_count < 0 || freq_mask_max_bins < 0 ||
      freq_mask_count < 0)
    throw std::invalid_argument("spec_augment: mask sizes and counts must be >= 0");
  Spectrogram out = s;
  const int t_max = std::min(time_mask_max_frames, s.n_frames);
  for (int i = 0; i < time_mask_count; ++i) {
    const int width = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(t_max) + 1));
    const int start = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(s.n_frames)));
    const int end = std::min(start + width, s.n_frames);
    for (int m = 0; m < s.n_mel_bins; ++m)
      for (int t = start; t < end; ++t) out.at(m, t) = 0.0f;
  }
  const int f_max = std::min(freq_mask_max_bins, s.n_mel_bins);
  for (int i = 0; i < freq_mask_count; ++i) {
    const int width = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(f_max) + 1));
    const int start = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(s.n_mel_bins)));
    const int end = std::min(start + width, s.n_mel_bins);
    for (int m = start; m < end; ++m)
      for (int t = 0; t < s.n_frames; ++t) out.at(m, t) = 0.0f;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Probabilistic application
// ---------------------------------------------------------------------------

// Applies a time-domain spec with its probability; parameters are freshly
// sampled on every application.
inline Waveform apply_spec(const AugmentationSpec& spec, const Waveform& w, Rng& rng) {
  if (spec.is_spectrogram_domain())
    throw std::invalid_argument("apply_spec: spec_augment cannot be applied to a waveform");
  if (!rng.bernoulli(spec.probability)) return w;
  switch (spec.kind) {
    case AugKind::CropAndPad: {
      const auto& p = std::get<CropAndPadParams>(spec.params);
      return crop_and_pad(w, p.min_fraction, p.max_fraction, rng);
    }
    case AugKind::Noising: {
      const auto& p = std::get<NoisingParams>(spec.params);
      return add_noise(w, p.mean, p.stddev, rng);
    }
    case AugKind::BrownianTapeSpeed: {
      const auto& p = std::get<BrownianTapeSpeedParams>(spec.params);
      return brownian_tape_speed(w, p.magnitude, rng);
    }
    case AugKind::Scaling: {
      const auto& p = std::get<ScalingParams>(spec.params);
      return scale_gain(w, p.min_factor, p.max_factor, rng);
    }
    case AugKind::PitchShift: {
      const auto& p = std::get<PitchShiftParams>(spec.params);
      return pitch_shift(w, p.min_factor, p.max_factor, rng);
    }
    case AugKind::TimeStretch: {
      const auto& p = std::get<TimeStretchParams>(spec.params);
      return time_stretch(w, p.min_stretch, p.max_stretch, rng);
    }
    case AugKind::CircularTimeShift:
      return circular_time_shift(w, rng);
    default:
      throw std::invalid_argument("apply_spec: bad kind for waveform input");
  }
}

inline Spectrogram apply_spec(const AugmentationSpec& spec, const Spectrogram& s, Rng& rng) {
  if (!spec.is_spectrogram_domain())
    throw std::invalid_argument("apply_spec: time-domain augmentation cannot be applied to a spectrogram");
  if (!rng.bernoulli(spec.probability)) return s;
  const auto& p = std::get<SpecAugmentParams>(spec.params);
  return spec_augment(s, p.time_mask_max_frames, p.time_mask_count, p.freq_mask_max_bins,
                      p.freq_mask_count, rng);
}

// Runs the chain: time-domain steps in order, feature conversion, then the
// SpecAugment step if the chain has one. Deterministic given (chain, w, rng).
template <typename FeatureFn>
Spectrogram apply_chain(const AugmentationChain& chain, const Waveform& w,
                        FeatureFn&& feature_fn, Rng& rng) {
  if (chain.steps.empty() || chain.steps.size() > 2)
    throw std::invalid_argument("apply_chain: chain must have 1 or 2 steps");
  for (std::size_t i = 0; i + 1 < chain.steps.size(); ++i)
    if (chain.steps[i].is_spectrogram_domain())
      throw std::invalid_argument("apply_chain: spec_augment must be the last step");

  Waveform cur = w;
  for (const auto& step : chain.steps)
    if (!step.is_spectrogram_domain()) cur = apply_spec(step, cur, rng);
  Spectrogram s = feature_fn(cur);
  if (chain.has_spec_augment()) s = apply_spec(chain.steps.back(), s, rng);
  return s;
}

// ---------------------------------------------------------------------------
// Chain serialization
// ---------------------------------------------------------------------------

namespace detail {

inline void append_params(std::string& out, const AugmentationSpec& s, const char* sep) {
  switch (s.kind) {
    case AugKind::CropAndPad: {
      const auto& p = std::get<CropAndPadParams>(s.params);
      out += "min_fraction = " + fmt_double(p.min_fraction) + sep;
      out += "max_fraction = " + fmt_double(p.max_fraction) + sep;
      break;
    }
    case AugKind::Noising: {
      const auto& p = std::get<NoisingParams>(s.params);
      out += "mean = " + fmt_double(p.mean) + sep;
      out += "stddev = " + fmt_double(p.stddev) + sep;
      break;
    }
    case AugKind::BrownianTapeSpeed: {
      const auto& p = std::get<BrownianTapeSpeedParams>(s.params);
      out += "magnitude = " + fmt_double(p.magnitude) + sep;
      break;
    }
    case AugKind::Scaling: {
      const auto& p = std::get<ScalingParams>(s.params);
      out += "min_factor = " + fmt_double(p.min_factor) + sep;
      out += "max_factor = " + fmt_double(p.max_factor) + sep;
      break;
    }
    case AugKind::PitchShift: {
      const auto& p = std::get<PitchShiftParams>(s.params);
      out += "min_factor = " + fmt_double(p.min_factor) + sep;
      out += "max_factor = " + fmt_double(p.max_factor) + sep;
      break;
    }
    case AugKind::TimeStretch: {
      const auto& p = std::get<TimeStretchParams>(s.params);
      out += "min_stretch = " + fmt_double(p.min_stretch) + sep;
      out += "max_stretch = " + fmt_double(p.max_stretch) + sep;
      break;
    }
    case AugKind::CircularTimeShift:
      break;
    case AugKind::SpecAugment: {
      const auto& p = std::get<SpecAugmentParams>(s.params);
      out += "time_mask_max_frames = " + std::to_string(p.time_mask_max_frames) + sep;
      out += "time_mask_count = " + std::to_string(p.time_mask_count) + sep;
      out += "freq_mask_max_bins = " + std::to_string(p.freq_mask_max_bins) + sep;
      out += "freq_mask_count = " + std::to_string(p.freq_mask_count) + sep;
      break;
    }
  }
}

struct KvSection {
  std::vector<std::pair<std::string, std::string>> pairs;
  double number(const std::string& key) const {
    for (const auto& [k, v] : pairs)
      if (k == key) return parse_double(v);
    throw std::runtime_error("chain config: missing key '" + key + "'");
  }
  int integer(const std::string& key) const {
    return static_cast<int>(static_cast<long long>(number(key)));
  }
  std::string text(const std::string& key) const {
    for (const auto& [k, v] : pairs)
      if (k == key) return v;
    throw std::runtime_error("chain config: missing key '" + key + "'");
  }
};

inline AugmentationSpec spec_from_kv(const KvSection& kv) {
  const AugKind kind = aug_kind_from_name(kv.text("kind"));
  const double p = kv.number("probability");
  switch (kind) {
    case AugKind::CropAndPad:
      return AugmentationSpec::crop_and_pad(p, kv.number("min_fraction"),
                                            kv.number("max_fraction"));
    case AugKind::Noising:
      return AugmentationSpec::noising(p, kv.number("mean"), kv.number("stddev"));
    case AugKind::BrownianTapeSpeed:
      return AugmentationSpec::brownian_tape_speed(p, kv.number("magnitude"));
    case AugKind::Scaling:
      return AugmentationSpec::scaling(p, kv.number("min_factor"), kv.number("max_factor"));
    case AugKind::PitchShift:
      return AugmentationSpec::pitch_shift(p, kv.number("min_factor"), kv.number("max_factor"));
    case AugKind::TimeStretch:
      return AugmentationSpec::time_stretch(p, kv.number("min_stretch"),
                                            kv.number("max_stretch"));
    case AugKind::CircularTimeShift:
      return AugmentationSpec::circular_time_shift(p);
    case AugKind::SpecAugment:
      return AugmentationSpec::spec_augment(p, kv.integer("time_mask_max_frames"),
                                            kv.integer("time_mask_count"),
                                            kv.integer("freq_mask_max_bins"),
                                            kv.integer("freq_mask_count"));
  }
  throw std::runtime_error("chain config: bad kind");
}

}  // namespace detail

// Flat key-value text config, one [step] section per chain step. Doubles are
// written in shortest round-trip form, so serialize/parse is bit-exact.
inline std::string chain_to_config(const AugmentationChain& chain) {
  std::string out;
  for (const auto& s : chain.steps) {
    out += "[step]\n";
    out += "kind = ";
    out += aug_kind_name(s.kind);
    out += "\n";
    out += "probability = " + detail::fmt_double(s.probability) + "\n";
    detail::append_params(out, s, "\n");
    out += "\n";
  }
  return out;
}

inline AugmentationChain chain_from_config(const std::string& text) {
  std::vector<detail::KvSection> sections;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const auto line = detail::trim(std::string_view(text).substr(start, end - start));
    start = end + 1;
    if (line.empty() || line.front() == '#') {
      if (start > text.size()) break;
      continue;
    }
    if (line == "[step]") {
      sections.emplace_back();
    } else {
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos)
        throw std::runtime_error("chain config: expected 'key = value', got '" +
                                 std::string(line) + "'");
      if (sections.empty()) throw std::runtime_error("chain config: key before [step]");
      sections.back().pairs.emplace_back(std::string(detail::trim(line.substr(0, eq))),
                                         std::string(detail::trim(line.substr(eq + 1))));
    }
    if (start > text.size()) break;
  }
  if (sections.empty()) throw std::runtime_error("chain config: no [step] sections");
  std::vector<AugmentationSpec> steps;
  steps.reserve(sections.size());
  for (const auto& kv : sections) steps.push_back(detail::spec_from_kv(kv));
  return AugmentationChain::validated(std::move(steps));
}

// Single-line form used inside TSV manifests:
//   kind(probability=...,key=...)->kind(...)
inline std::string chain_to_line(const AugmentationChain& chain) {
  std::string out;
  for (std::size_t i = 0; i < chain.steps.size(); ++i) {
    if (i) out += "->";
    const auto& s = chain.steps[i];
    out += aug_kind_name(s.kind);
    std::string body = "probability = " + detail::fmt_double(s.probability) + ";";
    detail::append_params(body, s, ";");
    // compact: drop spaces and the trailing separator
    std::string compact;
    for (char c : body)
      if (c != ' ') compact += c;
    if (!compact.empty() && compact.back() == ';') compact.pop_back();
    for (auto& c : compact)
      if (c == ';') c = ',';
    out += "(" + compact + ")";
  }
  return out;
}

inline AugmentationChain chain_from_line(std::string_view line) {
  std::vector<AugmentationSpec> steps;
  std::size_t start = 0;
  while (start < line.size()) {
    std::size_t arrow = line.find("->", start);
    if (arrow == std::string_view::npos) arrow = line.size();
    const auto step_str = line.substr(start, arrow - start);
    const std::size_t open = step_str.find('(');
    if (open == std::string_view::npos || step_str.back() != ')')
      throw std::runtime_error("bad chain line: '" + std::string(line) + "'");
    detail::KvSection kv;
    kv.pairs.emplace_back("kind", std::string(step_str.substr(0, open)));
    const auto body = step_str.substr(open + 1, step_str.size() - open - 2);
    if (!body.empty()) {
      for (const auto& item : detail::split(body, ',')) {
        const std::size_t eq = item.find('=');
        if (eq == std::string_view::npos)
          throw std::runtime_error("bad chain line item: '" + std::string(item) + "'");
        kv.pairs.emplace_back(std::string(item.substr(0, eq)), std::string(item.substr(eq + 1)));
      }
    }
    steps.push_back(detail::spec_from_kv(kv));
    start = (arrow == line.size()) ? line.size() : arrow + 2;
  }
  return AugmentationChain::validated(std::move(steps));
}

}  // namespace auscult
