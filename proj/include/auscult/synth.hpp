#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "auscult/audio.hpp"
#include "auscult/detail/fft.hpp"
#include "auscult/rng.hpp"

namespace auscult {

// Synthetic stand-in corpus: short acoustic events whose classes are
// separable in log-mel space by construction. Class kinds cycle through tone
// bursts, amplitude-modulated low-passed noise, and high-passed noise bursts;
// higher class indices move the parameters into new registers.
namespace detail {

inline void add_tone_bursts(std::vector<float>& x, int rate, double freq, Rng& rng) {
  const int n = static_cast<int>(x.size());
  const int burst_len = rate / 4;  // 0.25 s
  const int n_bursts = 3;
  for (int b = 0; b < n_bursts; ++b) {
    const double f = freq * (1.0 + 0.05 * (rng.uniform() - 0.5));
    const int max_start = n - burst_len;
    const int start = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_start) + 1));
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    for (int i = 0; i < burst_len; ++i) {
      const double env = 0.5 - 0.5 * std::cos(2.0 * kPi * i / burst_len);
      x[start + i] += static_cast<float>(
          0.5 * env * std::sin(2.0 * kPi * f * i / rate + phase));
    }
  }
}

inline void add_am_noise(std::vector<float>& x, int rate, int smooth_len, double am_rate_hz,
                         Rng& rng) {
  const int n = static_cast<int>(x.size());
  std::vector<double> noise(n);
  for (auto& v : noise) v = rng.normal(0.0, 1.0);
  // Moving-average low-pass tilts energy toward low mel bins.
  std::vector<double> sm(n, 0.0);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += noise[i];
    if (i >= smooth_len) acc -= noise[i - smooth_len];
    sm[i] = acc / smooth_len;
  }
  const double phase = rng.uniform(0.0, 2.0 * kPi);
  for (int i = 0; i < n; ++i) {
    const double am = 0.5 + 0.5 * std::sin(2.0 * kPi * am_rate_hz * i / rate + phase);
    x[i] += static_cast<float>(0.8 * am * sm[i]);
  }
}

inline void add_highpass_bursts(std::vector<float>& x, int rate, Rng& rng) {
  const int n = static_cast<int>(x.size());
  const int burst_len = rate / 5;  // 0.2 s
  const int n_bursts = 4;
  for (int b = 0; b < n_bursts; ++b) {
    const int max_start = n - burst_len;
    const int start = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_start) + 1));
    double prev = rng.normal(0.0, 1.0);
    for (int i = 0; i < burst_len; ++i) {
      const double cur = rng.normal(0.0, 1.0);
      const double env = 0.5 - 0.5 * std::cos(2.0 * kPi * i / burst_len);
      x[start + i] += static_cast<float>(0.35 * env * (cur - prev));  // first difference
      prev = cur;
    }
  }
}

}  // namespace detail

inline Waveform synth_clip(int class_index, double clip_s, int rate, Rng& rng) {
  Waveform w;
  w.sample_rate_hz = rate;
  w.samples.assign(standard_len(clip_s, rate), 0.0f);
  const int kind = class_index % 3;
  const int reg = class_index / 3;
  switch (kind) {
    case 0:
      detail::add_tone_bursts(w.samples, rate, 440.0 * (reg + 1), rng);
      break;
    case 1:
      detail::add_am_noise(w.samples, rate, 8 * (reg + 1), 4.0 + 4.0 * reg, rng);
      break;
    default:
      detail::add_highpass_bursts(w.samples, rate, rng);
      break;
  }
  return w;
}

struct SynthConfig {
  int n_classes = 3;
  int clips_per_class = 200;
  double clip_s = 2.0;
  int sample_rate_hz = kCanonicalRateHz;
  std::uint64_t seed = 0;
};

// Writes <out_dir>/wav/*.wav plus <out_dir>/manifest.tsv with one-vs-rest
// task columns and a 60/20/20 train / probe_train / probe_eval split.
inline Manifest synth_corpus(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.n_classes < 1 || cfg.clips_per_class < 1)
    throw std::invalid_argument("synth_corpus: counts must be >= 1");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "wav");

  Manifest m;
  for (int c = 0; c < cfg.n_classes; ++c) m.task_names.push_back("class_" + std::to_string(c));

  for (int c = 0; c < cfg.n_classes; ++c) {
    for (int i = 0; i < cfg.clips_per_class; ++i) {
      Rng rng = Rng::from_parts(cfg.seed, static_cast<std::uint64_t>(c),
                                static_cast<std::uint64_t>(i));
      const Waveform w = synth_clip(c, cfg.clip_s, cfg.sample_rate_hz, rng);
      char name[64];
      std::snprintf(name, sizeof(name), "class%d_%04d.wav", c, i);
      const std::string rel = std::string("wav/") + name;
      save_wav(w, out_dir / rel);

      ClipManifestEntry e;
      e.source_path = rel;
      e.clip_start_s = 0.0;
      e.clip_len_s = cfg.clip_s;
      const int slot = i % 5;
      e.split = (slot <= 2) ? kSplitTrain : (slot == 3 ? kSplitProbeTrain : kSplitProbeEval);
      for (int t = 0; t < cfg.n_classes; ++t)
        e.task_labels["class_" + std::to_string(t)] = (t == c) ? 1 : 0;
      m.entries.push_back(std::move(e));
    }
  }
  save_manifest(m, out_dir / "manifest.tsv");
  return m;
}

}  // namespace auscult
