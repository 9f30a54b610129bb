#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "auscult/augment.hpp"
#include "helpers.hpp"

using namespace auscult;

namespace {

Waveform random_wave(Rng& rng, std::size_t n, int rate = 16000, double amp = 1.0) {
  Waveform w;
  w.sample_rate_hz = rate;
  w.samples.resize(n);
  for (auto& v : w.samples) v = static_cast<float>(rng.uniform(-amp, amp));
  return w;
}

double energy(const Waveform& w) {
  double acc = 0.0;
  for (float v : w.samples) acc += static_cast<double>(v) * v;
  return acc;
}

Spectrogram tiny_spec(int mels, int frames, float fill = 1.0f) {
  Spectrogram s;
  s.n_mel_bins = mels;
  s.n_frames = frames;
  s.frame_rate_hz = 100.0f;
  s.values.assign(static_cast<std::size_t>(mels) * frames, fill);
  return s;
}

}  // namespace

TEST_CASE("Table A1 best parameters are constructible") {
  for (int i = 0; i < kNumAugKinds; ++i) {
    const AugmentationSpec s = best_spec(static_cast<AugKind>(i));
    REQUIRE(s.probability >= 0.0);
    REQUIRE(s.probability <= 1.0);
  }
  // Spot checks against the grid's best column.
  REQUIRE(std::get<CropAndPadParams>(best_spec(AugKind::CropAndPad).params).min_fraction == 0.1);
  REQUIRE(std::get<NoisingParams>(best_spec(AugKind::Noising).params).mean == 0.2);
  REQUIRE(std::get<BrownianTapeSpeedParams>(best_spec(AugKind::BrownianTapeSpeed).params)
              .magnitude == 20.0);
  REQUIRE(std::get<ScalingParams>(best_spec(AugKind::Scaling).params).min_factor == 0.25);
  REQUIRE(std::get<PitchShiftParams>(best_spec(AugKind::PitchShift).params).min_factor == 1.25);
  REQUIRE(std::get<TimeStretchParams>(best_spec(AugKind::TimeStretch).params).max_stretch == 1.75);
  REQUIRE(best_spec(AugKind::CircularTimeShift).probability == 1.0);
  const auto sa = std::get<SpecAugmentParams>(best_spec(AugKind::SpecAugment).params);
  REQUIRE(sa.time_mask_max_frames == 24);
  REQUIRE(sa.time_mask_count == 20);
  REQUIRE(sa.freq_mask_max_bins == 20);
  REQUIRE(sa.freq_mask_count == 5);
}

TEST_CASE("specs violating strict max > min are rejected") {
  REQUIRE_THROWS_AS(AugmentationSpec::crop_and_pad(1.0, 0.5, 0.5), std::invalid_argument);
  REQUIRE_THROWS_AS(AugmentationSpec::crop_and_pad(1.0, 0.7, 0.3), std::invalid_argument);
  REQUIRE_THROWS_AS(AugmentationSpec::scaling(1.0, 1.0, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(AugmentationSpec::pitch_shift(1.0, 1.75, 1.25), std::invalid_argument);
  REQUIRE_THROWS_AS(AugmentationSpec::time_stretch(1.0, 0.75, 0.75), std::invalid_argument);
  REQUIRE_THROWS_AS(AugmentationSpec::noising(1.0, 0.0, -0.1), std::invalid_argument);
  REQUIRE_THROWS_AS(AugmentationSpec::brownian_tape_speed(1.0, -1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(AugmentationSpec::scaling(1.2, 0.5, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(AugmentationSpec::spec_augment(1.0, -1, 2, 2, 2), std::invalid_argument);
}

TEST_CASE("chain invariants") {
  const auto cts = AugmentationSpec::circular_time_shift(1.0);
  const auto ts = best_spec(AugKind::TimeStretch);
  const auto sa = best_spec(AugKind::SpecAugment);

  REQUIRE_NOTHROW(AugmentationChain::of(cts, ts));
  REQUIRE_NOTHROW(AugmentationChain::of(ts, sa));
  REQUIRE_NOTHROW(AugmentationChain::of(sa));
  REQUIRE_THROWS_AS(AugmentationChain::of(sa, ts), std::invalid_argument);
  REQUIRE_THROWS_AS(AugmentationChain::of(sa, sa), std::invalid_argument);
  REQUIRE_THROWS_AS(AugmentationChain::validated({}), std::invalid_argument);
  REQUIRE_THROWS_AS(AugmentationChain::validated({cts, ts, ts}), std::invalid_argument);
}

TEST_CASE("crop_and_pad") {
  Rng rng(10);

  SECTION("fraction zero is the identity") {
    const Waveform w = random_wave(rng, 1000);
    const Waveform out = crop_and_pad_at(w, 0.0, 0);
    REQUIRE(out.samples == w.samples);
  }

  SECTION("worked example: N=10, f=0.5, offset 2") {
    Waveform w;
    w.sample_rate_hz = 10;
    w.samples = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    const Waveform out = crop_and_pad_at(w, 0.5, 2);
    REQUIRE(out.samples == std::vector<float>{2, 3, 4, 5, 6, 0, 0, 0, 0, 0});
  }

  SECTION("sampled version preserves length and zero-fills the tail") {
    for (int t = 0; t < 200; ++t) {
      const Waveform w = random_wave(rng, 500 + rng.uniform_int(500));
      const Waveform out = crop_and_pad(w, 0.1, 0.5, rng);
      REQUIRE(out.size() == w.size());
      const std::size_t kept = static_cast<std::size_t>(std::count_if(
          out.samples.begin(), out.samples.end(), [](float v) { return v != 0.0f; }));
      REQUIRE(kept <= static_cast<std::size_t>(std::llround(0.9 * w.size())) + 1);
    }
  }
}

TEST_CASE("add_noise") {
  Rng rng(11);

  SECTION("zero mean and stddev is the identity") {
    const Waveform w = random_wave(rng, 1000);
    const Waveform out = add_noise(w, 0.0, 0.0, rng);
    REQUIRE(out.samples == w.samples);
  }

  SECTION("sample statistics match the configured distribution") {
    Waveform zeros;
    zeros.sample_rate_hz = 16000;
    zeros.samples.assign(100000, 0.0f);
    const Waveform out = add_noise(zeros, 0.2, 0.2, rng);
    double sum = 0.0, sum2 = 0.0;
    for (float v : out.samples) {
      sum += v;
      sum2 += static_cast<double>(v) * v;
    }
    const double mean = sum / out.size();
    const double sd = std::sqrt(sum2 / out.size() - mean * mean);
    REQUIRE(std::abs(mean - 0.2) < 0.01);
    REQUIRE(std::abs(sd - 0.2) < 0.01);
  }
}

TEST_CASE("brownian_tape_speed") {
  Rng rng(12);

  SECTION("magnitude zero is the exact identity") {
    const Waveform w = random_wave(rng, 2000);
    const Waveform out = brownian_tape_speed(w, 0.0, rng);
    REQUIRE(out.samples == w.samples);
  }

  SECTION("monotone ramp stays non-decreasing until the zero fill") {
    Waveform ramp;
    ramp.sample_rate_hz = 16000;
    ramp.samples.resize(4000);
    for (std::size_t i = 0; i < ramp.samples.size(); ++i)
      ramp.samples[i] = static_cast<float>(i) / ramp.samples.size() + 0.001f;
    for (double mag : {2.0, 10.0, 20.0}) {
      const Waveform out = brownian_tape_speed(ramp, mag, rng);
      REQUIRE(out.size() == ramp.size());
      std::size_t first_zero = out.size();
      for (std::size_t i = 1; i < out.size(); ++i)
        if (out.samples[i] == 0.0f) {
          first_zero = i;
          break;
        }
      for (std::size_t i = 1; i < first_zero; ++i)
        REQUIRE(out.samples[i] >= out.samples[i - 1]);
    }
  }
}

TEST_CASE("scale_gain") {
  Rng rng(13);

  SECTION("gain one is the identity") {
    const Waveform w = random_wave(rng, 512);
    REQUIRE(scale_gain_by(w, 1.0).samples == w.samples);
  }

  SECTION("definition") {
    Waveform w;
    w.sample_rate_hz = 2;
    w.samples = {1.0f, -1.0f};
    REQUIRE(scale_gain_by(w, 0.5).samples == std::vector<float>{0.5f, -0.5f});
  }

  SECTION("energy scales by the square of dyadic gains exactly") {
    const Waveform w = random_wave(rng, 2048);
    for (double g : {0.25, 0.5, 2.0, 4.0}) {
      const Waveform out = scale_gain_by(w, g);
      REQUIRE(energy(out) == g * g * energy(w));
    }
  }

  SECTION("energy scales by g^2 within float rounding for arbitrary gains") {
    const Waveform w = random_wave(rng, 2048);
    for (int t = 0; t < 20; ++t) {
      const double g = rng.uniform(0.25, 1.75);
      const Waveform out = scale_gain_by(w, g);
      REQUIRE(energy(out) == Catch::Approx(g * g * energy(w)).epsilon(1e-6));
    }
  }
}

TEST_CASE("circular_time_shift") {
  Rng rng(14);

  SECTION("shift zero is the identity") {
    const Waveform w = random_wave(rng, 777);
    REQUIRE(circular_shift_by(w, 0).samples == w.samples);
  }

  SECTION("worked example") {
    Waveform w;
    w.sample_rate_hz = 4;
    w.samples = {1, 2, 3, 4};
    REQUIRE(circular_shift_by(w, 1).samples == std::vector<float>{4, 1, 2, 3});
  }

  SECTION("sample multiset and energy exactly preserved") {
    for (int t = 0; t < 100; ++t) {
      const Waveform w = random_wave(rng, 100 + rng.uniform_int(1000));
      const Waveform out = circular_time_shift(w, rng);
      auto a = w.samples;
      auto b = out.samples;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      REQUIRE(a == b);  // sorted bit-identical => multiset, sum, energy all equal
    }
  }
}

TEST_CASE("pitch_shift moves the spectral peak and keeps the length") {
  const Waveform sine = testhelp::sine_wave(440.0, 2.0, 16000);

  SECTION("factor 2 lands within one oracle bin of 880 Hz") {
    const Waveform out = pitch_shift_by(sine, 2.0);
    REQUIRE(out.size() == sine.size());
    REQUIRE(std::abs(testhelp::dominant_freq_hz(out) - 880.0) <= testhelp::bin_width_hz(out));
  }

  SECTION("factor 1 keeps the peak at 440 Hz") {
    const Waveform out = pitch_shift_by(sine, 1.0);
    REQUIRE(out.size() == sine.size());
    REQUIRE(std::abs(testhelp::dominant_freq_hz(out) - 440.0) <= testhelp::bin_width_hz(out));
  }

  SECTION("length contract holds for random factors") {
    Rng rng(15);
    for (int t = 0; t < 5; ++t) {
      const double f = rng.uniform(0.5, 2.0);
      REQUIRE(pitch_shift_by(sine, f).size() == sine.size());
    }
  }
}

TEST_CASE("time_stretch changes duration, not pitch") {
  const Waveform sine = testhelp::sine_wave(440.0, 2.0, 16000);

  SECTION("intermediate and restored lengths") {
    const Waveform mid = time_stretch_to(sine, 2.0);
    REQUIRE(mid.size() == 16000);
    Rng rng(16);
    const Waveform out = time_stretch(sine, 1.9999999, 2.0000001, rng);
    REQUIRE(out.size() == 32000);
    // stretched to ~16000 then zero padded
    double tail_energy = 0.0;
    for (std::size_t i = 20000; i < out.size(); ++i)
      tail_energy += static_cast<double>(out.samples[i]) * out.samples[i];
    REQUIRE(tail_energy == 0.0);
  }

  SECTION("pitch preserved at s = 1.5") {
    const Waveform mid = time_stretch_to(sine, 1.5);
    REQUIRE(std::abs(testhelp::dominant_freq_hz(mid) - 440.0) <= testhelp::bin_width_hz(mid));
  }

  SECTION("stretch 1 keeps peak and length") {
    const Waveform mid = time_stretch_to(sine, 1.0);
    REQUIRE(mid.size() == sine.size());
    REQUIRE(std::abs(testhelp::dominant_freq_hz(mid) - 440.0) <= testhelp::bin_width_hz(mid));
  }
}

TEST_CASE("spec_augment") {
  Rng rng(17);

  SECTION("zero counts is the identity") {
    const Spectrogram s = tiny_spec(20, 50);
    const Spectrogram out = spec_augment(s, 10, 0, 10, 0, rng);
    REQUIRE(out.values == s.values);
  }

  SECTION("masked frame count is bounded by count * max") {
    for (int t = 0; t < 100; ++t) {
      const int mels = 10 + static_cast<int>(rng.uniform_int(30));
      const int frames = 20 + static_cast<int>(rng.uniform_int(100));
      const Spectrogram s = tiny_spec(mels, frames);
      const int tmax = static_cast<int>(rng.uniform_int(20));
      const int tcount = static_cast<int>(rng.uniform_int(6));
      const Spectrogram out = spec_augment(s, tmax, tcount, 0, 0, rng);
      int zero_frames = 0;
      for (int fr = 0; fr < frames; ++fr) {
        bool all_zero = true;
        for (int m = 0; m < mels; ++m)
          if (out.at(m, fr) != 0.0f) all_zero = false;
        if (all_zero) ++zero_frames;
      }
      REQUIRE(zero_frames <= tmax * tcount);
    }
  }

  SECTION("mask sizes beyond the dimension are clipped, not an error") {
    const Spectrogram s = tiny_spec(4, 6);
    REQUIRE_NOTHROW(spec_augment(s, 1000, 2, 1000, 2, rng));
  }
}

TEST_CASE("apply_spec honors probability and domain") {
  Rng rng(18);
  const Waveform w = random_wave(rng, 1000);

  SECTION("probability zero is the identity for every kind") {
    for (int i = 0; i < kNumAugKinds; ++i) {
      const AugKind kind = static_cast<AugKind>(i);
      AugmentationSpec s = best_spec(kind);
      s.probability = 0.0;
      if (kind == AugKind::SpecAugment) {
        const Spectrogram sp = tiny_spec(8, 10);
        REQUIRE(apply_spec(s, sp, rng).values == sp.values);
      } else {
        REQUIRE(apply_spec(s, w, rng).samples == w.samples);
      }
    }
  }

  SECTION("domain mismatch throws") {
    REQUIRE_THROWS_AS(apply_spec(best_spec(AugKind::SpecAugment), w, rng),
                      std::invalid_argument);
    const Spectrogram sp = tiny_spec(8, 10);
    REQUIRE_THROWS_AS(apply_spec(best_spec(AugKind::Scaling), sp, rng), std::invalid_argument);
  }

  SECTION("application frequency matches the configured probability") {
    const AugmentationSpec s = AugmentationSpec::noising(0.8, 0.0, 0.2);
    const Waveform base = random_wave(rng, 64, 16000, 0.5);
    int modified = 0;
    const int trials = 100000;
    for (int t = 0; t < trials; ++t)
      if (apply_spec(s, base, rng).samples != base.samples) ++modified;
    REQUIRE(std::abs(modified / static_cast<double>(trials) - 0.8) < 0.01);
  }
}

TEST_CASE("length preservation across random augmentation configs") {
  Rng rng(19);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 200 + rng.uniform_int(2000);
    const Waveform w = random_wave(rng, n);
    const int pick = static_cast<int>(rng.uniform_int(6));
    Waveform out;
    switch (pick) {
      case 0: out = crop_and_pad(w, 0.1, 0.7, rng); break;
      case 1: out = add_noise(w, rng.uniform(-0.2, 0.2), rng.uniform(0.0, 0.6), rng); break;
      case 2: out = brownian_tape_speed(w, rng.uniform(0.0, 20.0), rng); break;
      case 3: out = scale_gain(w, 0.25, 1.75, rng); break;
      case 4: out = circular_time_shift(w, rng); break;
      default: out = time_stretch(w, 0.75, 1.75, rng); break;
    }
    REQUIRE(out.size() == n);
  }
}

TEST_CASE("apply_chain composition") {
  Rng rng(20);
  FeatureConfig fc;
  const auto feature_fn = [&](const Waveform& x) { return log_mel(x, fc); };
  const Waveform w = testhelp::sine_wave(500.0, 2.0, 16000);

  SECTION("paper best 2-step chain is constructible and runs") {
    const AugmentationChain chain = AugmentationChain::of(
        best_spec(AugKind::CircularTimeShift), best_spec(AugKind::TimeStretch));
    const Spectrogram s = apply_chain(chain, w, feature_fn, rng);
    REQUIRE(s.n_mel_bins == 80);
    REQUIRE(s.n_frames == 198);
  }

  SECTION("all-zero probability chain equals the plain features") {
    AugmentationSpec a = best_spec(AugKind::Noising);
    a.probability = 0.0;
    AugmentationSpec b = best_spec(AugKind::SpecAugment);
    b.probability = 0.0;
    const AugmentationChain chain = AugmentationChain::of(a, b);
    const Spectrogram s = apply_chain(chain, w, feature_fn, rng);
    REQUIRE(s.values == feature_fn(w).values);
  }

  SECTION("same seed gives bit-identical outputs") {
    const AugmentationChain chain =
        AugmentationChain::of(best_spec(AugKind::Noising), best_spec(AugKind::SpecAugment));
    Rng r1(12345), r2(12345);
    const Spectrogram s1 = apply_chain(chain, w, feature_fn, r1);
    const Spectrogram s2 = apply_chain(chain, w, feature_fn, r2);
    REQUIRE(s1.values == s2.values);
  }
}

TEST_CASE("chain config round trips bit-exactly") {
  const AugmentationChain chain = AugmentationChain::of(
      AugmentationSpec::time_stretch(0.8, 0.7500000000000001, 1.75),
      AugmentationSpec::spec_augment(1.0, 24, 20, 20, 5));
  const std::string cfg = chain_to_config(chain);
  const AugmentationChain back = chain_from_config(cfg);
  REQUIRE(chain_to_config(back) == cfg);
  REQUIRE(std::get<TimeStretchParams>(back.steps[0].params).min_stretch ==
          0.7500000000000001);

  SECTION("single-line form round trips too") {
    const std::string line = chain_to_line(chain);
    const AugmentationChain b2 = chain_from_line(line);
    REQUIRE(chain_to_line(b2) == line);
    REQUIRE(chain_to_config(b2) == cfg);
  }

  SECTION("config with bad kind rejected") {
    REQUIRE_THROWS_AS(chain_from_config("[step]\nkind = reverb\nprobability = 1\n"),
                      std::runtime_error);
  }
}
