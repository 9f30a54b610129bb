#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "auscult/detail/fft.hpp"
#include "auscult/detail/io.hpp"
#include "auscult/rng.hpp"

namespace auscult {

// Canonical sample rate for every pipeline in the toolkit.
inline constexpr int kCanonicalRateHz = 16000;

struct Waveform {
  std::vector<float> samples;
  int sample_rate_hz = kCanonicalRateHz;

  std::size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

// Number of samples in a standard clip of the given duration.
inline std::size_t standard_len(double duration_s, int rate_hz) {
  return static_cast<std::size_t>(std::llround(duration_s * rate_hz));
}

namespace detail {

// Arbitrary-ratio windowed-sinc resampler (Hann window, 24 zero crossings
// on each side, cutoff at the lower Nyquist).
inline std::vector<float> resample_sinc(const std::vector<float>& x, int src_rate,
                                        int dst_rate) {
  if (src_rate == dst_rate) return x;
  const double ratio = static_cast<double>(dst_rate) / src_rate;
  const std::size_t out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(x.size()) * ratio));
  std::vector<float> out(out_len, 0.0f);
  const double cutoff = std::min(1.0, ratio) * 0.5;  // cycles per input sample
  const double kernel_halfwidth = 24.0 / std::min(1.0, ratio);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  for (std::size_t i = 0; i < out_len; ++i) {
    const double t = static_cast<double>(i) / ratio;
    const std::ptrdiff_t j0 =
        std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - kernel_halfwidth)));
    const std::ptrdiff_t j1 =
        std::min<std::ptrdiff_t>(n - 1, static_cast<std::ptrdiff_t>(std::floor(t + kernel_halfwidth)));
    double acc = 0.0;
    for (std::ptrdiff_t j = j0; j <= j1; ++j) {
      const double d = t - static_cast<double>(j);
      double sinc;
      if (std::abs(d) < 1e-12) {
        sinc = 2.0 * cutoff;
      } else {
        sinc = std::sin(2.0 * kPi * cutoff * d) / (kPi * d);
      }
      const double u = d / kernel_halfwidth;  // in [-1, 1]
      const double win = 0.5 + 0.5 * std::cos(kPi * u);
      acc += static_cast<double>(x[j]) * sinc * win;
    }
    out[i] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// WAV files (RIFF, PCM16 or IEEE float32)
// ---------------------------------------------------------------------------

// Loads a WAV file, averages channels to mono, scales integer samples to
// [-1, 1] and resamples to target_rate_hz (windowed sinc) when needed.
inline Waveform load_wav(const std::filesystem::path& path, int target_rate_hz) {
  if (target_rate_hz <= 0) throw std::invalid_argument("load_wav: target rate must be > 0");
  const std::string data = detail::read_text_file(path);
  if (data.size() < 12 || data.compare(0, 4, "RIFF") != 0 || data.compare(8, 4, "WAVE") != 0)
    throw std::runtime_error(path.string() + ": not a RIFF/WAVE file");

  int num_channels = 0;
  int sample_rate = 0;
  int bits = 0;
  int format = 0;
  std::vector<float> mono;
  bool got_fmt = false, got_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const std::string_view id(data.data() + pos, 4);
    std::uint32_t chunk_size;
    std::memcpy(&chunk_size, data.data() + pos + 4, 4);
    pos += 8;
    if (pos + chunk_size > data.size())
      throw std::runtime_error(path.string() + ": truncated chunk");
    if (id == "fmt ") {
      if (chunk_size < 16) throw std::runtime_error(path.string() + ": bad fmt chunk");
      std::uint16_t fmt_tag, chans, bits16;
      std::uint32_t rate;
      std::memcpy(&fmt_tag, data.data() + pos, 2);
      std::memcpy(&chans, data.data() + pos + 2, 2);
      std::memcpy(&rate, data.data() + pos + 4, 4);
      std::memcpy(&bits16, data.data() + pos + 14, 2);
      format = fmt_tag;
      num_channels = chans;
      sample_rate = static_cast<int>(rate);
      bits = bits16;
      got_fmt = true;
    } else if (id == "data") {
      if (!got_fmt) throw std::runtime_error(path.string() + ": data chunk before fmt");
      if (num_channels <= 0 || sample_rate <= 0)
        throw std::runtime_error(path.string() + ": bad format fields");
      const char* p = data.data() + pos;
      std::size_t frames;
      if (format == 1 && bits == 16) {
        frames = chunk_size / (2 * num_channels);
        mono.resize(frames);
        for (std::size_t f = 0; f < frames; ++f) {
          double acc = 0.0;
          for (int c = 0; c < num_channels; ++c) {
            std::int16_t s;
            std::memcpy(&s, p + (f * num_channels + c) * 2, 2);
            acc += s / 32768.0;
          }
          mono[f] = static_cast<float>(acc / num_channels);
        }
      } else if (format == 3 && bits == 32) {
        frames = chunk_size / (4 * num_channels);
        mono.resize(frames);
        for (std::size_t f = 0; f < frames; ++f) {
          double acc = 0.0;
          for (int c = 0; c < num_channels; ++c) {
            float s;
            std::memcpy(&s, p + (f * num_channels + c) * 4, 4);
            acc += s;
          }
          mono[f] = static_cast<float>(acc / num_channels);
        }
      } else {
        throw std::runtime_error(path.string() + ": unsupported encoding (need PCM16 or float32)");
      }
      got_data = true;
    }
    pos += chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }
  if (!got_data) throw std::runtime_error(path.string() + ": no data chunk");
  if (mono.empty()) throw std::runtime_error(path.string() + ": zero-length audio");

  Waveform w;
  w.sample_rate_hz = target_rate_hz;
  w.samples = (sample_rate == target_rate_hz)
                  ? std::move(mono)
                  : detail::resample_sinc(mono, sample_rate, target_rate_hz);
  if (w.samples.empty()) throw std::runtime_error(path.string() + ": zero-length after resample");
  return w;
}

// Writes mono PCM16. Quantization is round(x * 32768) clamped to int16, so a
// load/save round trip stays within 2/65536 per sample.
inline void save_wav(const Waveform& w, const std::filesystem::path& path) {
  detail::ByteWriter body;
  body.raw("RIFF", 4);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  body.u32(36 + data_bytes);
  body.raw("WAVE", 4);
  body.raw("fmt ", 4);
  body.u32(16);
  const std::uint16_t fmt_tag = 1, channels = 1, block_align = 2, bits = 16;
  body.raw(&fmt_tag, 2);
  body.raw(&channels, 2);
  body.u32(static_cast<std::uint32_t>(w.sample_rate_hz));
  body.u32(static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  body.raw(&block_align, 2);
  body.raw(&bits, 2);
  body.raw("data", 4);
  body.u32(data_bytes);
  for (float x : w.samples) {
    const double c = std::clamp(static_cast<double>(x), -1.0, 1.0);
    const long v = std::lround(c * 32768.0);
    const std::int16_t s = static_cast<std::int16_t>(std::clamp(v, -32768L, 32767L));
    body.raw(&s, 2);
  }
  detail::write_file_atomic(path, body.bytes);
}

// ---------------------------------------------------------------------------
// Clip geometry
// ---------------------------------------------------------------------------

// Sliding segmentation; the trailing remainder shorter than clip_len is
// dropped. A waveform shorter than clip_len yields no clips.
inline std::vector<Waveform> segment_clips(const Waveform& w, double clip_len_s,
                                           double stride_s) {
  if (clip_len_s <= 0 || stride_s <= 0)
    throw std::invalid_argument("segment_clips: clip_len_s and stride_s must be > 0");
  const std::size_t len = standard_len(clip_len_s, w.sample_rate_hz);
  const std::size_t stride = standard_len(stride_s, w.sample_rate_hz);
  std::vector<Waveform> out;
  if (len == 0 || stride == 0 || w.size() < len) return out;
  const std::size_t count = (w.size() - len) / stride + 1;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Waveform clip;
    clip.sample_rate_hz = w.sample_rate_hz;
    clip.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(i * stride),
                        w.samples.begin() + static_cast<std::ptrdiff_t>(i * stride + len));
    out.push_back(std::move(clip));
  }
  return out;
}

// Center-crops longer inputs, zero-pads shorter inputs at the end.
inline Waveform crop_or_pad(const Waveform& w, double target_len_s) {
  if (target_len_s <= 0) throw std::invalid_argument("crop_or_pad: target length must be > 0");
  const std::size_t target = standard_len(target_len_s, w.sample_rate_hz);
  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  if (w.size() >= target) {
    const std::size_t start = (w.size() - target) / 2;
    out.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(start),
                       w.samples.begin() + static_cast<std::ptrdiff_t>(start + target));
  } else {
    out.samples = w.samples;
    out.samples.resize(target, 0.0f);
  }
  return out;
}

// Contiguous clip of exact standard length at a uniform random offset.
inline Waveform sample_random_clip(const Waveform& w, double clip_len_s, Rng& rng) {
  const std::size_t len = standard_len(clip_len_s, w.sample_rate_hz);
  if (w.size() < len)
    throw std::invalid_argument("sample_random_clip: waveform shorter than clip length");
  const std::size_t offset = rng.uniform_int(w.size() - len + 1);
  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  out.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                     w.samples.begin() + static_cast<std::ptrdiff_t>(offset + len));
  return out;
}

// ---------------------------------------------------------------------------
// Clip manifest (TSV)
// ---------------------------------------------------------------------------

inline constexpr const char* kSplitTrain = "train";
inline constexpr const char* kSplitProbeTrain = "probe_train";
inline constexpr const char* kSplitProbeEval = "probe_eval";

struct ClipManifestEntry {
  std::string source_path;
  double clip_start_s = 0.0;
  double clip_len_s = 0.0;
  std::string split;
  std::map<std::string, int> task_labels;  // absent key = unlabeled for that task
};

struct Manifest {
  std::vector<std::string> task_names;
  std::vector<ClipManifestEntry> entries;
};

inline bool valid_split(std::string_view s) {
  return s == kSplitTrain || s == kSplitProbeTrain || s == kSplitProbeEval;
}

// Header: path <tab> start <tab> length <tab> split <tab> task...; label cells
// hold 0, 1, or are empty when the task does not apply to the clip.
inline std::string manifest_to_tsv(const Manifest& m) {
  std::string out = "path\tstart\tlength\tsplit";
  for (const auto& t : m.task_names) out += "\t" + t;
  out += "\n";
  for (const auto& e : m.entries) {
    if (e.clip_start_s < 0 || e.clip_len_s <= 0)
      throw std::invalid_argument("manifest entry with bad start/length");
    if (!valid_split(e.split))
      throw std::invalid_argument("manifest entry with unknown split '" + e.split + "'");
    out += e.source_path;
    out += "\t" + detail::fmt_double(e.clip_start_s);
    out += "\t" + detail::fmt_double(e.clip_len_s);
    out += "\t" + e.split;
    for (const auto& t : m.task_names) {
      out += "\t";
      const auto it = e.task_labels.find(t);
      if (it != e.task_labels.end()) out += it->second ? "1" : "0";
    }
    out += "\n";
  }
  return out;
}

inline Manifest manifest_from_tsv(const std::string& text) {
  Manifest m;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    start = end + 1;
    if (line.empty()) continue;
    const auto cells = detail::split(line, '\t');
    ++line_no;
    if (line_no == 1) {
      if (cells.size() < 4 || cells[0] != "path" || cells[1] != "start" ||
          cells[2] != "length" || cells[3] != "split")
        throw std::runtime_error("manifest: bad header row");
      for (std::size_t i = 4; i < cells.size(); ++i)
        m.task_names.emplace_back(cells[i]);
      continue;
    }
    if (cells.size() != 4 + m.task_names.size())
      throw std::runtime_error("manifest: wrong column count on line " + std::to_string(line_no));
    ClipManifestEntry e;
    e.source_path = std::string(cells[0]);
    e.clip_start_s = detail::parse_double(cells[1]);
    e.clip_len_s = detail::parse_double(cells[2]);
    e.split = std::string(cells[3]);
    if (e.clip_start_s < 0 || e.clip_len_s <= 0)
      throw std::runtime_error("manifest: bad start/length on line " + std::to_string(line_no));
    if (!valid_split(e.split))
      throw std::runtime_error("manifest: unknown split on line " + std::to_string(line_no));
    for (std::size_t i = 0; i < m.task_names.size(); ++i) {
      const auto cell = cells[4 + i];
      if (cell.empty()) continue;
      if (cell == "0")
        e.task_labels[m.task_names[i]] = 0;
      else if (cell == "1")
        e.task_labels[m.task_names[i]] = 1;
      else
        throw std::runtime_error("manifest: label must be 0/1/empty on line " +
                                 std::to_string(line_no));
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  detail::write_file_atomic(path, manifest_to_tsv(m));
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  return manifest_from_tsv(detail::read_text_file(path));
}

}  // namespace auscult
