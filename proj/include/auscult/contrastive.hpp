#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "auscult/augment.hpp"
#include "auscult/detail/io.hpp"
#include "auscult/features.hpp"
#include "auscult/rng.hpp"

namespace auscult {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

// Desk-scale stand-in for the full-scale backbone: log-mel input is mean
// pooled over time, then run through a small MLP. Any encoder that maps a
// Spectrogram to a fixed-dimension vector can be plugged into evaluation.
struct EncoderConfig {
  int n_mels = 80;
  int n_frames = 198;
  std::vector<int> hidden = {256, 256};
  int embedding_dim = 128;
  int projection_hidden = 128;
  int projection_dim = 64;

  void validate() const {
    if (n_mels < 1 || n_frames < 1) throw std::invalid_argument("EncoderConfig: bad input shape");
    if (embedding_dim < 1) throw std::invalid_argument("EncoderConfig: embedding_dim must be >= 1");
    if (projection_dim < 1) throw std::invalid_argument("EncoderConfig: projection_dim must be >= 1");
    for (int h : hidden)
      if (h < 1) throw std::invalid_argument("EncoderConfig: hidden widths must be >= 1");
  }
};

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1.6e-3;
  long long steps = 5000;
  long long checkpoint_every = 250;
  double temperature = 0.1;
  double ema_weight = 0.5;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    if (learning_rate < 0) throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
    if (steps < 1) throw std::invalid_argument("TrainConfig: steps must be >= 1");
    if (checkpoint_every < 1 || checkpoint_every > steps)
      throw std::invalid_argument("TrainConfig: need 1 <= checkpoint_every <= steps");
    if (!(temperature > 0)) throw std::invalid_argument("TrainConfig: temperature must be > 0");
    if (!(ema_weight > 0 && ema_weight < 1))
      throw std::invalid_argument("TrainConfig: ema_weight must be in (0, 1)");
  }

  // Full-scale settings (kept as legal configuration, not the default).
  static TrainConfig paper_scale() {
    TrainConfig c;
    c.batch_size = 4096;
    c.steps = 300000;
    c.checkpoint_every = 5000;
    return c;
  }
};

// ---------------------------------------------------------------------------
// NT-Xent loss
// ---------------------------------------------------------------------------

struct NtXentResult {
  double loss = 0.0;
  std::vector<double> grad;  // d(loss)/d(embeddings), same shape as input
};

// SimCLR loss over 2B projected embeddings ordered so rows (2i, 2i+1) are the
// two views of input i. Rows are L2-normalized internally; the returned
// gradient is with respect to the raw (pre-normalization) embeddings.
inline NtXentResult nt_xent_loss(const std::vector<double>& embeddings, int n_views, int dim,
                                 double temperature) {
  if (n_views % 2 != 0 || n_views < 4)
    throw std::invalid_argument("nt_xent_loss: need an even view count with B >= 2");
  if (dim < 1 || embeddings.size() != static_cast<std::size_t>(n_views) * dim)
    throw std::invalid_argument("nt_xent_loss: embedding matrix shape mismatch");
  if (!(temperature > 0)) throw std::invalid_argument("nt_xent_loss: temperature must be > 0");
  for (double v : embeddings)
    if (!std::isfinite(v)) throw std::invalid_argument("nt_xent_loss: non-finite embedding");

  const int n = n_views;
  std::vector<double> z(embeddings.size());
  std::vector<double> inv_norm(n);
  for (int i = 0; i < n; ++i) {
    double nrm = 0.0;
    for (int d = 0; d < dim; ++d) nrm += embeddings[i * dim + d] * embeddings[i * dim + d];
    nrm = std::sqrt(nrm);
    inv_norm[i] = 1.0 / std::max(nrm, 1e-300);
    for (int d = 0; d < dim; ++d) z[i * dim + d] = embeddings[i * dim + d] * inv_norm[i];
  }

  // Cosine similarities over temperature.
  std::vector<double> sim(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (int d = 0; d < dim; ++d) dot += z[i * dim + d] * z[j * dim + d];
      sim[i * n + j] = sim[j * n + i] = dot / temperature;
    }

  double loss = 0.0;
  std::vector<double> gsim(static_cast<std::size_t>(n) * n, 0.0);
  for (int a = 0; a < n; ++a) {
    const int p = a ^ 1;
    double mx = -1e300;
    for (int j = 0; j < n; ++j)
      if (j != a) mx = std::max(mx, sim[a * n + j]);
    double denom = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != a) denom += std::exp(sim[a * n + j] - mx);
    loss += -(sim[a * n + p] - mx) + std::log(denom);
    for (int j = 0; j < n; ++j) {
      if (j == a) continue;
      const double soft = std::exp(sim[a * n + j] - mx) / denom;
      gsim[a * n + j] = (soft - (j == p ? 1.0 : 0.0)) / n;
    }
  }
  loss /= n;

  // d(loss)/dz, then back through the normalization.
  NtXentResult out;
  out.loss = loss;
  out.grad.assign(embeddings.size(), 0.0);
  std::vector<double> gz(embeddings.size(), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double g = (gsim[i * n + j] + gsim[j * n + i]) / temperature;
      if (g == 0.0) continue;
      for (int d = 0; d < dim; ++d) gz[i * dim + d] += g * z[j * dim + d];
    }
  for (int i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int d = 0; d < dim; ++d) dot += gz[i * dim + d] * z[i * dim + d];
    for (int d = 0; d < dim; ++d)
      out.grad[i * dim + d] = (gz[i * dim + d] - dot * z[i * dim + d]) * inv_norm[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// MLP encoder + projection head
// ---------------------------------------------------------------------------

// Mean over time frames for each mel bin; the MLP's input view of a clip.
inline std::vector<double> pooled_input(const Spectrogram& s) {
  std::vector<double> x(static_cast<std::size_t>(s.n_mel_bins), 0.0);
  for (int m = 0; m < s.n_mel_bins; ++m) {
    double acc = 0.0;
    for (int t = 0; t < s.n_frames; ++t) acc += s.at(m, t);
    x[m] = acc / std::max(1, s.n_frames);
  }
  return x;
}

class MlpEncoder {
 public:
  explicit MlpEncoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::vector<int> dims;
    dims.push_back(cfg_.n_mels);
    for (int h : cfg_.hidden) dims.push_back(h);
    dims.push_back(cfg_.embedding_dim);
    embedding_layer_ = static_cast<int>(dims.size()) - 1;  // output index of layer list
    dims.push_back(cfg_.projection_hidden);
    dims.push_back(cfg_.projection_dim);

    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      Layer layer;
      layer.in = dims[l];
      layer.out = dims[l + 1];
      const std::size_t li = layers_.size();
      // ReLU after every layer except the embedding output and the final
      // projection output.
      layer.relu = !(static_cast<int>(li) == embedding_layer_ - 1 || l + 2 == dims.size());
      layer.w_off = off;
      off += static_cast<std::size_t>(layer.in) * layer.out;
      layer.b_off = off;
      off += static_cast<std::size_t>(layer.out);
      layers_.push_back(layer);
    }
    params_.assign(off, 0.0);
  }

  const EncoderConfig& config() const { return cfg_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t num_params() const { return params_.size(); }

  void init_params(Rng& rng) {
    for (const auto& layer : layers_) {
      const double scale = std::sqrt(2.0 / layer.in);
      for (int i = 0; i < layer.in * layer.out; ++i)
        params_[layer.w_off + i] = scale * rng.normal(0.0, 1.0);
      for (int i = 0; i < layer.out; ++i) params_[layer.b_off + i] = 0.0;
    }
  }

  // Embedding used downstream: output of the encoder stack, before the
  // projection head.
  std::vector<double> embed(const Spectrogram& s) const {
    check_input(s);
    std::vector<double> a = pooled_input(s);
    for (int l = 0; l < embedding_layer_; ++l) a = affine(layers_[l], a, layers_[l].relu);
    return a;
  }

  // Projection used by the contrastive loss.
  std::vector<double> project(const Spectrogram& s) const {
    check_input(s);
    std::vector<double> a = pooled_input(s);
    for (const auto& layer : layers_) a = affine(layer, a, layer.relu);
    return a;
  }

  struct ForwardTrace {
    std::vector<std::vector<double>> inputs;   // input of each layer
    std::vector<std::vector<double>> preact;   // pre-activation of each layer
    std::vector<double> output;
  };

  ForwardTrace forward_trace(const std::vector<double>& x) const {
    ForwardTrace tr;
    std::vector<double> a = x;
    for (const auto& layer : layers_) {
      tr.inputs.push_back(a);
      std::vector<double> zv(static_cast<std::size_t>(layer.out), 0.0);
      for (int o = 0; o < layer.out; ++o) {
        double acc = params_[layer.b_off + o];
        const double* wrow = &params_[layer.w_off + static_cast<std::size_t>(o) * layer.in];
        for (int i = 0; i < layer.in; ++i) acc += wrow[i] * a[i];
        zv[o] = acc;
      }
      tr.preact.push_back(zv);
      if (layer.relu)
        for (auto& v : zv) v = std::max(0.0, v);
      a = std::move(zv);
    }
    tr.output = a;
    return tr;
  }

  // Accumulates parameter gradients for one view given d(loss)/d(output).
  void backward_accumulate(const ForwardTrace& tr, const std::vector<double>& grad_out,
                           std::vector<double>& grad_params) const {
    std::vector<double> delta = grad_out;
    for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
      const auto& layer = layers_[l];
      if (layer.relu)
        for (int o = 0; o < layer.out; ++o)
          if (tr.preact[l][o] <= 0.0) delta[o] = 0.0;
      const auto& in = tr.inputs[l];
      for (int o = 0; o < layer.out; ++o) {
        const double d = delta[o];
        if (d != 0.0) {
          double* wgrad = &grad_params[layer.w_off + static_cast<std::size_t>(o) * layer.in];
          for (int i = 0; i < layer.in; ++i) wgrad[i] += d * in[i];
        }
        grad_params[layer.b_off + o] += d;
      }
      if (l == 0) break;
      std::vector<double> prev(static_cast<std::size_t>(layer.in), 0.0);
      for (int o = 0; o < layer.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* wrow = &params_[layer.w_off + static_cast<std::size_t>(o) * layer.in];
        for (int i = 0; i < layer.in; ++i) prev[i] += d * wrow[i];
      }
      delta = std::move(prev);
    }
  }

  std::uint64_t config_hash() const {
    std::string repr = std::to_string(cfg_.n_mels) + "x" + std::to_string(cfg_.n_frames);
    for (int h : cfg_.hidden) repr += ",h" + std::to_string(h);
    repr += ",e" + std::to_string(cfg_.embedding_dim);
    repr += ",ph" + std::to_string(cfg_.projection_hidden);
    repr += ",p" + std::to_string(cfg_.projection_dim);
    return Rng::hash_string(repr);
  }

 private:
  struct Layer {
    int in = 0, out = 0;
    bool relu = false;
    std::size_t w_off = 0, b_off = 0;
  };

  void check_input(const Spectrogram& s) const {
    if (s.n_mel_bins != cfg_.n_mels || s.n_frames != cfg_.n_frames)
      throw std::invalid_argument("MlpEncoder: spectrogram shape does not match input_shape");
  }

  std::vector<double> affine(const Layer& layer, const std::vector<double>& a, bool relu) const {
    std::vector<double> out(static_cast<std::size_t>(layer.out), 0.0);
    for (int o = 0; o < layer.out; ++o) {
      double acc = params_[layer.b_off + o];
      const double* wrow = &params_[layer.w_off + static_cast<std::size_t>(o) * layer.in];
      for (int i = 0; i < layer.in; ++i) acc += wrow[i] * a[i];
      out[o] = relu ? std::max(0.0, acc) : acc;
    }
    return out;
  }

  EncoderConfig cfg_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
  int embedding_layer_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::uint64_t step = 0;
  double val_loss = 0.0;
  EncoderConfig encoder;
  std::vector<double> params;
};

inline constexpr char kCheckpointMagic[8] = {'A', 'U', 'S', 'C', 'C', 'K', 'P', 'T'};

inline std::string checkpoint_to_bytes(const Checkpoint& ck) {
  detail::ByteWriter bw;
  bw.raw(kCheckpointMagic, 8);
  bw.u32(1);
  bw.u64(ck.config_hash);
  bw.u64(ck.step);
  bw.f64(ck.val_loss);
  bw.u32(static_cast<std::uint32_t>(ck.encoder.n_mels));
  bw.u32(static_cast<std::uint32_t>(ck.encoder.n_frames));
  bw.u32(static_cast<std::uint32_t>(ck.encoder.hidden.size()));
  for (int h : ck.encoder.hidden) bw.u32(static_cast<std::uint32_t>(h));
  bw.u32(static_cast<std::uint32_t>(ck.encoder.embedding_dim));
  bw.u32(static_cast<std::uint32_t>(ck.encoder.projection_hidden));
  bw.u32(static_cast<std::uint32_t>(ck.encoder.projection_dim));
  bw.u64(ck.params.size());
  for (double p : ck.params) bw.f64(p);
  return std::move(bw.bytes);
}

inline Checkpoint checkpoint_from_bytes(std::string_view bytes) {
  detail::ByteReader br{bytes};
  char magic[8];
  br.raw(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file");
  if (br.u32() != 1) throw std::runtime_error("unsupported checkpoint version");
  Checkpoint ck;
  ck.config_hash = br.u64();
  ck.step = br.u64();
  ck.val_loss = br.f64();
  ck.encoder.n_mels = static_cast<int>(br.u32());
  ck.encoder.n_frames = static_cast<int>(br.u32());
  const std::uint32_t nh = br.u32();
  ck.encoder.hidden.clear();
  for (std::uint32_t i = 0; i < nh; ++i) ck.encoder.hidden.push_back(static_cast<int>(br.u32()));
  ck.encoder.embedding_dim = static_cast<int>(br.u32());
  ck.encoder.projection_hidden = static_cast<int>(br.u32());
  ck.encoder.projection_dim = static_cast<int>(br.u32());
  ck.params.resize(br.u64());
  for (auto& p : ck.params) p = br.f64();
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  detail::write_file_atomic(path, checkpoint_to_bytes(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_bytes(detail::read_text_file(path));
}

// ---------------------------------------------------------------------------
// View pairs
// ---------------------------------------------------------------------------

// Two independent stochastic applications of the same chain to one clip.
template <typename FeatureFn>
std::pair<Spectrogram, Spectrogram> make_view_pair(const Waveform& w,
                                                   const AugmentationChain& chain,
                                                   FeatureFn&& feature_fn, Rng& rng) {
  Rng rng_a = rng.fork(rng.next_u64());
  Rng rng_b = rng.fork(rng.next_u64());
  Spectrogram a = apply_chain(chain, w, feature_fn, rng_a);
  Spectrogram b = apply_chain(chain, w, feature_fn, rng_b);
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainLogRow {
  std::uint64_t step = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();  // NaN = not evaluated

  bool has_val() const { return !std::isnan(val_loss); }
};

struct TrainResult {
  std::vector<Checkpoint> checkpoints;
  std::vector<TrainLogRow> log;
};

inline std::string train_log_to_csv(const std::vector<TrainLogRow>& log) {
  std::string out = "step,train_loss,val_loss\n";
  for (const auto& r : log) {
    out += std::to_string(r.step) + "," + detail::fmt_double(r.train_loss) + ",";
    if (r.has_val()) out += detail::fmt_double(r.val_loss);
    out += "\n";
  }
  return out;
}

// AdamW steps over NT-Xent on freshly augmented batches; a checkpoint with a
// held-out validation loss is emitted every checkpoint_every steps. Fully
// deterministic given cfg.seed.
inline TrainResult train(const std::vector<Waveform>& dataset, const AugmentationChain& chain,
                         const EncoderConfig& enc_cfg, const TrainConfig& cfg,
                         const FeatureConfig& feat_cfg = {}) {
  if (dataset.empty()) throw std::invalid_argument("train: dataset must be non-empty");
  cfg.validate();
  enc_cfg.validate();

  // Held-out slice (tail tenth, at least 2 clips) for validation curves.
  const std::size_t val_count =
      std::min(dataset.size(), std::max<std::size_t>(2, dataset.size() / 10));
  const std::size_t train_count =
      (dataset.size() > val_count) ? dataset.size() - val_count : dataset.size();

  MlpEncoder model(enc_cfg);
  Rng init_rng = Rng::from_parts(cfg.seed, Rng::hash_string("init"));
  model.init_params(init_rng);

  const auto feature_fn = [&](const Waveform& w) { return log_mel(w, feat_cfg); };

  // AdamW state.
  const std::size_t np = model.num_params();
  std::vector<double> m(np, 0.0), v(np, 0.0), grad(np, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  Rng batch_rng = Rng::from_parts(cfg.seed, Rng::hash_string("batch"));

  const int n_views = 2 * cfg.batch_size;
  const int proj_dim = enc_cfg.projection_dim;

  const auto batch_loss = [&](const std::vector<std::size_t>& indices, std::uint64_t step,
                              std::uint64_t stream_tag, bool with_grad) {
    std::vector<MlpEncoder::ForwardTrace> traces(indices.size() * 2);
    std::vector<double> proj(indices.size() * 2 * static_cast<std::size_t>(proj_dim));
    for (std::size_t b = 0; b < indices.size(); ++b) {
      Rng view_rng = Rng::from_parts(cfg.seed ^ stream_tag, step, b);
      auto views = make_view_pair(dataset[indices[b]], chain, feature_fn, view_rng);
      const Spectrogram* pair[2] = {&views.first, &views.second};
      for (int k = 0; k < 2; ++k) {
        auto tr = model.forward_trace(pooled_input(*pair[k]));
        std::copy(tr.output.begin(), tr.output.end(),
                  proj.begin() + (2 * b + k) * static_cast<std::size_t>(proj_dim));
        traces[2 * b + k] = std::move(tr);
      }
    }
    NtXentResult res = nt_xent_loss(proj, static_cast<int>(indices.size()) * 2, proj_dim,
                                    cfg.temperature);
    if (with_grad) {
      std::fill(grad.begin(), grad.end(), 0.0);
      std::vector<double> gout(static_cast<std::size_t>(proj_dim));
      for (std::size_t i = 0; i < traces.size(); ++i) {
        std::copy(res.grad.begin() + i * proj_dim, res.grad.begin() + (i + 1) * proj_dim,
                  gout.begin());
        model.backward_accumulate(traces[i], gout, grad);
      }
    }
    return res.loss;
  };

  const auto validation_loss = [&](std::uint64_t step) {
    const std::size_t vb = std::min<std::size_t>(val_count, cfg.batch_size);
    std::vector<std::size_t> idx(vb);
    for (std::size_t i = 0; i < vb; ++i) idx[i] = dataset.size() - val_count + i;
    return batch_loss(idx, step, Rng::hash_string("validation"), false);
  };

  TrainResult out;
  auto& params = model.params();
  for (std::uint64_t step = 1; step <= static_cast<std::uint64_t>(cfg.steps); ++step) {
    std::vector<std::size_t> indices(cfg.batch_size);
    for (auto& ix : indices) ix = batch_rng.uniform_int(train_count);
    const double loss = batch_loss(indices, step, Rng::hash_string("train"), true);
    if (!std::isfinite(loss))
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));

    // AdamW: decoupled weight decay.
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < np; ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      params[i] -= cfg.learning_rate * (mhat / (std::sqrt(vhat) + eps) +
                                        cfg.weight_decay * params[i]);
    }

    TrainLogRow row;
    row.step = step;
    row.train_loss = loss;
    if (step % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0) {
      row.val_loss = validation_loss(step);
      Checkpoint ck;
      ck.config_hash = model.config_hash();
      ck.step = step;
      ck.val_loss = row.val_loss;
      ck.encoder = enc_cfg;
      ck.params = params;
      out.checkpoints.push_back(std::move(ck));
    }
    out.log.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint selection
// ---------------------------------------------------------------------------

enum class MetricDirection { Minimize, Maximize };

// Bias-corrected EMA over a validation curve: s_t = w*s_{t-1} + (1-w)*x_t,
// s_0 = 0, corrected by 1/(1-w^t); returns the step at the best smoothed
// value (first occurrence on ties).
inline std::uint64_t select_checkpoint_ema(
    const std::vector<std::pair<std::uint64_t, double>>& curve, double ema_weight,
    MetricDirection direction = MetricDirection::Minimize) {
  if (curve.empty()) throw std::invalid_argument("select_checkpoint_ema: empty curve");
  if (!(ema_weight > 0 && ema_weight < 1))
    throw std::invalid_argument("select_checkpoint_ema: ema_weight must be in (0, 1)");
  double s = 0.0;
  double best = 0.0;
  std::uint64_t best_step = curve.front().first;
  for (std::size_t t = 0; t < curve.size(); ++t) {
    s = ema_weight * s + (1.0 - ema_weight) * curve[t].second;
    const double corrected = s / (1.0 - std::pow(ema_weight, static_cast<double>(t + 1)));
    const bool better = (t == 0) || (direction == MetricDirection::Minimize ? corrected < best
                                                                            : corrected > best);
    if (better) {
      best = corrected;
      best_step = curve[t].first;
    }
  }
  return best_step;
}

}  // namespace auscult
