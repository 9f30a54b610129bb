#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "auscult/audio.hpp"
#include "auscult/detail/io.hpp"
#include "auscult/rng.hpp"

namespace auscult {

// ---------------------------------------------------------------------------
// Embedding matrices
// ---------------------------------------------------------------------------

struct EmbeddingMatrix {
  std::vector<std::string> clip_ids;
  std::vector<double> values;  // row-major [rows x dim]
  std::size_t dim = 0;

  std::size_t rows() const { return clip_ids.size(); }
  const double* row(std::size_t i) const { return &values[i * dim]; }

  void validate() const {
    if (values.size() != rows() * dim)
      throw std::runtime_error("embedding matrix: shape mismatch");
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!std::isfinite(values[i]))
        throw std::runtime_error("embedding matrix: non-finite value in row " +
                                 std::to_string(i / std::max<std::size_t>(1, dim)));
    std::set<std::string> seen;
    for (const auto& id : clip_ids)
      if (!seen.insert(id).second)
        throw std::runtime_error("embedding matrix: duplicate clip id '" + id + "'");
  }
};

// CSV with header id,dim_0..dim_{D-1}; doubles in shortest round-trip form.
inline std::string embeddings_to_csv(const EmbeddingMatrix& m) {
  std::string out = "id";
  for (std::size_t d = 0; d < m.dim; ++d) out += ",dim_" + std::to_string(d);
  out += "\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out += m.clip_ids[i];
    for (std::size_t d = 0; d < m.dim; ++d) out += "," + detail::fmt_double(m.row(i)[d]);
    out += "\n";
  }
  return out;
}

inline EmbeddingMatrix embeddings_from_csv(const std::string& text) {
  EmbeddingMatrix m;
  std::size_t start = 0;
  std::size_t row_no = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    start = end + 1;
    if (line.empty()) continue;
    const auto cells = detail::split(line, ',');
    if (row_no == 0) {
      if (cells.empty() || cells[0] != "id" || cells.size() < 2)
        throw std::runtime_error("embedding csv: bad header");
      m.dim = cells.size() - 1;
      ++row_no;
      continue;
    }
    if (cells.size() != m.dim + 1)
      throw std::runtime_error("embedding csv: dimension mismatch in row " +
                               std::to_string(row_no));
    m.clip_ids.emplace_back(cells[0]);
    for (std::size_t d = 1; d < cells.size(); ++d) {
      const double v = detail::parse_double(cells[d]);
      if (!std::isfinite(v))
        throw std::runtime_error("embedding csv: non-finite value in row " +
                                 std::to_string(row_no));
      m.values.push_back(v);
    }
    ++row_no;
  }
  m.validate();
  return m;
}

inline constexpr char kEmbeddingMagic[8] = {'A', 'U', 'S', 'C', 'E', 'M', 'B', 'D'};

inline std::string embeddings_to_bytes(const EmbeddingMatrix& m) {
  detail::ByteWriter bw;
  bw.raw(kEmbeddingMagic, 8);
  bw.u32(1);
  bw.u32(static_cast<std::uint32_t>(m.rows()));
  bw.u32(static_cast<std::uint32_t>(m.dim));
  for (const auto& id : m.clip_ids) bw.str(id);
  for (double v : m.values) bw.f64(v);
  return std::move(bw.bytes);
}

inline EmbeddingMatrix embeddings_from_bytes(std::string_view bytes) {
  detail::ByteReader br{bytes};
  char magic[8];
  br.raw(magic, 8);
  if (std::memcmp(magic, kEmbeddingMagic, 8) != 0)
    throw std::runtime_error("not an embedding dump");
  if (br.u32() != 1) throw std::runtime_error("unsupported embedding dump version");
  EmbeddingMatrix m;
  const std::uint32_t rows = br.u32();
  m.dim = br.u32();
  for (std::uint32_t i = 0; i < rows; ++i) m.clip_ids.push_back(br.str());
  m.values.resize(static_cast<std::size_t>(rows) * m.dim);
  for (auto& v : m.values) v = br.f64();
  m.validate();
  return m;
}

inline void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  if (path.extension() == ".csv")
    detail::write_file_atomic(path, embeddings_to_csv(m));
  else
    detail::write_file_atomic(path, embeddings_to_bytes(m));
}

inline EmbeddingMatrix import_embeddings(const std::filesystem::path& path) {
  const std::string data = detail::read_text_file(path);
  if (data.size() >= 8 && std::memcmp(data.data(), kEmbeddingMagic, 8) == 0)
    return embeddings_from_bytes(data);
  return embeddings_from_csv(data);
}

// ---------------------------------------------------------------------------
// Sliding-window embedding
// ---------------------------------------------------------------------------

// Windows of win_s every step_s, each encoded, mean pooled.
template <typename EncodeFn>
std::vector<double> embed_clip_sliding(const Waveform& w, EncodeFn&& encode, double win_s,
                                       double step_s) {
  if (w.duration_s() + 1e-12 < win_s)
    throw std::invalid_argument("embed_clip_sliding: clip shorter than the window");
  const auto windows = segment_clips(w, win_s, step_s);
  if (windows.empty()) throw std::invalid_argument("embed_clip_sliding: no windows");
  std::vector<double> pooled;
  for (const auto& win : windows) {
    const std::vector<double> e = encode(win);
    if (pooled.empty()) pooled.assign(e.size(), 0.0);
    if (e.size() != pooled.size())
      throw std::runtime_error("embed_clip_sliding: encoder dimension changed across windows");
    for (std::size_t d = 0; d < e.size(); ++d) pooled[d] += e[d];
  }
  for (auto& v : pooled) v /= static_cast<double>(windows.size());
  return pooled;
}

// ---------------------------------------------------------------------------
// AUROC and DeLong confidence intervals
// ---------------------------------------------------------------------------

// Mann-Whitney AUROC with half credit for ties, computed from midranks. The
// numerator is exact in floating point, so auroc(s) + auroc(-s) == 1 holds
// bit-for-bit.
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("auroc: scores/labels size mismatch");
  std::size_t m = 0, n = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("auroc: labels must be 0/1");
    (y == 1 ? m : n)++;
  }
  if (m == 0 || n == 0) throw std::invalid_argument("auroc: need both classes present");
  for (double s : scores)
    if (std::isnan(s)) throw std::invalid_argument("auroc: NaN score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum_pos += midrank;
    i = j + 1;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(m) * static_cast<double>(m + 1);
  return u / (static_cast<double>(m) * static_cast<double>(n));
}

namespace detail {

// Inverse standard normal CDF: Acklam's rational approximation refined with
// one Halley step through erfc, good to ~1e-15.
inline double inv_norm_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("inv_norm_cdf: p must be in (0, 1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * kPi) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

inline double mann_whitney_kernel(double pos, double neg) {
  if (pos > neg) return 1.0;
  if (pos == neg) return 0.5;
  return 0.0;
}

}  // namespace detail

struct DeLongResult {
  double auroc = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double variance = 0.0;
  bool degenerate = false;  // a class has a single example; variance undefined
};

// DeLong 1988 structural components: V10(i) over negatives, V01(j) over
// positives, var = S10/m + S01/n, CI = AUC +/- z * sqrt(var) clipped to [0,1].
inline DeLongResult delong_ci(const std::vector<double>& scores, const std::vector<int>& labels,
                              double level = 0.95) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("delong_ci: bad level");
  DeLongResult res;
  res.auroc = auroc(scores, labels);  // same point estimate, bit for bit

  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i)
    (labels[i] == 1 ? pos : neg).push_back(scores[i]);
  const std::size_t m = pos.size(), n = neg.size();
  if (m < 2 || n < 2) {
    res.degenerate = true;
    res.ci_low = res.ci_high = res.auroc;
    return res;
  }

  std::vector<double> v10(m, 0.0), v01(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += detail::mann_whitney_kernel(pos[i], neg[j]);
    v10[i] = acc / static_cast<double>(n);
  }
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += detail::mann_whitney_kernel(pos[i], neg[j]);
    v01[j] = acc / static_cast<double>(m);
  }
  const double theta = res.auroc;
  double s10 = 0.0, s01 = 0.0;
  for (double v : v10) s10 += (v - theta) * (v - theta);
  for (double v : v01) s01 += (v - theta) * (v - theta);
  s10 /= static_cast<double>(m - 1);
  s01 /= static_cast<double>(n - 1);
  res.variance = s10 / static_cast<double>(m) + s01 / static_cast<double>(n);

  const double z = detail::inv_norm_cdf(0.5 + level / 2.0);
  const double half = z * std::sqrt(std::max(0.0, res.variance));
  res.ci_low = std::max(0.0, theta - half);
  res.ci_high = std::min(1.0, theta + half);
  // The point estimate always sits inside the interval.
  res.ci_low = std::min(res.ci_low, theta);
  res.ci_high = std::max(res.ci_high, theta);
  return res;
}

// ---------------------------------------------------------------------------
// Linear probe (ridge-penalized logistic regression)
// ---------------------------------------------------------------------------

inline std::vector<double> default_penalty_grid() {
  // 9 values log-spaced over 1e-4 .. 1e4.
  std::vector<double> g(9);
  for (int i = 0; i < 9; ++i) g[i] = std::pow(10.0, -4.0 + i);
  return g;
}

struct LinearProbe {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> feat_mean;   // training standardization
  std::vector<double> feat_scale;  // 1 / stddev
  double penalty = 0.0;
  double cv_auroc = std::numeric_limits<double>::quiet_NaN();

  double score(const double* x) const {
    double s = bias;
    for (std::size_t d = 0; d < weights.size(); ++d)
      s += weights[d] * ((x[d] - feat_mean[d]) * feat_scale[d]);
    return s;
  }
};

namespace detail {

// Full-batch gradient descent with backtracking line search on
//   mean_i log(1 + exp(-y_i f(x_i))) + penalty * ||w||^2 / (2n),
// run on standardized features until ||grad|| <= 1e-6 or 1e4 iterations.
inline void fit_logistic_gd(const std::vector<double>& x, const std::vector<int>& y,
                            std::size_t dim, double penalty, std::vector<double>& w, double& b) {
  const std::size_t n = y.size();
  w.assign(dim, 0.0);
  b = 0.0;
  std::vector<double> gw(dim, 0.0);
  std::vector<double> margins(n, 0.0);

  const auto eval_loss = [&](const std::vector<double>& wv, double bv) {
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double f = bv;
      const double* xi = &x[i * dim];
      for (std::size_t d = 0; d < dim; ++d) f += wv[d] * xi[d];
      const double yf = (y[i] == 1 ? 1.0 : -1.0) * f;
      loss += (yf > 35.0) ? std::exp(-yf) : std::log1p(std::exp(-yf));
    }
    loss /= static_cast<double>(n);
    double reg = 0.0;
    for (double v : wv) reg += v * v;
    return loss + 0.5 * penalty * reg / static_cast<double>(n);
  };

  double step = 1.0;
  double cur_loss = eval_loss(w, b);
  std::vector<double> wtry(dim);
  for (int it = 0; it < 10000; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double f = b;
      const double* xi = &x[i * dim];
      for (std::size_t d = 0; d < dim; ++d) f += w[d] * xi[d];
      const double ysign = (y[i] == 1 ? 1.0 : -1.0);
      const double yf = ysign * f;
      const double sig = (yf > 35.0) ? std::exp(-yf) : 1.0 / (1.0 + std::exp(yf));
      const double coef = -ysign * sig;
      for (std::size_t d = 0; d < dim; ++d) gw[d] += coef * xi[d];
      gb += coef;
    }
    double gnorm2 = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      gw[d] = gw[d] / static_cast<double>(n) + penalty * w[d] / static_cast<double>(n);
      gnorm2 += gw[d] * gw[d];
    }
    gb /= static_cast<double>(n);
    gnorm2 += gb * gb;
    if (std::sqrt(gnorm2) <= 1e-6) break;

    // Backtracking (Armijo) from a step that grows again after success.
    step = std::min(step * 2.0, 1e4);
    double new_loss;
    double btry;
    while (true) {
      for (std::size_t d = 0; d < dim; ++d) wtry[d] = w[d] - step * gw[d];
      btry = b - step * gb;
      new_loss = eval_loss(wtry, btry);
      if (new_loss <= cur_loss - 0.5 * step * gnorm2 || step < 1e-18) break;
      step *= 0.5;
    }
    w.swap(wtry);
    b = btry;
    cur_loss = new_loss;
  }
}

}  // namespace detail

// K-fold cross-validated ridge-penalized logistic probe. For each penalty the
// held-out AUROC is averaged over stratified folds; ties pick the larger
// penalty; the final probe is refit on all data with the winner.
inline LinearProbe fit_linear_probe(const std::vector<double>& features,
                                    const std::vector<int>& labels, std::size_t dim,
                                    const std::vector<double>& penalty_grid, int k_folds,
                                    Rng& rng) {
  const std::size_t n = labels.size();
  if (dim == 0 || features.size() != n * dim)
    throw std::invalid_argument("fit_linear_probe: feature matrix shape mismatch");
  if (penalty_grid.empty()) throw std::invalid_argument("fit_linear_probe: empty penalty grid");
  if (k_folds < 2) throw std::invalid_argument("fit_linear_probe: need k_folds >= 2");
  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("fit_linear_probe: labels must be 0/1");
    (y == 1 ? n_pos : n_neg)++;
  }
  if (n_pos < static_cast<std::size_t>(k_folds) || n_neg < static_cast<std::size_t>(k_folds))
    throw std::invalid_argument("fit_linear_probe: need >= k_folds examples per class");

  // Standardization statistics from the whole training split.
  LinearProbe probe;
  probe.feat_mean.assign(dim, 0.0);
  probe.feat_scale.assign(dim, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) probe.feat_mean[d] += features[i * dim + d];
  for (std::size_t d = 0; d < dim; ++d) probe.feat_mean[d] /= static_cast<double>(n);
  std::vector<double> var(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) {
      const double c = features[i * dim + d] - probe.feat_mean[d];
      var[d] += c * c;
    }
  for (std::size_t d = 0; d < dim; ++d) {
    const double sd = std::sqrt(var[d] / static_cast<double>(n));
    probe.feat_scale[d] = (sd > 1e-12) ? 1.0 / sd : 1.0;
  }
  std::vector<double> xs(features.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d)
      xs[i * dim + d] = (features[i * dim + d] - probe.feat_mean[d]) * probe.feat_scale[d];

  // Stratified folds: shuffle each class, deal round-robin.
  std::vector<int> fold_of(n, 0);
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] == cls) idx.push_back(i);
    for (std::size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    for (std::size_t i = 0; i < idx.size(); ++i)
      fold_of[idx[i]] = static_cast<int>(i % static_cast<std::size_t>(k_folds));
  }

  std::vector<double> grid = penalty_grid;
  std::sort(grid.begin(), grid.end());
  for (double g : grid)
    if (!(g > 0.0)) throw std::invalid_argument("fit_linear_probe: penalties must be > 0");

  double best_cv = -1.0;
  double best_penalty = grid.front();
  std::vector<double> fw;
  double fb;
  for (double penalty : grid) {
    double cv_sum = 0.0;
    for (int fold = 0; fold < k_folds; ++fold) {
      std::vector<double> xtr;
      std::vector<int> ytr;
      std::vector<double> held_scores;
      std::vector<int> held_labels;
      for (std::size_t i = 0; i < n; ++i) {
        if (fold_of[i] == fold) continue;
        xtr.insert(xtr.end(), xs.begin() + i * dim, xs.begin() + (i + 1) * dim);
        ytr.push_back(labels[i]);
      }
      detail::fit_logistic_gd(xtr, ytr, dim, penalty, fw, fb);
      for (std::size_t i = 0; i < n; ++i) {
        if (fold_of[i] != fold) continue;
        double s = fb;
        for (std::size_t d = 0; d < dim; ++d) s += fw[d] * xs[i * dim + d];
        held_scores.push_back(s);
        held_labels.push_back(labels[i]);
      }
      cv_sum += auroc(held_scores, held_labels);
    }
    const double cv = cv_sum / k_folds;
    if (cv >= best_cv) {  // ties resolve to the larger penalty (grid ascends)
      best_cv = cv;
      best_penalty = penalty;
    }
  }

  detail::fit_logistic_gd(xs, labels, dim, best_penalty, probe.weights, probe.bias);
  probe.penalty = best_penalty;
  probe.cv_auroc = best_cv;
  return probe;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct TaskResult {
  std::string task;
  double auroc = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  bool degenerate = false;
};

struct EvalReport {
  std::vector<TaskResult> tasks;
};

// Unweighted arithmetic mean of per-task AUROC.
inline double composite_score(const EvalReport& report) {
  if (report.tasks.empty()) throw std::invalid_argument("composite_score: empty report");
  double acc = 0.0;
  for (const auto& t : report.tasks) acc += t.auroc;
  return acc / static_cast<double>(report.tasks.size());
}

// CSV rows per task plus a trailing composite line. Degenerate CI cells are
// left empty instead of printing a fabricated width.
inline std::string report_to_csv(const EvalReport& report) {
  std::string out = "task,auroc,ci_low,ci_high,n_pos,n_neg\n";
  for (const auto& t : report.tasks) {
    out += t.task + "," + detail::fmt_double(t.auroc) + ",";
    if (!t.degenerate)
      out += detail::fmt_double(t.ci_low) + "," + detail::fmt_double(t.ci_high);
    else
      out += ",";
    out += "," + std::to_string(t.n_pos) + "," + std::to_string(t.n_neg) + "\n";
  }
  out += "composite," + detail::fmt_double(composite_score(report)) + ",,,,\n";
  return out;
}

inline void save_report(const EvalReport& report, const std::filesystem::path& path) {
  detail::write_file_atomic(path, report_to_csv(report));
}

}  // namespace auscult
