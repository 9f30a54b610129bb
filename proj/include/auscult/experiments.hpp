#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "auscult/augment.hpp"
#include "auscult/contrastive.hpp"
#include "auscult/eval.hpp"
#include "auscult/features.hpp"

namespace auscult {

// ---------------------------------------------------------------------------
// Grid enumeration (Cartesian products with the max > min constraints)
// ---------------------------------------------------------------------------

// Full parameter grid for one augmentation kind, in deterministic order:
// ascending probability outermost, then each parameter list in ascending
// order.
inline std::vector<AugmentationSpec> enumerate_param_grid(AugKind kind) {
  const std::vector<double> probs = {0.8, 1.0};
  std::vector<AugmentationSpec> out;
  switch (kind) {
    case AugKind::CropAndPad:
      for (double p : probs)
        for (double lo : {0.1, 0.3, 0.5})
          for (double hi : {0.3, 0.5, 0.7})
            if (hi > lo) out.push_back(AugmentationSpec::crop_and_pad(p, lo, hi));
      break;
    case AugKind::Noising:
      for (double p : probs)
        for (double mean : {-0.2, 0.0, 0.2})
          for (double sd : {0.2, 0.4, 0.6}) out.push_back(AugmentationSpec::noising(p, mean, sd));
      break;
    case AugKind::BrownianTapeSpeed:
      for (double p : probs)
        for (double mag : {2.0, 10.0, 20.0})
          out.push_back(AugmentationSpec::brownian_tape_speed(p, mag));
      break;
    case AugKind::Scaling:
      for (double p : probs)
        for (double lo : {0.25, 0.75, 1.25})
          for (double hi : {0.75, 1.25, 1.75})
            if (hi > lo) out.push_back(AugmentationSpec::scaling(p, lo, hi));
      break;
    case AugKind::PitchShift:
      for (double p : probs)
        for (double lo : {0.25, 0.75, 1.25})
          for (double hi : {0.75, 1.25, 1.75})
            if (hi > lo) out.push_back(AugmentationSpec::pitch_shift(p, lo, hi));
      break;
    case AugKind::TimeStretch:
      for (double p : probs)
        for (double lo : {0.25, 0.75, 1.25})
          for (double hi : {0.75, 1.25, 1.75})
            if (hi > lo) out.push_back(AugmentationSpec::time_stretch(p, lo, hi));
      break;
    case AugKind::CircularTimeShift:
      for (double p : probs) out.push_back(AugmentationSpec::circular_time_shift(p));
      break;
    case AugKind::SpecAugment:
      for (double p : probs)
        for (int tmax : {24, 36})
          for (int tcount : {10, 20})
            for (int fmax : {10, 20})
              for (int fcount : {3, 5})
                out.push_back(AugmentationSpec::spec_augment(p, tmax, tcount, fmax, fcount));
      break;
  }
  return out;
}

inline std::vector<AugKind> all_aug_kinds() {
  std::vector<AugKind> v;
  for (int i = 0; i < kNumAugKinds; ++i) v.push_back(static_cast<AugKind>(i));
  return v;
}

inline std::map<AugKind, AugmentationSpec> best_param_map() {
  std::map<AugKind, AugmentationSpec> m;
  for (AugKind k : all_aug_kinds()) m.emplace(k, best_spec(k));
  return m;
}

// All 1-step chains plus ordered 2-step chains whose first step is
// time-domain. SpecAugment only ever appears as the final step. With
// allow_repeat the second slot may repeat the first kind (7x8 = 56 pairs);
// without it the kinds must differ (7x7 = 49).
inline std::vector<AugmentationChain> enumerate_chains(
    bool allow_repeat, const std::map<AugKind, AugmentationSpec>& params = best_param_map(),
    const std::vector<AugKind>& kinds = all_aug_kinds()) {
  const auto spec_for = [&](AugKind k) -> const AugmentationSpec& {
    const auto it = params.find(k);
    if (it == params.end())
      throw std::invalid_argument(std::string("enumerate_chains: no parameters for ") +
                                  aug_kind_name(k));
    return it->second;
  };
  std::vector<AugmentationChain> out;
  for (AugKind k : kinds) out.push_back(AugmentationChain::of(spec_for(k)));
  for (AugKind first : kinds) {
    if (first == AugKind::SpecAugment) continue;
    for (AugKind second : kinds) {
      if (second == first && !allow_repeat) continue;
      out.push_back(AugmentationChain::of(spec_for(first), spec_for(second)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment manifest
// ---------------------------------------------------------------------------

struct Experiment {
  std::string id;
  int phase = 0;
  std::uint64_t seed = 0;
  AugmentationChain chain;
  bool done = false;
  double score = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentManifest {
  std::uint64_t master_seed = 0;
  std::vector<Experiment> experiments;

  const Experiment* find(const std::string& id) const {
    for (const auto& e : experiments)
      if (e.id == id) return &e;
    return nullptr;
  }
};

inline std::string experiment_manifest_to_tsv(const ExperimentManifest& em) {
  std::string out = "# seed\t" + std::to_string(em.master_seed) + "\n";
  out += "id\tphase\tseed\tstatus\tscore\tchain\n";
  auto sorted = em.experiments;
  std::sort(sorted.begin(), sorted.end(), [](const Experiment& a, const Experiment& b) {
    return std::make_pair(a.phase, a.id) < std::make_pair(b.phase, b.id);
  });
  for (const auto& e : sorted) {
    out += e.id + "\t" + std::to_string(e.phase) + "\t" + std::to_string(e.seed) + "\t";
    out += e.done ? "done" : "pending";
    out += "\t";
    if (e.done) {
      if (!std::isfinite(e.score))
        throw std::runtime_error("experiment " + e.id + " done but score not finite");
      out += detail::fmt_double(e.score);
    }
    out += "\t" + chain_to_line(e.chain) + "\n";
  }
  return out;
}

inline ExperimentManifest experiment_manifest_from_tsv(const std::string& text) {
  ExperimentManifest em;
  bool saw_header = false;
  std::size_t start = 0;
  std::set<std::string> ids;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    start = end + 1;
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto cells = detail::split(line, '\t');
      if (cells.size() == 2 && detail::trim(cells[0]) == "# seed")
        em.master_seed = detail::parse_uint(cells[1]);
      continue;
    }
    const auto cells = detail::split(line, '\t');
    if (!saw_header) {
      if (cells.size() != 6 || cells[0] != "id")
        throw std::runtime_error("experiment manifest: bad header");
      saw_header = true;
      continue;
    }
    if (cells.size() != 6) throw std::runtime_error("experiment manifest: bad row");
    Experiment e;
    e.id = std::string(cells[0]);
    e.phase = static_cast<int>(detail::parse_int(cells[1]));
    e.seed = detail::parse_uint(cells[2]);
    if (cells[3] == "done")
      e.done = true;
    else if (cells[3] == "pending")
      e.done = false;
    else
      throw std::runtime_error("experiment manifest: bad status '" + std::string(cells[3]) + "'");
    if (e.done) e.score = detail::parse_double(cells[4]);
    e.chain = chain_from_line(cells[5]);
    if (!ids.insert(e.id).second)
      throw std::runtime_error("experiment manifest: duplicate id " + e.id);
    em.experiments.push_back(std::move(e));
  }
  return em;
}

// ---------------------------------------------------------------------------
// Corpus loading for the two evaluation protocols
// ---------------------------------------------------------------------------

struct ProbeClip {
  std::string id;
  Waveform w;
  std::string split;
  std::map<std::string, int> labels;
};

struct LoadedCorpus {
  std::vector<Waveform> train;
  std::vector<ProbeClip> probe;
  std::vector<std::string> task_names;
};

inline std::string clip_id(const ClipManifestEntry& e) {
  if (e.clip_start_s == 0.0) return e.source_path;
  return e.source_path + "@" + detail::fmt_double(e.clip_start_s);
}

// Loads every manifest row, slices out [start, start+length), and
// standardizes lengths: probe clips longer than clip_s get a single random
// clip in the lightweight protocol or a center crop/pad to long_clip_s in
// the sliding protocol.
inline LoadedCorpus load_corpus(const Manifest& manifest, const std::filesystem::path& base_dir,
                                double clip_s, bool sliding_protocol, double long_clip_s,
                                std::uint64_t seed, int sample_rate_hz = kCanonicalRateHz) {
  LoadedCorpus out;
  out.task_names = manifest.task_names;
  std::uint64_t row = 0;
  for (const auto& e : manifest.entries) {
    Waveform full = load_wav(base_dir / e.source_path, sample_rate_hz);
    const std::size_t a =
        std::min(full.size(), static_cast<std::size_t>(std::llround(e.clip_start_s * sample_rate_hz)));
    const std::size_t b = std::min(
        full.size(),
        a + static_cast<std::size_t>(std::llround(e.clip_len_s * sample_rate_hz)));
    Waveform clip;
    clip.sample_rate_hz = full.sample_rate_hz;
    clip.samples.assign(full.samples.begin() + static_cast<std::ptrdiff_t>(a),
                        full.samples.begin() + static_cast<std::ptrdiff_t>(b));
    if (clip.samples.empty())
      throw std::runtime_error("corpus: empty clip range for " + e.source_path);

    if (e.split == kSplitTrain) {
      out.train.push_back(crop_or_pad(clip, clip_s));
    } else {
      ProbeClip pc;
      pc.id = clip_id(e);
      pc.split = e.split;
      pc.labels = e.task_labels;
      if (sliding_protocol) {
        pc.w = crop_or_pad(clip, long_clip_s);
      } else if (clip.duration_s() > clip_s) {
        Rng rng = Rng::from_parts(seed, Rng::hash_string("probe_clip"), row);
        pc.w = sample_random_clip(clip, clip_s, rng);
      } else {
        pc.w = crop_or_pad(clip, clip_s);
      }
      out.probe.push_back(std::move(pc));
    }
    ++row;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Single experiment: train -> embed -> probe
// ---------------------------------------------------------------------------

struct PhaseOptions {
  std::uint64_t seed = 0;
  int workers = 1;
  double clip_s = 2.0;
  double long_clip_s = 10.0;
  double window_step_s = 1.0;
  FeatureConfig features;
  EncoderConfig encoder;
  TrainConfig train;
  std::vector<double> penalty_grid = default_penalty_grid();
  int k_folds = 5;
  bool allow_repeat = false;
  std::vector<AugKind> kinds = all_aug_kinds();
  long long max_experiments = -1;  // stop after N completions; -1 = run all
};

struct ExperimentOutcome {
  EvalReport report;
  double composite = 0.0;
  std::uint64_t selected_step = 0;
};

// Runs one experiment end to end: SimCLR-style training with the chain,
// EMA checkpoint selection on the validation curve, frozen-embedding linear
// probes per task on the probe splits.
inline ExperimentOutcome run_experiment(const LoadedCorpus& corpus,
                                        const AugmentationChain& chain, const PhaseOptions& opt,
                                        std::uint64_t seed, bool sliding_protocol) {
  if (corpus.train.empty()) throw std::runtime_error("run_experiment: no train split clips");
  if (corpus.probe.empty()) throw std::runtime_error("run_experiment: no probe clips");

  TrainConfig tc = opt.train;
  tc.seed = seed;
  const TrainResult tr = train(corpus.train, chain, opt.encoder, tc, opt.features);

  std::vector<std::pair<std::uint64_t, double>> curve;
  for (const auto& ck : tr.checkpoints) curve.emplace_back(ck.step, ck.val_loss);
  const std::uint64_t best_step =
      select_checkpoint_ema(curve, tc.ema_weight, MetricDirection::Minimize);
  const Checkpoint* best = nullptr;
  for (const auto& ck : tr.checkpoints)
    if (ck.step == best_step) best = &ck;
  if (!best) throw std::runtime_error("run_experiment: selected checkpoint missing");

  MlpEncoder model(opt.encoder);
  model.params() = best->params;
  const auto encode_window = [&](const Waveform& w) {
    return model.embed(log_mel(w, opt.features));
  };

  // Frozen embeddings for all probe clips.
  std::vector<std::vector<double>> emb(corpus.probe.size());
  for (std::size_t i = 0; i < corpus.probe.size(); ++i) {
    emb[i] = sliding_protocol
                 ? embed_clip_sliding(corpus.probe[i].w, encode_window, opt.clip_s,
                                      opt.window_step_s)
                 : encode_window(corpus.probe[i].w);
  }
  const std::size_t dim = emb.empty() ? 0 : emb.front().size();

  ExperimentOutcome out;
  out.selected_step = best_step;
  for (const auto& task : corpus.task_names) {
    std::vector<double> x_train;
    std::vector<int> y_train;
    std::vector<std::vector<double>> x_eval;
    std::vector<int> y_eval;
    for (std::size_t i = 0; i < corpus.probe.size(); ++i) {
      const auto it = corpus.probe[i].labels.find(task);
      if (it == corpus.probe[i].labels.end()) continue;
      if (corpus.probe[i].split == kSplitProbeTrain) {
        x_train.insert(x_train.end(), emb[i].begin(), emb[i].end());
        y_train.push_back(it->second);
      } else {
        x_eval.push_back(emb[i]);
        y_eval.push_back(it->second);
      }
    }
    Rng probe_rng = Rng::from_parts(seed, Rng::hash_string("probe"), Rng::hash_string(task));
    const LinearProbe probe =
        fit_linear_probe(x_train, y_train, dim, opt.penalty_grid, opt.k_folds, probe_rng);
    std::vector<double> scores(x_eval.size());
    for (std::size_t i = 0; i < x_eval.size(); ++i) scores[i] = probe.score(x_eval[i].data());
    const DeLongResult dl = delong_ci(scores, y_eval);
    TaskResult t;
    t.task = task;
    t.auroc = dl.auroc;
    t.ci_low = dl.ci_low;
    t.ci_high = dl.ci_high;
    t.degenerate = dl.degenerate;
    for (int y : y_eval) (y == 1 ? t.n_pos : t.n_neg)++;
    out.report.tasks.push_back(std::move(t));
  }
  out.composite = composite_score(out.report);
  return out;
}

// ---------------------------------------------------------------------------
// Phase runner
// ---------------------------------------------------------------------------

namespace detail {

inline std::string grid_experiment_id(AugKind kind, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03zu", index);
  return std::string("p1_") + aug_kind_name(kind) + "_" + buf;
}

inline std::string chain_experiment_id(const AugmentationChain& chain) {
  if (chain.steps.size() == 1)
    return std::string("p2_single_") + aug_kind_name(chain.steps[0].kind);
  return std::string("p2_") + aug_kind_name(chain.steps[0].kind) + "__" +
         aug_kind_name(chain.steps[1].kind);
}

}  // namespace detail

// Winning parameters per kind from completed phase-1 rows.
inline std::map<AugKind, AugmentationSpec> phase1_best_params(const ExperimentManifest& em,
                                                              const std::vector<AugKind>& kinds) {
  std::map<AugKind, AugmentationSpec> best;
  std::map<AugKind, double> best_score;
  for (const auto& e : em.experiments) {
    if (e.phase != 1 || !e.done) continue;
    const AugKind k = e.chain.steps.front().kind;
    const auto it = best_score.find(k);
    if (it == best_score.end() || e.score > it->second) {
      best_score[k] = e.score;
      best.insert_or_assign(k, e.chain.steps.front());
    }
  }
  for (AugKind k : kinds)
    if (!best.count(k))
      throw std::runtime_error(std::string("phase 2 requested but no completed phase-1 result for ") +
                               aug_kind_name(k));
  return best;
}

// Best completed phase-2 chain.
inline AugmentationChain phase2_best_chain(const ExperimentManifest& em) {
  const Experiment* best = nullptr;
  for (const auto& e : em.experiments) {
    if (e.phase != 2 || !e.done) continue;
    if (!best || e.score > best->score) best = &e;
  }
  if (!best) throw std::runtime_error("phase 3 requested but no completed phase-2 results");
  return best->chain;
}

// Runs (or resumes) one study phase over the corpus. Each experiment trains
// with its chain, probes, and persists its report to
// <out_dir>/results/<id>.csv; the manifest at <out_dir>/experiments.tsv is
// rewritten after every completion and is the source of truth for resumption.
inline ExperimentManifest run_phase(const std::filesystem::path& corpus_manifest_path, int phase,
                                    const std::filesystem::path& out_dir,
                                    const PhaseOptions& opt) {
  if (phase < 1 || phase > 3) throw std::invalid_argument("run_phase: phase must be 1, 2, or 3");
  namespace fs = std::filesystem;
  const Manifest corpus_manifest = load_manifest(corpus_manifest_path);
  const fs::path base_dir = corpus_manifest_path.parent_path();

  const fs::path manifest_path = out_dir / "experiments.tsv";
  ExperimentManifest prior;
  if (fs::exists(manifest_path)) {
    prior = experiment_manifest_from_tsv(detail::read_text_file(manifest_path));
    if (prior.master_seed != opt.seed)
      throw std::runtime_error("run_phase: existing manifest was produced with a different seed");
  } else {
    prior.master_seed = opt.seed;
  }

  // Enumerate this phase's experiments.
  std::vector<Experiment> planned;
  const auto plan = [&](std::string id, const AugmentationChain& chain) {
    Experiment e;
    e.id = std::move(id);
    e.phase = phase;
    e.seed = Rng::from_parts(opt.seed, Rng::hash_string(e.id)).next_u64();
    e.chain = chain;
    planned.push_back(std::move(e));
  };
  if (phase == 1) {
    for (AugKind k : opt.kinds) {
      const auto grid = enumerate_param_grid(k);
      for (std::size_t i = 0; i < grid.size(); ++i)
        plan(detail::grid_experiment_id(k, i), AugmentationChain::of(grid[i]));
    }
  } else if (phase == 2) {
    const auto params = phase1_best_params(prior, opt.kinds);
    for (const auto& chain : enumerate_chains(opt.allow_repeat, params, opt.kinds))
      plan(detail::chain_experiment_id(chain), chain);
  } else {
    plan("p3_best", phase2_best_chain(prior));
  }

  // Merge with prior state (completed rows keep their scores).
  ExperimentManifest em;
  em.master_seed = opt.seed;
  em.experiments = prior.experiments;
  for (auto& e : planned) {
    bool known = false;
    for (const auto& old : em.experiments)
      if (old.id == e.id) {
        known = true;
        break;
      }
    if (!known) em.experiments.push_back(std::move(e));
  }

  const LoadedCorpus corpus =
      load_corpus(corpus_manifest, base_dir, opt.clip_s, phase == 3, opt.long_clip_s, opt.seed,
                  opt.features.sample_rate_hz);

  std::vector<Experiment*> pending;
  for (auto& e : em.experiments)
    if (e.phase == phase && !e.done) pending.push_back(&e);
  if (opt.max_experiments >= 0 &&
      pending.size() > static_cast<std::size_t>(opt.max_experiments))
    pending.resize(static_cast<std::size_t>(opt.max_experiments));

  std::mutex manifest_mutex;  // single manifest writer
  std::size_t next = 0;
  std::mutex queue_mutex;
  const auto worker = [&]() {
    while (true) {
      Experiment* e = nullptr;
      {
        std::lock_guard<std::mutex> lk(queue_mutex);
        if (next >= pending.size()) return;
        e = pending[next++];
      }
      const ExperimentOutcome outcome =
          run_experiment(corpus, e->chain, opt, e->seed, phase == 3);
      {
        std::lock_guard<std::mutex> lk(manifest_mutex);
        save_report(outcome.report, out_dir / "results" / (e->id + ".csv"));
        e->done = true;
        e->score = outcome.composite;
        detail::write_file_atomic(manifest_path, experiment_manifest_to_tsv(em));
      }
    }
  };

  const int n_workers = std::max(1, opt.workers);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  detail::write_file_atomic(manifest_path, experiment_manifest_to_tsv(em));
  return em;
}

// ---------------------------------------------------------------------------
// Figure-2-style heatmap export
// ---------------------------------------------------------------------------

// 7x8 matrix (rows: first augmentation, columns: second) of phase-2
// composite scores, preceded by the single-augmentation vector. Missing
// cells stay blank.
inline std::string heatmap_to_csv(const ExperimentManifest& em) {
  const auto kinds = all_aug_kinds();
  std::map<std::pair<int, int>, double> pair_scores;
  std::map<int, double> single_scores;
  for (const auto& e : em.experiments) {
    if (e.phase != 2 || !e.done) continue;
    if (e.chain.steps.size() == 1) {
      single_scores[static_cast<int>(e.chain.steps[0].kind)] = e.score;
    } else {
      pair_scores[{static_cast<int>(e.chain.steps[0].kind),
                   static_cast<int>(e.chain.steps[1].kind)}] = e.score;
    }
  }
  std::string out = "first_augmentation";
  for (AugKind k : kinds) out += std::string(",") + aug_kind_name(k);
  out += "\n";
  out += "single";
  for (AugKind k : kinds) {
    out += ",";
    const auto it = single_scores.find(static_cast<int>(k));
    if (it != single_scores.end()) out += detail::fmt_double(it->second);
  }
  out += "\n";
  for (AugKind first : kinds) {
    if (first == AugKind::SpecAugment) continue;
    out += aug_kind_name(first);
    for (AugKind second : kinds) {
      out += ",";
      const auto it = pair_scores.find({static_cast<int>(first), static_cast<int>(second)});
      if (it != pair_scores.end()) out += detail::fmt_double(it->second);
    }
    out += "\n";
  }
  return out;
}

}  // namespace auscult
