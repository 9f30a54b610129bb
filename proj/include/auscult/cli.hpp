#pragma once

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "auscult/audio.hpp"
#include "auscult/augment.hpp"
#include "auscult/contrastive.hpp"
#include "auscult/eval.hpp"
#include "auscult/experiments.hpp"
#include "auscult/features.hpp"
#include "auscult/synth.hpp"

namespace auscult::cli {

namespace fs = std::filesystem;

// Exit codes: 0 success, 1 usage error, 2 data error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

namespace detail {

inline void echo(std::ostream& out, const std::string& key, const std::string& value) {
  out << "config: " << key << " = " << value << "\n";
}

inline void echo_seed(std::ostream& out, std::uint64_t seed) {
  echo(out, "seed", std::to_string(seed));
}

struct FeatureFlags {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int n_mels = 80;
  double fmin = 60.0;
  double fmax = 7800.0;
  int rate = kCanonicalRateHz;

  void attach(CLI::App* cmd) {
    cmd->add_option("--rate", rate, "Sample rate in Hz");
    cmd->add_option("--window-ms", window_ms, "STFT window in milliseconds");
    cmd->add_option("--hop-ms", hop_ms, "STFT hop in milliseconds");
    cmd->add_option("--n-mels", n_mels, "Number of mel bins");
    cmd->add_option("--fmin", fmin, "Lowest mel filter frequency (Hz)");
    cmd->add_option("--fmax", fmax, "Highest mel filter frequency (Hz)");
  }

  FeatureConfig config() const {
    FeatureConfig c;
    c.sample_rate_hz = rate;
    c.window_s = window_ms / 1000.0;
    c.hop_s = hop_ms / 1000.0;
    c.n_mels = n_mels;
    c.fmin_hz = fmin;
    c.fmax_hz = fmax;
    return c;
  }

  void echo_all(std::ostream& out) const {
    echo(out, "rate", std::to_string(rate));
    echo(out, "n_mels", std::to_string(n_mels));
    echo(out, "window_ms", auscult::detail::fmt_double(window_ms));
    echo(out, "hop_ms", auscult::detail::fmt_double(hop_ms));
  }
};

inline EncoderConfig encoder_for(const FeatureConfig& fc, double clip_s) {
  EncoderConfig ec;
  ec.n_mels = fc.n_mels;
  ec.n_frames = stft_frame_count(standard_len(clip_s, fc.sample_rate_hz), fc.win_len(),
                                 fc.hop_len());
  return ec;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

struct CliState {
  std::ostream& out;
  std::ostream& err;
};

inline int cmd_synth(CliState& st, const std::string& out_dir, int classes, int clips,
                     double clip_s, int rate, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n_classes = classes;
  cfg.clips_per_class = clips;
  cfg.clip_s = clip_s;
  cfg.sample_rate_hz = rate;
  cfg.seed = seed;
  detail::echo(st.out, "subcommand", "synth");
  detail::echo(st.out, "out", out_dir);
  detail::echo(st.out, "classes", std::to_string(classes));
  detail::echo(st.out, "clips_per_class", std::to_string(clips));
  detail::echo_seed(st.out, seed);
  const Manifest m = synth_corpus(cfg, out_dir);
  st.out << "wrote " << m.entries.size() << " clips and " << (fs::path(out_dir) / "manifest.tsv")
         << "\n";
  return kExitOk;
}

inline int cmd_augment(CliState& st, const std::string& in, const std::string& chain_path,
                       const std::string& out_path, std::uint64_t seed,
                       const detail::FeatureFlags& ff) {
  detail::echo(st.out, "subcommand", "augment");
  detail::echo(st.out, "in", in);
  detail::echo(st.out, "chain", chain_path);
  detail::echo(st.out, "out", out_path);
  detail::echo_seed(st.out, seed);
  const AugmentationChain chain =
      chain_from_config(auscult::detail::read_text_file(chain_path));
  const FeatureConfig fc = ff.config();
  const Waveform w = load_wav(in, fc.sample_rate_hz);
  Rng rng(seed);

  const bool wav_out = fs::path(out_path).extension() == ".wav";
  if (wav_out) {
    if (chain.has_spec_augment())
      throw std::runtime_error(
          "chain ends in spec_augment; the output must be a spectrogram (.spec or .csv), not .wav");
    Waveform cur = w;
    for (const auto& step : chain.steps) cur = apply_spec(step, cur, rng);
    save_wav(cur, out_path);
  } else {
    const Spectrogram s =
        apply_chain(chain, w, [&](const Waveform& x) { return log_mel(x, fc); }, rng);
    if (fs::path(out_path).extension() == ".csv")
      auscult::detail::write_file_atomic(out_path, spectrogram_to_csv(s));
    else
      save_spectrogram(s, out_path);
  }
  st.out << "wrote " << out_path << "\n";
  return kExitOk;
}

inline int cmd_features(CliState& st, const std::string& in, const std::string& out_path,
                        const detail::FeatureFlags& ff) {
  detail::echo(st.out, "subcommand", "features");
  detail::echo(st.out, "in", in);
  detail::echo(st.out, "out", out_path);
  ff.echo_all(st.out);
  const FeatureConfig fc = ff.config();
  const Waveform w = load_wav(in, fc.sample_rate_hz);
  const Spectrogram s = log_mel(w, fc);
  if (fs::path(out_path).extension() == ".csv")
    auscult::detail::write_file_atomic(out_path, spectrogram_to_csv(s));
  else
    save_spectrogram(s, out_path);
  st.out << "wrote " << out_path << " (" << s.n_mel_bins << " x " << s.n_frames << ")\n";
  return kExitOk;
}

inline int cmd_train(CliState& st, const std::string& manifest_path,
                     const std::string& chain_path, const std::string& out_dir,
                     TrainConfig tc, double clip_s, const detail::FeatureFlags& ff) {
  detail::echo(st.out, "subcommand", "train");
  detail::echo(st.out, "manifest", manifest_path);
  detail::echo(st.out, "chain", chain_path);
  detail::echo(st.out, "out", out_dir);
  detail::echo(st.out, "steps", std::to_string(tc.steps));
  detail::echo(st.out, "batch_size", std::to_string(tc.batch_size));
  detail::echo(st.out, "learning_rate", auscult::detail::fmt_double(tc.learning_rate));
  detail::echo(st.out, "checkpoint_every", std::to_string(tc.checkpoint_every));
  detail::echo(st.out, "temperature", auscult::detail::fmt_double(tc.temperature));
  detail::echo(st.out, "ema_weight", auscult::detail::fmt_double(tc.ema_weight));
  detail::echo_seed(st.out, tc.seed);

  const AugmentationChain chain =
      chain_from_config(auscult::detail::read_text_file(chain_path));
  const Manifest manifest = load_manifest(manifest_path);
  const FeatureConfig fc = ff.config();
  const LoadedCorpus corpus = load_corpus(manifest, fs::path(manifest_path).parent_path(),
                                          clip_s, false, 10.0, tc.seed, fc.sample_rate_hz);
  if (corpus.train.empty()) throw std::runtime_error("train: no rows in the train split");
  const EncoderConfig ec = detail::encoder_for(fc, clip_s);

  const TrainResult res = train(corpus.train, chain, ec, tc, fc);
  fs::create_directories(fs::path(out_dir) / "checkpoints");
  for (const auto& ck : res.checkpoints) {
    char name[32];
    std::snprintf(name, sizeof(name), "step_%08llu.ckpt",
                  static_cast<unsigned long long>(ck.step));
    save_checkpoint(ck, fs::path(out_dir) / "checkpoints" / name);
  }
  auscult::detail::write_file_atomic(fs::path(out_dir) / "log.csv", train_log_to_csv(res.log));

  std::vector<std::pair<std::uint64_t, double>> curve;
  for (const auto& ck : res.checkpoints) curve.emplace_back(ck.step, ck.val_loss);
  const std::uint64_t best_step =
      select_checkpoint_ema(curve, tc.ema_weight, MetricDirection::Minimize);
  for (const auto& ck : res.checkpoints)
    if (ck.step == best_step) save_checkpoint(ck, fs::path(out_dir) / "best.ckpt");
  st.out << "selected checkpoint step " << best_step << " (bias-corrected EMA of validation loss)\n";
  st.out << "wrote " << out_dir << "/best.ckpt\n";
  return kExitOk;
}

inline int cmd_embed(CliState& st, const std::string& manifest_path,
                     const std::string& checkpoint_path, const std::string& out_path,
                     bool sliding, double window_s, double step_s, double long_clip_s,
                     std::uint64_t seed, const detail::FeatureFlags& ff) {
  detail::echo(st.out, "subcommand", "embed");
  detail::echo(st.out, "manifest", manifest_path);
  detail::echo(st.out, "checkpoint", checkpoint_path);
  detail::echo(st.out, "out", out_path);
  detail::echo(st.out, "sliding", sliding ? "true" : "false");
  detail::echo_seed(st.out, seed);

  const Checkpoint ck = load_checkpoint(checkpoint_path);
  MlpEncoder model(ck.encoder);
  if (model.num_params() != ck.params.size())
    throw std::runtime_error("checkpoint parameter blob does not match its encoder config");
  model.params() = ck.params;

  FeatureConfig fc = ff.config();
  fc.n_mels = ck.encoder.n_mels;  // features must match what the encoder expects
  const Manifest manifest = load_manifest(manifest_path);
  const LoadedCorpus corpus = load_corpus(manifest, fs::path(manifest_path).parent_path(),
                                          window_s, sliding, long_clip_s, seed,
                                          fc.sample_rate_hz);
  const auto encode_window = [&](const Waveform& w) { return model.embed(log_mel(w, fc)); };

  EmbeddingMatrix m;
  m.dim = static_cast<std::size_t>(ck.encoder.embedding_dim);
  for (const auto& pc : corpus.probe) {
    const std::vector<double> e =
        sliding ? embed_clip_sliding(pc.w, encode_window, window_s, step_s)
                : encode_window(pc.w);
    m.clip_ids.push_back(pc.id);
    m.values.insert(m.values.end(), e.begin(), e.end());
  }
  m.validate();
  save_embeddings(m, out_path);
  st.out << "wrote " << m.rows() << " embeddings (dim " << m.dim << ") to " << out_path << "\n";
  return kExitOk;
}

inline int cmd_probe(CliState& st, const std::string& embeddings_path,
                     const std::string& labels_path, const std::string& out_path,
                     std::vector<double> penalty_grid, int k_folds, std::uint64_t seed) {
  detail::echo(st.out, "subcommand", "probe");
  detail::echo(st.out, "embeddings", embeddings_path);
  detail::echo(st.out, "labels", labels_path);
  detail::echo(st.out, "out", out_path);
  detail::echo(st.out, "k_folds", std::to_string(k_folds));
  detail::echo_seed(st.out, seed);
  if (penalty_grid.empty()) penalty_grid = default_penalty_grid();

  const EmbeddingMatrix emb = import_embeddings(embeddings_path);
  const Manifest manifest = load_manifest(labels_path);
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < emb.rows(); ++i) row_of[emb.clip_ids[i]] = i;

  EvalReport report;
  for (const auto& task : manifest.task_names) {
    std::vector<double> x_train;
    std::vector<int> y_train;
    std::vector<std::vector<double>> x_eval;
    std::vector<int> y_eval;
    for (const auto& e : manifest.entries) {
      if (e.split == kSplitTrain) continue;
      const auto lab = e.task_labels.find(task);
      if (lab == e.task_labels.end()) continue;
      const auto it = row_of.find(clip_id(e));
      if (it == row_of.end())
        throw std::runtime_error("no embedding for labeled clip '" + clip_id(e) + "'");
      const double* row = emb.row(it->second);
      if (e.split == kSplitProbeTrain) {
        x_train.insert(x_train.end(), row, row + emb.dim);
        y_train.push_back(lab->second);
      } else {
        x_eval.emplace_back(row, row + emb.dim);
        y_eval.push_back(lab->second);
      }
    }
    Rng rng = Rng::from_parts(seed, Rng::hash_string("probe"), Rng::hash_string(task));
    const LinearProbe probe =
        fit_linear_probe(x_train, y_train, emb.dim, penalty_grid, k_folds, rng);
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
    report.tasks.push_back(std::move(t));
  }
  save_report(report, out_path);
  st.out << "composite " << auscult::detail::fmt_double(composite_score(report)) << " over "
         << report.tasks.size() << " tasks -> " << out_path << "\n";
  return kExitOk;
}

inline int cmd_grid(CliState& st, const std::string& kind_name, bool chains, bool allow_repeat,
                    bool counts, int run_phase_num, const std::string& corpus,
                    const std::string& out_dir, PhaseOptions opt) {
  detail::echo(st.out, "subcommand", "grid");
  detail::echo_seed(st.out, opt.seed);
  if (run_phase_num > 0) {
    detail::echo(st.out, "phase", std::to_string(run_phase_num));
    detail::echo(st.out, "corpus", corpus);
    detail::echo(st.out, "out", out_dir);
    detail::echo(st.out, "workers", std::to_string(opt.workers));
    if (corpus.empty() || out_dir.empty())
      throw std::runtime_error("grid --phase needs --corpus and --out");
    const ExperimentManifest em = run_phase(corpus, run_phase_num, out_dir, opt);
    std::size_t done = 0;
    for (const auto& e : em.experiments)
      if (e.done) ++done;
    st.out << done << "/" << em.experiments.size() << " experiments done; manifest at "
           << (fs::path(out_dir) / "experiments.tsv") << "\n";
    return kExitOk;
  }
  if (counts) {
    for (AugKind k : all_aug_kinds())
      st.out << aug_kind_name(k) << "\t" << enumerate_param_grid(k).size() << "\n";
    const auto cs = enumerate_chains(allow_repeat);
    st.out << "chains\t" << cs.size() << "\n";
    return kExitOk;
  }
  if (chains) {
    for (const auto& c : enumerate_chains(allow_repeat)) st.out << chain_to_line(c) << "\n";
    return kExitOk;
  }
  if (kind_name.empty())
    throw std::runtime_error("grid: pass --kind NAME, --chains, --counts, or --phase N");
  const AugKind kind = aug_kind_from_name(kind_name);
  for (const auto& s : enumerate_param_grid(kind))
    st.out << chain_to_line(AugmentationChain::of(s)) << "\n";
  return kExitOk;
}

inline int cmd_report(CliState& st, const std::string& experiments_dir,
                      const std::string& out_path) {
  detail::echo(st.out, "subcommand", "report");
  detail::echo(st.out, "experiments", experiments_dir);
  detail::echo(st.out, "out", out_path);
  const ExperimentManifest em = experiment_manifest_from_tsv(
      auscult::detail::read_text_file(fs::path(experiments_dir) / "experiments.tsv"));
  auscult::detail::write_file_atomic(out_path, heatmap_to_csv(em));
  st.out << "wrote " << out_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CliState st{out, err};
  CLI::App app{"health-acoustic augmentation, contrastive training, and linear-probe evaluation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a config file ([subcommand] sections)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic test corpus");
  std::string synth_out;
  int synth_classes = 3, synth_clips = 200, synth_rate = kCanonicalRateHz;
  double synth_clip_s = 2.0;
  std::uint64_t synth_seed = 0;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--classes", synth_classes, "Number of classes");
  synth->add_option("--clips-per-class", synth_clips, "Clips per class");
  synth->add_option("--clip-seconds", synth_clip_s, "Clip length in seconds");
  synth->add_option("--rate", synth_rate, "Sample rate in Hz");
  synth->add_option("--seed", synth_seed, "Random seed");

  // augment
  auto* augment = app.add_subcommand("augment", "Apply an augmentation chain to one WAV file");
  std::string aug_in, aug_chain, aug_out;
  std::uint64_t aug_seed = 0;
  detail::FeatureFlags aug_ff;
  augment->add_option("--in", aug_in, "Input WAV")->required();
  augment->add_option("--chain", aug_chain, "Chain config file")->required();
  augment->add_option("--out", aug_out, "Output file (.wav, .spec, or .csv)")->required();
  augment->add_option("--seed", aug_seed, "Random seed");
  aug_ff.attach(augment);

  // features
  auto* features = app.add_subcommand("features", "Convert a WAV file to a log-mel spectrogram");
  std::string feat_in, feat_out;
  detail::FeatureFlags feat_ff;
  features->add_option("--in", feat_in, "Input WAV")->required();
  features->add_option("--out", feat_out, "Output file (.spec binary or .csv)")->required();
  feat_ff.attach(features);

  // train
  auto* train_cmd = app.add_subcommand("train", "Contrastive training on a corpus manifest");
  std::string train_manifest, train_chain, train_out;
  TrainConfig tc;
  double train_clip_s = 2.0;
  detail::FeatureFlags train_ff;
  train_cmd->add_option("--manifest", train_manifest, "Corpus manifest TSV")->required();
  train_cmd->add_option("--chain", train_chain, "Chain config file")->required();
  train_cmd->add_option("--out", train_out, "Output directory")->required();
  train_cmd->add_option("--steps", tc.steps, "Optimizer steps");
  train_cmd->add_option("--batch", tc.batch_size, "Batch size (clips per step)");
  train_cmd->add_option("--lr", tc.learning_rate, "Learning rate");
  train_cmd->add_option("--checkpoint-every", tc.checkpoint_every, "Checkpoint interval");
  train_cmd->add_option("--temperature", tc.temperature, "NT-Xent temperature");
  train_cmd->add_option("--ema-weight", tc.ema_weight, "EMA weight for checkpoint selection");
  train_cmd->add_option("--weight-decay", tc.weight_decay, "AdamW weight decay");
  train_cmd->add_option("--clip-seconds", train_clip_s, "Training clip length");
  train_cmd->add_option("--seed", tc.seed, "Random seed");
  train_ff.attach(train_cmd);

  // embed
  auto* embed = app.add_subcommand("embed", "Embed probe clips with a trained checkpoint");
  std::string emb_manifest, emb_ckpt, emb_out;
  bool emb_sliding = false;
  double emb_window = 2.0, emb_step = 1.0, emb_long = 10.0;
  std::uint64_t emb_seed = 0;
  detail::FeatureFlags emb_ff;
  embed->add_option("--manifest", emb_manifest, "Corpus manifest TSV")->required();
  embed->add_option("--checkpoint", emb_ckpt, "Checkpoint file")->required();
  embed->add_option("--out", emb_out, "Output embeddings (.csv or binary)")->required();
  embed->add_flag("--sliding", emb_sliding, "Sliding-window protocol (10 s clips)");
  embed->add_option("--window", emb_window, "Window length in seconds");
  embed->add_option("--step", emb_step, "Window step in seconds");
  embed->add_option("--long-seconds", emb_long, "Clip length for the sliding protocol");
  embed->add_option("--seed", emb_seed, "Random seed");
  emb_ff.attach(embed);

  // probe
  auto* probe = app.add_subcommand("probe", "Linear probes on frozen embeddings");
  std::string probe_emb, probe_labels, probe_out;
  std::vector<double> probe_grid;
  int probe_folds = 5;
  std::uint64_t probe_seed = 0;
  probe->add_option("--embeddings", probe_emb, "Embedding file (.csv or binary)")->required();
  probe->add_option("--labels", probe_labels, "Manifest TSV with task labels")->required();
  probe->add_option("--out", probe_out, "Report CSV")->required();
  probe->add_option("--grid", probe_grid, "Ridge penalty grid (default 1e-4..1e4)");
  probe->add_option("--folds", probe_folds, "Cross-validation folds");
  probe->add_option("--seed", probe_seed, "Random seed");

  // grid
  auto* grid = app.add_subcommand("grid", "Enumerate parameter grids / chains, or run a phase");
  std::string grid_kind, grid_corpus, grid_out;
  bool grid_chains = false, grid_repeat = false, grid_counts = false;
  int grid_phase = 0;
  PhaseOptions popt;
  grid->add_option("--kind", grid_kind, "Augmentation kind to enumerate");
  grid->add_flag("--chains", grid_chains, "List 1- and 2-step chains with best parameters");
  grid->add_flag("--allow-repeat", grid_repeat, "Allow a kind to repeat inside a 2-step chain");
  grid->add_flag("--counts", grid_counts, "Print grid sizes per kind");
  grid->add_option("--phase", grid_phase, "Run study phase 1, 2, or 3");
  grid->add_option("--corpus", grid_corpus, "Corpus manifest for --phase");
  grid->add_option("--out", grid_out, "Output directory for --phase");
  grid->add_option("--workers", popt.workers, "Concurrent experiments for --phase");
  grid->add_option("--steps", popt.train.steps, "Training steps per experiment");
  grid->add_option("--batch", popt.train.batch_size, "Batch size per experiment");
  grid->add_option("--checkpoint-every", popt.train.checkpoint_every, "Checkpoint interval");
  grid->add_option("--folds", popt.k_folds, "Probe cross-validation folds");
  grid->add_option("--max-experiments", popt.max_experiments,
                   "Stop after N completions (resume later)");
  grid->add_option("--seed", popt.seed, "Master seed");

  // report
  auto* report = app.add_subcommand("report", "Aggregate phase-2 results into the heatmap CSV");
  std::string report_dir, report_out;
  report->add_option("--experiments", report_dir, "Directory with experiments.tsv")->required();
  report->add_option("--out", report_out, "Heatmap CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      out << app.help();
      return kExitOk;
    }
    err << "usage error: " << e.what() << "\n";
    err << app.help();
    return kExitUsage;
  }

  try {
    if (synth->parsed())
      return cmd_synth(st, synth_out, synth_classes, synth_clips, synth_clip_s, synth_rate,
                       synth_seed);
    if (augment->parsed()) return cmd_augment(st, aug_in, aug_chain, aug_out, aug_seed, aug_ff);
    if (features->parsed()) return cmd_features(st, feat_in, feat_out, feat_ff);
    if (train_cmd->parsed())
      return cmd_train(st, train_manifest, train_chain, train_out, tc, train_clip_s, train_ff);
    if (embed->parsed())
      return cmd_embed(st, emb_manifest, emb_ckpt, emb_out, emb_sliding, emb_window, emb_step,
                       emb_long, emb_seed, emb_ff);
    if (probe->parsed())
      return cmd_probe(st, probe_emb, probe_labels, probe_out, probe_grid, probe_folds,
                       probe_seed);
    if (grid->parsed())
      return cmd_grid(st, grid_kind, grid_chains, grid_repeat, grid_counts, grid_phase,
                      grid_corpus, grid_out, popt);
    if (report->parsed()) return cmd_report(st, report_dir, report_out);
    err << "usage error: no subcommand\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace auscult::cli
