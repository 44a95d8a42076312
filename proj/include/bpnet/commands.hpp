#pragma once

// Subcommand bodies for the bpnet executable. Each takes parsed options and
// an output stream; failures surface as bpnet::Error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bpnet/checkpoint.hpp"
#include "bpnet/training.hpp"

namespace bpnet {

/// Joins a relative path onto BPNET_DATA_DIR when that variable is set.
inline std::string resolve_data_path(const std::string& path) {
  const char* root = std::getenv("BPNET_DATA_DIR");
  if (root == nullptr || *root == '\0' || path.empty()) return path;
  const std::filesystem::path p(path);
  return p.is_absolute() ? path : (std::filesystem::path(root) / p).string();
}

/// --data default: BPNET_DATA_DIR/manifest.tsv.
inline std::string default_manifest() {
  const char* root = std::getenv("BPNET_DATA_DIR");
  require(root != nullptr && *root != '\0', ErrorCode::kArgument,
          "no --data given and BPNET_DATA_DIR is not set");
  return (std::filesystem::path(root) / "manifest.tsv").string();
}

inline std::vector<Sample> load_samples(const std::string& manifest, const std::string& embeddings) {
  if (embeddings.empty()) return load_manifest(resolve_data_path(manifest));
  const EmbeddingTable table = EmbeddingTable::load(embeddings);
  return load_manifest(resolve_data_path(manifest), &table);
}

inline Config load_config_or_default(const std::string& path) {
  return path.empty() ? Config{} : load_config(path);
}

// ---------------------------------------------------------------------------

struct GenDataOptions {
  std::string out;  // directory; defaults to BPNET_DATA_DIR
  SynthesisOptions synthesis;
};

inline void cmd_gen_data(const GenDataOptions& o, std::ostream& out) {
  std::string dir = o.out;
  if (dir.empty()) {
    const char* root = std::getenv("BPNET_DATA_DIR");
    require(root != nullptr && *root != '\0', ErrorCode::kArgument,
            "gen-data needs --out or BPNET_DATA_DIR");
    dir = root;
  }
  const SyntheticDataset ds = synthesize_dataset_detailed(o.synthesis);
  const std::string manifest = write_manifest(dir, ds.samples);

  double len_frames = 0.0, len_frac = 0.0, start_frac = 0.0;
  int distractors = 0;
  for (std::size_t s = 0; s < ds.samples.size(); ++s) {
    const auto& gt = ds.truth[s].gt_frames;
    const double t_len = static_cast<double>(ds.samples[s].video.length());
    len_frames += gt.end - gt.start + 1.0;
    len_frac += (gt.end - gt.start + 1.0) / t_len;
    start_frac += gt.start / t_len;
    distractors += ds.truth[s].distractor.has_value();
  }
  const double n = static_cast<double>(ds.samples.size());
  out << "wrote " << ds.samples.size() << " samples to " << manifest << '\n'
      << std::fixed << std::setprecision(3) << "mean planted length: " << len_frames / n
      << " frames (" << len_frac / n << " of T)\n"
      << "mean planted start: " << start_frac / n << " of T\n"
      << "samples with a distractor: " << distractors << '\n';
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string config;
  std::string data;
  std::string validation;
  std::string embeddings;
  std::string out = "checkpoint";
  std::optional<std::uint64_t> seed;
};

inline TrainResult cmd_train(const TrainOptions& o, std::ostream& out) {
  Config cfg = load_config_or_default(o.config);
  if (o.seed) cfg.seed = *o.seed;
  const auto train_set = load_samples(o.data.empty() ? default_manifest() : o.data, o.embeddings);
  std::optional<std::vector<Sample>> val;
  if (!o.validation.empty()) val = load_samples(o.validation, o.embeddings);

  Model model(cfg, train_set.front().video.frames.cols(), train_set.front().query.words.cols());
  out << "training " << to_string(cfg.variant) << " on " << train_set.size() << " samples, "
      << model.parameters().scalar_count() << " parameters\n";
  const TrainResult r = train(model, train_set, val ? &*val : nullptr, &out);
  save_checkpoint(o.out, model);
  std::ofstream history(std::filesystem::path(o.out) / "history.tsv");
  require(static_cast<bool>(history), ErrorCode::kIo, "cannot write history in " + o.out);
  write_history(history, r.history);
  out << "best epoch " << r.best_epoch << " val mIoU " << std::fixed << std::setprecision(2)
      << r.best_val_miou << (r.stopped_early ? " (early stop)" : "") << "\ncheckpoint written to "
      << o.out << '\n';
  return r;
}

// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string checkpoint = "checkpoint";
  std::string data;
  std::string embeddings;
  std::optional<std::string> mode;
  std::optional<int> n_proposals;
  std::string out;  // optional candidate records file
  bool csv = false;
};

/// One line per ranked candidate: video_id rank i j proposal_score match_score
/// ("-" when the mode has no matching stage).
inline void write_candidates(std::ostream& os, const std::vector<Sample>& samples,
                             const std::vector<std::vector<Candidate>>& predictions) {
  os << "video_id\trank\ti\tj\tproposal_score\tmatch_score\n" << std::setprecision(9);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    for (std::size_t r = 0; r < predictions[s].size(); ++r) {
      const Candidate& c = predictions[s][r];
      os << samples[s].video.video_id << '\t' << r + 1 << '\t' << c.segment.first() << '\t'
         << c.segment.last() << '\t' << c.proposal_score << '\t';
      if (c.match_score) {
        os << *c.match_score;
      } else {
        os << '-';
      }
      os << '\n';
    }
  }
}

inline EvalReport cmd_eval(const EvalOptions& o, std::ostream& out) {
  const Model model = load_checkpoint(o.checkpoint);
  const auto samples = load_samples(o.data.empty() ? default_manifest() : o.data, o.embeddings);
  const InferenceMode mode = o.mode ? parse_mode(*o.mode) : default_mode(model.config());
  if (o.n_proposals) require(*o.n_proposals >= 1, ErrorCode::kArgument, "--n-proposals must be >= 1");
  const Evaluation ev = evaluate(model, samples, mode, o.n_proposals);
  if (o.csv) {
    out << kReportCsvHeader << '\n' << report_csv_line(to_string(mode), ev.report) << '\n';
  } else {
    print_report_table(out, {{to_string(mode), ev.report}});
  }
  if (!o.out.empty()) {
    std::ofstream os(o.out);
    require(static_cast<bool>(os), ErrorCode::kIo, "cannot write " + o.out);
    write_candidates(os, samples, ev.predictions);
  }
  return ev.report;
}

// ---------------------------------------------------------------------------

/// Reports of the four comparators evaluated on one test set. The anchor-free
/// row reuses the trained BPNet backbone.
struct AblationResult {
  EvalReport bpnet;
  EvalReport anchor_free;
  EvalReport anchor_based;
  EvalReport no_fusion;

  std::vector<std::pair<std::string, EvalReport>> rows() const {
    return {{"anchor-free (stage one)", anchor_free},
            {"anchor-based", anchor_based},
            {"BPNet w/o vlf", no_fusion},
            {"BPNet", bpnet}};
  }
};

inline AblationResult run_ablation(const Config& base, const std::vector<Sample>& train_set,
                                   const std::vector<Sample>& validation,
                                   const std::vector<Sample>& test_set, std::ostream* log = nullptr) {
  const Index dv = train_set.front().video.frames.cols();
  const Index dq = train_set.front().query.words.cols();
  auto fit = [&](Variant v) {
    Config c = base;
    c.variant = v;
    Model m(c, dv, dq);
    if (log != nullptr) *log << "# training " << to_string(v) << '\n';
    train(m, train_set, &validation, log);
    return m;
  };
  AblationResult r;
  {
    const Model m = fit(Variant::kBPNet);
    r.bpnet = evaluate(m, test_set, InferenceMode::kBPNet).report;
    r.anchor_free = evaluate(m, test_set, InferenceMode::kAnchorFree).report;
  }
  r.anchor_based = evaluate(fit(Variant::kAnchorBased), test_set, InferenceMode::kAnchorBased).report;
  r.no_fusion = evaluate(fit(Variant::kNoFusion), test_set, InferenceMode::kBPNet).report;
  return r;
}

/// Synthetic train / validation / test splits sharing one world; the config's
/// data_* keys set their sizes and shapes.
struct AblationData {
  std::vector<Sample> train, validation, test;
};

inline AblationData make_ablation_data(const Config& c, std::uint64_t seed) {
  SynthesisOptions o;
  o.frames = c.data_frames;
  o.words = c.data_words;
  o.video_dim = c.data_video_dim;
  o.query_dim = c.data_query_dim;
  AblationData d;
  o.n = c.data_n_train;
  o.seed = detail::splitmix64(seed ^ 0x7261696eull);
  d.train = synthesize_dataset(o);
  o.n = std::max(1, c.data_n_train / 2);
  o.seed = detail::splitmix64(seed ^ 0x76616cull);
  d.validation = synthesize_dataset(o);
  o.n = c.data_n_test;
  o.seed = detail::splitmix64(seed ^ 0x74657374ull);
  d.test = synthesize_dataset(o);
  return d;
}

struct AblateOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;  // optional CSV
  bool verbose = false;
};

inline AblationResult cmd_ablate(const AblateOptions& o, std::ostream& out) {
  Config cfg = load_config_or_default(o.config);
  if (o.seed) cfg.seed = *o.seed;
  const AblationData data = make_ablation_data(cfg, cfg.seed);
  out << "synthetic splits: train " << data.train.size() << ", validation " << data.validation.size()
      << ", test " << data.test.size() << " (T=" << cfg.data_frames << ", seed " << cfg.seed << ")\n";
  const AblationResult r =
      run_ablation(cfg, data.train, data.validation, data.test, o.verbose ? &out : nullptr);
  print_report_table(out, r.rows());
  if (!o.out.empty()) {
    std::ofstream os(o.out);
    require(static_cast<bool>(os), ErrorCode::kIo, "cannot write " + o.out);
    os << kReportCsvHeader << '\n';
    for (const auto& [name, rep] : r.rows()) os << report_csv_line(name, rep) << '\n';
  }
  return r;
}

// ---------------------------------------------------------------------------

struct WindowsOptions {
  Index frames = 256;
  std::string lengths = "128,64,32,16,8";
  double overlap = 0.75;
};

inline Index cmd_windows(const WindowsOptions& o, std::ostream& out) {
  require(o.frames >= 1, ErrorCode::kArgument, "--t must be >= 1");
  const auto lengths = parse_lengths(o.lengths);
  const auto all = sliding_windows(o.frames, lengths, o.overlap);
  out << "T=" << o.frames << " overlap=" << o.overlap << '\n'
      << std::setw(8) << "length" << std::setw(8) << "stride" << std::setw(10) << "windows" << '\n';
  for (const Index len : lengths) {
    out << std::setw(8) << len << std::setw(8) << window_stride(len, o.overlap) << std::setw(10)
        << window_count(o.frames, len, o.overlap) << '\n';
  }
  out << std::setw(8) << "total" << std::setw(8) << "" << std::setw(10) << all.size() << '\n';
  return static_cast<Index>(all.size());
}

}  // namespace bpnet
