#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "bpnet/array_io.hpp"
#include "bpnet/error.hpp"

namespace bpnet {

enum class TimeUnit { kFrames, kSeconds };

/// Closed interval [start, end]. In frame units both ends are integral
/// indices and the span is inclusive.
struct TemporalSegment {
  double start = 0.0;
  double end = 0.0;
  TimeUnit unit = TimeUnit::kFrames;

  static TemporalSegment frames(Eigen::Index i, Eigen::Index j) {
    return {static_cast<double>(i), static_cast<double>(j), TimeUnit::kFrames};
  }
  static TemporalSegment seconds(double s, double e) { return {s, e, TimeUnit::kSeconds}; }

  Eigen::Index first() const { return static_cast<Eigen::Index>(start); }
  Eigen::Index last() const { return static_cast<Eigen::Index>(end); }

  bool operator==(const TemporalSegment&) const = default;
};

struct VideoFeatures {
  FloatMatrix frames;  // T x d_v
  double duration_s = 0.0;
  std::string video_id;

  Eigen::Index length() const { return frames.rows(); }
};

struct QueryFeatures {
  FloatMatrix words;  // M x d_q
  std::string query_id;
  std::optional<std::string> raw_text;
};

struct Sample {
  VideoFeatures video;
  QueryFeatures query;
  TemporalSegment gt;  // seconds
};

struct BoundaryLabels {
  Eigen::RowVectorXd y_start;
  Eigen::RowVectorXd y_end;
  Eigen::Index start_index = 0;
  Eigen::Index end_index = 0;
};

// ---------------------------------------------------------------------------
// Time <-> index

inline Eigen::Index time_to_index(double t, double duration_s, Eigen::Index frame_count) {
  require(frame_count >= 1, ErrorCode::kDomain, "time_to_index: frame count must be >= 1");
  require(duration_s > 0.0, ErrorCode::kDomain, "time_to_index: duration must be > 0");
  require(t >= 0.0 && t <= duration_s, ErrorCode::kDomain,
          "time_to_index: t=" + std::to_string(t) + " outside [0, " +
              std::to_string(duration_s) + "]");
  const double scaled = t / duration_s * static_cast<double>(frame_count - 1);
  const auto idx = static_cast<Eigen::Index>(std::llround(scaled));
  return std::clamp<Eigen::Index>(idx, 0, frame_count - 1);
}

inline double index_to_time(Eigen::Index index, double duration_s, Eigen::Index frame_count) {
  if (frame_count <= 1) return 0.0;
  return static_cast<double>(index) / static_cast<double>(frame_count - 1) * duration_s;
}

inline TemporalSegment to_seconds(const TemporalSegment& frames, double duration_s,
                                  Eigen::Index frame_count) {
  return TemporalSegment::seconds(index_to_time(frames.first(), duration_s, frame_count),
                                  index_to_time(frames.last(), duration_s, frame_count));
}

inline TemporalSegment to_frames(const TemporalSegment& seconds, double duration_s,
                                 Eigen::Index frame_count) {
  const auto i = time_to_index(seconds.start, duration_s, frame_count);
  const auto j = std::max(i, time_to_index(seconds.end, duration_s, frame_count));
  return TemporalSegment::frames(i, j);
}

inline BoundaryLabels make_boundary_labels(const TemporalSegment& gt, double duration_s,
                                           Eigen::Index frame_count) {
  require(gt.unit == TimeUnit::kSeconds, ErrorCode::kArgument,
          "make_boundary_labels: ground truth must be in seconds");
  const TemporalSegment span = to_frames(gt, duration_s, frame_count);
  BoundaryLabels labels;
  labels.start_index = span.first();
  labels.end_index = span.last();
  labels.y_start = Eigen::RowVectorXd::Zero(frame_count);
  labels.y_end = Eigen::RowVectorXd::Zero(frame_count);
  labels.y_start(labels.start_index) = 1.0;
  labels.y_end(labels.end_index) = 1.0;
  return labels;
}

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthesisOptions {
  int n = 64;
  Eigen::Index frames = 32;      // T
  Eigen::Index words = 6;        // M
  Eigen::Index video_dim = 16;   // d_v
  Eigen::Index query_dim = 16;   // d_q
  std::uint64_t seed = 7;

  // Shared "world" (concept bank, boundary marker); identical across any
  // two datasets generated with the same world_seed.
  std::uint64_t world_seed = 20210101;
  int concepts = 8;
  int filler_words = 32;

  double signal = 1.5;         // alpha: bias along u_q inside the ground truth
  double boundary_signal = 2.0;  // beta: marker on boundary frames
  double noise = 1.0;          // per-dimension std of background frames
  double word_noise = 0.3;
  double min_duration_s = 20.0;
  double max_duration_s = 60.0;
  bool distractor = true;
};

/// Concept directions and vocabulary shared by all samples of a world.
struct SyntheticWorld {
  Eigen::MatrixXd concept_directions;  // K x d_v, unit rows
  Eigen::MatrixXd concept_words;       // K x d_q
  Eigen::MatrixXd filler_words;        // F x d_q
  Eigen::RowVectorXd boundary_direction;  // 1 x d_v, unit
};

/// What the generator planted in one sample.
struct PlantedTruth {
  int concept_id = 0;
  Eigen::RowVectorXd direction;  // u_q
  TemporalSegment gt_frames;
  std::optional<TemporalSegment> distractor;
};

struct SyntheticDataset {
  SyntheticWorld world;
  std::vector<Sample> samples;
  std::vector<PlantedTruth> truth;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline Eigen::RowVectorXd random_unit(Eigen::Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::RowVectorXd v(dim);
  do {
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = normal(rng);
  } while (v.norm() < 1e-12);
  return v / v.norm();
}

inline Eigen::Index uniform_index(Eigen::Index lo, Eigen::Index hi, std::mt19937_64& rng) {
  std::uniform_int_distribution<Eigen::Index> dist(lo, hi);
  return dist(rng);
}

}  // namespace detail

inline SyntheticWorld make_world(const SynthesisOptions& opt) {
  std::mt19937_64 rng(detail::splitmix64(opt.world_seed));
  SyntheticWorld w;
  w.concept_directions.resize(opt.concepts, opt.video_dim);
  w.concept_words.resize(opt.concepts, opt.query_dim);
  w.filler_words.resize(opt.filler_words, opt.query_dim);
  for (int k = 0; k < opt.concepts; ++k) {
    w.concept_directions.row(k) = detail::random_unit(opt.video_dim, rng);
  }
  for (int k = 0; k < opt.concepts; ++k) {
    w.concept_words.row(k) = detail::random_unit(opt.query_dim, rng) * 2.0;
  }
  for (int k = 0; k < opt.filler_words; ++k) {
    w.filler_words.row(k) = detail::random_unit(opt.query_dim, rng);
  }
  w.boundary_direction = detail::random_unit(opt.video_dim, rng);
  return w;
}

/// Generates samples whose ground-truth interior carries +alpha*u_q, whose
/// ground-truth boundary frames also carry a query-independent marker, and
/// (optionally) a distractor span elsewhere that carries the marker on its
/// boundary frames but no interior signal.
inline SyntheticDataset synthesize_dataset_detailed(const SynthesisOptions& opt) {
  require(opt.n > 0, ErrorCode::kArgument, "synthesize_dataset: n must be > 0");
  require(opt.frames >= 1 && opt.words >= 1 && opt.video_dim >= 1 && opt.query_dim >= 1,
          ErrorCode::kArgument, "synthesize_dataset: all dimensions must be >= 1");
  require(opt.concepts >= 1 && opt.filler_words >= 1, ErrorCode::kArgument,
          "synthesize_dataset: need at least one concept and one filler word");

  SyntheticDataset out;
  out.world = make_world(opt);
  const Eigen::Index T = opt.frames;
  const Eigen::Index min_len = std::max<Eigen::Index>(1, T / 8);
  const Eigen::Index max_len = std::max(min_len, T / 2);

  for (int s = 0; s < opt.n; ++s) {
    std::mt19937_64 rng(detail::splitmix64(opt.seed * 0x100000001b3ull + static_cast<std::uint64_t>(s)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    PlantedTruth truth;
    const double duration = opt.min_duration_s + (opt.max_duration_s - opt.min_duration_s) * unit(rng);
    truth.concept_id = static_cast<int>(detail::uniform_index(0, opt.concepts - 1, rng));
    truth.direction = out.world.concept_directions.row(truth.concept_id);

    const Eigen::Index len = std::min(T - 1, detail::uniform_index(min_len, max_len, rng));
    const Eigen::Index gt_start = detail::uniform_index(0, T - 1 - len, rng);
    const Eigen::Index gt_end = gt_start + len;
    truth.gt_frames = TemporalSegment::frames(gt_start, gt_end);

    if (opt.distractor) {
      // Free regions keep one frame of gap to the ground truth.
      std::vector<std::pair<Eigen::Index, Eigen::Index>> regions;
      if (gt_start - 2 >= 1) regions.emplace_back(0, gt_start - 2);
      if (T - 1 - (gt_end + 2) >= 1) regions.emplace_back(gt_end + 2, T - 1);
      if (!regions.empty()) {
        const auto [lo, hi] = regions[detail::uniform_index(0, regions.size() - 1, rng)];
        const Eigen::Index d_len = detail::uniform_index(1, std::min(hi - lo, max_len), rng);
        const Eigen::Index d_start = detail::uniform_index(lo, hi - d_len, rng);
        truth.distractor = TemporalSegment::frames(d_start, d_start + d_len);
      }
    }

    // The boundary marker is orthogonalised against u_q so the planted
    // projection onto u_q is exactly alpha inside and zero outside.
    Eigen::RowVectorXd marker = out.world.boundary_direction;
    marker -= marker.dot(truth.direction) * truth.direction;
    marker = marker.norm() > 1e-9 ? Eigen::RowVectorXd(marker / marker.norm())
                                  : Eigen::RowVectorXd::Zero(opt.video_dim);

    Eigen::MatrixXd frames(T, opt.video_dim);
    for (Eigen::Index i = 0; i < frames.size(); ++i) frames.data()[i] = opt.noise * normal(rng);
    for (Eigen::Index t = gt_start; t <= gt_end; ++t) frames.row(t) += opt.signal * truth.direction;
    frames.row(gt_start) += opt.boundary_signal * marker;
    if (gt_end != gt_start) frames.row(gt_end) += opt.boundary_signal * marker;
    if (truth.distractor) {
      frames.row(truth.distractor->first()) += opt.boundary_signal * marker;
      frames.row(truth.distractor->last()) += opt.boundary_signal * marker;
    }

    // Query: at least one concept word, the rest fillers, all with noise.
    Eigen::MatrixXd words(opt.words, opt.query_dim);
    const Eigen::Index concept_count = std::max<Eigen::Index>(1, opt.words / 3);
    std::vector<Eigen::Index> order(opt.words);
    for (Eigen::Index m = 0; m < opt.words; ++m) order[m] = m;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::string> tokens(opt.words);
    for (Eigen::Index r = 0; r < opt.words; ++r) {
      const Eigen::Index m = order[r];
      if (r < concept_count) {
        words.row(m) = out.world.concept_words.row(truth.concept_id);
        tokens[m] = "concept" + std::to_string(truth.concept_id);
      } else {
        const auto f = detail::uniform_index(0, opt.filler_words - 1, rng);
        words.row(m) = out.world.filler_words.row(f);
        tokens[m] = "filler" + std::to_string(f);
      }
      for (Eigen::Index c = 0; c < opt.query_dim; ++c) words(m, c) += opt.word_noise * normal(rng);
    }

    Sample sample;
    std::ostringstream id;
    id << "syn" << std::setw(5) << std::setfill('0') << s;
    sample.video.video_id = id.str();
    sample.video.duration_s = duration;
    sample.video.frames = frames.cast<float>();
    sample.query.query_id = "q" + id.str().substr(3);
    sample.query.words = words.cast<float>();
    std::string text;
    for (const auto& tok : tokens) text += (text.empty() ? "" : " ") + tok;
    sample.query.raw_text = text;
    sample.gt = TemporalSegment::seconds(index_to_time(gt_start, duration, T),
                                         index_to_time(gt_end, duration, T));
    out.samples.push_back(std::move(sample));
    out.truth.push_back(std::move(truth));
  }
  return out;
}

inline std::vector<Sample> synthesize_dataset(const SynthesisOptions& opt) {
  return synthesize_dataset_detailed(opt).samples;
}

// ---------------------------------------------------------------------------
// Manifest I/O

/// Whitespace-token lookup table in GloVe text format ("word v1 v2 ...").
class EmbeddingTable {
 public:
  static EmbeddingTable load(const std::string& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorCode::kIo, "cannot open embedding table: " + path);
    EmbeddingTable table;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string word;
      ss >> word;
      std::vector<float> values;
      float v = 0.0f;
      while (ss >> v) values.push_back(v);
      if (table.dim_ == 0) table.dim_ = static_cast<Eigen::Index>(values.size());
      require(!values.empty() && static_cast<Eigen::Index>(values.size()) == table.dim_,
              ErrorCode::kIo,
              path + ":" + std::to_string(line_no) + ": inconsistent embedding width");
      table.vectors_[word] = std::move(values);
    }
    return table;
  }

  void insert(const std::string& word, std::vector<float> values) {
    if (dim_ == 0) dim_ = static_cast<Eigen::Index>(values.size());
    require(static_cast<Eigen::Index>(values.size()) == dim_, ErrorCode::kArgument,
            "embedding width mismatch for " + word);
    vectors_[word] = std::move(values);
  }

  Eigen::Index dim() const { return dim_; }

  /// Embeds a whitespace-tokenised sentence; unknown words are an error.
  FloatMatrix embed(const std::string& text) const {
    std::istringstream ss(text);
    std::vector<std::string> tokens;
    for (std::string tok; ss >> tok;) tokens.push_back(tok);
    require(!tokens.empty(), ErrorCode::kArgument, "empty query text");
    FloatMatrix out(static_cast<Eigen::Index>(tokens.size()), dim_);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      auto it = vectors_.find(tokens[i]);
      require(it != vectors_.end(), ErrorCode::kArgument, "unknown word '" + tokens[i] + "'");
      for (Eigen::Index c = 0; c < dim_; ++c) out(static_cast<Eigen::Index>(i), c) = it->second[c];
    }
    return out;
  }

 private:
  std::unordered_map<std::string, std::vector<float>> vectors_;
  Eigen::Index dim_ = 0;
};

inline constexpr const char* kManifestHeader =
    "video_id\tfeature_file\tduration_s\tT\tquery\tgt_start_s\tgt_end_s";

namespace detail {

inline std::string format_exact(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline bool all_finite(const FloatMatrix& m) { return m.allFinite(); }

}  // namespace detail

/// Writes feature/query arrays under dir and a manifest.tsv that references
/// them by relative path. Returns the manifest path.
inline std::string write_manifest(const std::string& dir, const std::vector<Sample>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "features");
  fs::create_directories(fs::path(dir) / "queries");
  const std::string manifest = (fs::path(dir) / "manifest.tsv").string();
  std::ofstream os(manifest);
  require(static_cast<bool>(os), ErrorCode::kIo, "cannot write manifest: " + manifest);
  os << kManifestHeader << '\n';
  for (const Sample& s : samples) {
    const std::string feature_rel = "features/" + s.video.video_id + ".bin";
    const std::string query_rel = "queries/" + s.query.query_id + ".bin";
    save_array((fs::path(dir) / feature_rel).string(), s.video.frames);
    save_array((fs::path(dir) / query_rel).string(), s.query.words);
    os << s.video.video_id << '\t' << feature_rel << '\t' << detail::format_exact(s.video.duration_s)
       << '\t' << s.video.frames.rows() << '\t' << "file:" << query_rel << '\t'
       << detail::format_exact(s.gt.start) << '\t' << detail::format_exact(s.gt.end) << '\n';
  }
  require(static_cast<bool>(os), ErrorCode::kIo, "write failed: " + manifest);
  return manifest;
}

/// Parses a manifest. Relative paths resolve against the manifest's
/// directory. Query fields are "file:<path>" (binary array) or
/// "text:<sentence>" (requires an embedding table).
inline std::vector<Sample> load_manifest(const std::string& path,
                                         const EmbeddingTable* table = nullptr) {
  namespace fs = std::filesystem;
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::kManifest, "cannot open manifest: " + path);
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path fp(p);
    return (fp.is_absolute() ? fp : base / fp).string();
  };

  std::vector<Sample> samples;
  std::string line;
  int line_no = 0;
  Eigen::Index video_dim = -1;
  Eigen::Index query_dim = -1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line == kManifestHeader) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    const std::string where = path + ":" + std::to_string(line_no) +
                              (fields.empty() ? std::string() : " (" + fields[0] + ")");
    require(fields.size() == 7, ErrorCode::kManifest,
            where + ": expected 7 tab-separated fields, got " + std::to_string(fields.size()));
    try {
      Sample s;
      s.video.video_id = fields[0];
      s.video.duration_s = std::stod(fields[2]);
      const long declared_t = std::stol(fields[3]);
      s.gt = TemporalSegment::seconds(std::stod(fields[5]), std::stod(fields[6]));
      require(s.video.duration_s > 0.0, ErrorCode::kManifest, "duration must be > 0");
      require(s.gt.start >= 0.0 && s.gt.start <= s.gt.end, ErrorCode::kManifest,
              "ground truth must satisfy 0 <= start <= end");
      require(s.gt.end <= s.video.duration_s, ErrorCode::kManifest,
              "ground truth end exceeds duration");

      s.video.frames = load_array(resolve(fields[1]));
      require(s.video.frames.rows() == declared_t, ErrorCode::kManifest,
              "feature file has " + std::to_string(s.video.frames.rows()) +
                  " rows but T=" + std::to_string(declared_t));
      require(s.video.frames.rows() >= 1, ErrorCode::kManifest, "empty feature file");
      require(detail::all_finite(s.video.frames), ErrorCode::kManifest, "non-finite features");

      const std::string& q = fields[4];
      if (q.rfind("file:", 0) == 0) {
        s.query.words = load_array(resolve(q.substr(5)));
      } else if (q.rfind("text:", 0) == 0) {
        require(table != nullptr, ErrorCode::kManifest, "text query needs an embedding table");
        s.query.raw_text = q.substr(5);
        s.query.words = table->embed(q.substr(5));
      } else {
        fail(ErrorCode::kManifest, "query field must start with file: or text:");
      }
      require(s.query.words.rows() >= 1, ErrorCode::kManifest, "empty query");
      require(detail::all_finite(s.query.words), ErrorCode::kManifest, "non-finite query features");
      s.query.query_id = s.video.video_id + "#" + std::to_string(line_no);

      if (video_dim < 0) video_dim = s.video.frames.cols();
      if (query_dim < 0) query_dim = s.query.words.cols();
      require(s.video.frames.cols() == video_dim, ErrorCode::kManifest,
              "feature dimension " + std::to_string(s.video.frames.cols()) + " != " +
                  std::to_string(video_dim));
      require(s.query.words.cols() == query_dim, ErrorCode::kManifest,
              "query dimension " + std::to_string(s.query.words.cols()) + " != " +
                  std::to_string(query_dim));
      samples.push_back(std::move(s));
    } catch (const Error& e) {
      fail(ErrorCode::kManifest, where + ": " + e.what());
    } catch (const std::exception& e) {
      fail(ErrorCode::kManifest, where + ": malformed field (" + e.what() + ")");
    }
  }
  require(!samples.empty(), ErrorCode::kManifest, path + ": no samples");
  return samples;
}

}  // namespace bpnet
