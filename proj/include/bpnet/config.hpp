#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "bpnet/error.hpp"

namespace bpnet {

enum class PoolingMode { kMean, kAttention };
enum class SimilarityMode { kTrilinear, kDot };

/// Which second-stage variant a model is trained and evaluated as.
enum class Variant {
  kBPNet,        // proposals from the score map, fused candidate/query matching
  kNoFusion,     // proposals from the score map, pooled V^q scored directly
  kAnchorBased,  // sliding windows, fused matching, no boundary loss
};

struct Config {
  // architecture
  int dim = 128;           // d
  int heads = 4;           // h
  int kernel = 7;          // k
  int conv_blocks = 4;
  int max_frames = 128;    // T_max, bounds positional embeddings
  bool share_encoder = true;
  bool positional = false;
  PoolingMode pooling = PoolingMode::kMean;
  SimilarityMode similarity = SimilarityMode::kTrilinear;
  Variant variant = Variant::kBPNet;
  bool slice_fused_features = false;  // pool candidates from V^q instead of V'

  // proposals
  int n_train = 128;
  int n_test = 8;
  bool nms = false;
  double nms_iou = 0.5;
  std::string window_lengths = "8,16,32";
  double window_overlap = 0.75;

  // optimisation
  double lambda = 1.0;
  double lr = 1e-4;
  int epochs = 100;
  int batch = 32;
  double dropout = 0.2;
  int patience = 10;
  double max_grad_norm = 0.0;
  std::uint64_t seed = 1;

  // synthetic data used by the ablate command
  int data_n_train = 64;
  int data_n_test = 256;
  int data_frames = 32;
  int data_words = 6;
  int data_video_dim = 16;
  int data_query_dim = 16;
};

inline std::string to_string(PoolingMode m) { return m == PoolingMode::kMean ? "mean" : "attention"; }
inline std::string to_string(SimilarityMode m) {
  return m == SimilarityMode::kTrilinear ? "trilinear" : "dot";
}
inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kBPNet: return "bpnet";
    case Variant::kNoFusion: return "no_fusion";
    case Variant::kAnchorBased: return "anchor_based";
  }
  return "bpnet";
}

namespace detail {

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T v{};
  is >> v;
  require(!is.fail() && is.eof(), ErrorCode::kConfig, "bad value for " + key + ": '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  fail(ErrorCode::kConfig, "bad boolean for " + key + ": '" + text + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Applies one key=value assignment; unknown keys are a config error.
inline void set_config_value(Config& c, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_value;
  static const std::map<std::string, std::function<void(Config&, const std::string&)>> setters = {
      {"d", [](Config& c, const std::string& v) { c.dim = parse_value<int>("d", v); }},
      {"h", [](Config& c, const std::string& v) { c.heads = parse_value<int>("h", v); }},
      {"k", [](Config& c, const std::string& v) { c.kernel = parse_value<int>("k", v); }},
      {"conv_blocks", [](Config& c, const std::string& v) { c.conv_blocks = parse_value<int>("conv_blocks", v); }},
      {"t_max", [](Config& c, const std::string& v) { c.max_frames = parse_value<int>("t_max", v); }},
      {"share_encoder", [](Config& c, const std::string& v) { c.share_encoder = parse_bool("share_encoder", v); }},
      {"positional", [](Config& c, const std::string& v) { c.positional = parse_bool("positional", v); }},
      {"pooling", [](Config& c, const std::string& v) {
         if (v == "mean") c.pooling = PoolingMode::kMean;
         else if (v == "attention") c.pooling = PoolingMode::kAttention;
         else fail(ErrorCode::kConfig, "pooling must be mean|attention");
       }},
      {"similarity", [](Config& c, const std::string& v) {
         if (v == "trilinear") c.similarity = SimilarityMode::kTrilinear;
         else if (v == "dot") c.similarity = SimilarityMode::kDot;
         else fail(ErrorCode::kConfig, "similarity must be trilinear|dot");
       }},
      {"variant", [](Config& c, const std::string& v) {
         if (v == "bpnet") c.variant = Variant::kBPNet;
         else if (v == "no_fusion") c.variant = Variant::kNoFusion;
         else if (v == "anchor_based") c.variant = Variant::kAnchorBased;
         else fail(ErrorCode::kConfig, "variant must be bpnet|no_fusion|anchor_based");
       }},
      {"slice_fused_features", [](Config& c, const std::string& v) { c.slice_fused_features = parse_bool("slice_fused_features", v); }},
      {"n_train", [](Config& c, const std::string& v) { c.n_train = parse_value<int>("n_train", v); }},
      {"n_test", [](Config& c, const std::string& v) { c.n_test = parse_value<int>("n_test", v); }},
      {"nms", [](Config& c, const std::string& v) { c.nms = parse_bool("nms", v); }},
      {"nms_iou", [](Config& c, const std::string& v) { c.nms_iou = parse_value<double>("nms_iou", v); }},
      {"window_lengths", [](Config& c, const std::string& v) { c.window_lengths = v; }},
      {"window_overlap", [](Config& c, const std::string& v) { c.window_overlap = parse_value<double>("window_overlap", v); }},
      {"lambda", [](Config& c, const std::string& v) { c.lambda = parse_value<double>("lambda", v); }},
      {"lr", [](Config& c, const std::string& v) { c.lr = parse_value<double>("lr", v); }},
      {"epochs", [](Config& c, const std::string& v) { c.epochs = parse_value<int>("epochs", v); }},
      {"batch", [](Config& c, const std::string& v) { c.batch = parse_value<int>("batch", v); }},
      {"dropout", [](Config& c, const std::string& v) { c.dropout = parse_value<double>("dropout", v); }},
      {"patience", [](Config& c, const std::string& v) { c.patience = parse_value<int>("patience", v); }},
      {"max_grad_norm", [](Config& c, const std::string& v) { c.max_grad_norm = parse_value<double>("max_grad_norm", v); }},
      {"seed", [](Config& c, const std::string& v) { c.seed = parse_value<std::uint64_t>("seed", v); }},
      {"data_n_train", [](Config& c, const std::string& v) { c.data_n_train = parse_value<int>("data_n_train", v); }},
      {"data_n_test", [](Config& c, const std::string& v) { c.data_n_test = parse_value<int>("data_n_test", v); }},
      {"data_t", [](Config& c, const std::string& v) { c.data_frames = parse_value<int>("data_t", v); }},
      {"data_m", [](Config& c, const std::string& v) { c.data_words = parse_value<int>("data_m", v); }},
      {"data_dv", [](Config& c, const std::string& v) { c.data_video_dim = parse_value<int>("data_dv", v); }},
      {"data_dq", [](Config& c, const std::string& v) { c.data_query_dim = parse_value<int>("data_dq", v); }},
  };
  auto it = setters.find(key);
  require(it != setters.end(), ErrorCode::kConfig, "unknown config key: " + key);
  it->second(c, value);
}

inline void validate(const Config& c) {
  require(c.dim >= 1 && c.heads >= 1 && c.dim % c.heads == 0, ErrorCode::kConfig,
          "d must be a positive multiple of h");
  require(c.kernel >= 1 && c.kernel % 2 == 1, ErrorCode::kConfig, "k must be odd");
  require(c.conv_blocks >= 0, ErrorCode::kConfig, "conv_blocks must be >= 0");
  require(c.max_frames >= 1, ErrorCode::kConfig, "t_max must be >= 1");
  require(c.n_train >= 1 && c.n_test >= 1, ErrorCode::kConfig, "proposal counts must be >= 1");
  require(c.lambda > 0.0, ErrorCode::kConfig, "lambda must be > 0");
  require(c.lr > 0.0, ErrorCode::kConfig, "lr must be > 0");
  require(c.epochs >= 1 && c.batch >= 1, ErrorCode::kConfig, "epochs and batch must be >= 1");
  require(c.dropout >= 0.0 && c.dropout < 1.0, ErrorCode::kConfig, "dropout must be in [0,1)");
  require(c.patience >= 1, ErrorCode::kConfig, "patience must be >= 1");
  require(c.window_overlap >= 0.0 && c.window_overlap < 1.0, ErrorCode::kConfig,
          "window_overlap must be in [0,1)");
}

/// Parses "key = value" lines; '#' starts a comment.
inline Config parse_config(const std::string& text, Config base = {}) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::kConfig,
            "line " + std::to_string(line_no) + ": expected key = value");
    set_config_value(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  validate(base);
  return base;
}

inline Config load_config(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::kConfig, "cannot open config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

inline std::string format_config(const Config& c) {
  std::ostringstream os;
  os.precision(17);
  os << "d = " << c.dim << "\nh = " << c.heads << "\nk = " << c.kernel
     << "\nconv_blocks = " << c.conv_blocks << "\nt_max = " << c.max_frames
     << "\nshare_encoder = " << (c.share_encoder ? "true" : "false")
     << "\npositional = " << (c.positional ? "true" : "false")
     << "\npooling = " << to_string(c.pooling) << "\nsimilarity = " << to_string(c.similarity)
     << "\nvariant = " << to_string(c.variant)
     << "\nslice_fused_features = " << (c.slice_fused_features ? "true" : "false")
     << "\nn_train = " << c.n_train << "\nn_test = " << c.n_test
     << "\nnms = " << (c.nms ? "true" : "false") << "\nnms_iou = " << c.nms_iou
     << "\nwindow_lengths = " << c.window_lengths << "\nwindow_overlap = " << c.window_overlap
     << "\nlambda = " << c.lambda << "\nlr = " << c.lr << "\nepochs = " << c.epochs
     << "\nbatch = " << c.batch << "\ndropout = " << c.dropout << "\npatience = " << c.patience
     << "\nmax_grad_norm = " << c.max_grad_norm << "\nseed = " << c.seed
     << "\ndata_n_train = " << c.data_n_train << "\ndata_n_test = " << c.data_n_test
     << "\ndata_t = " << c.data_frames << "\ndata_m = " << c.data_words
     << "\ndata_dv = " << c.data_video_dim << "\ndata_dq = " << c.data_query_dim << '\n';
  return os.str();
}

}  // namespace bpnet
