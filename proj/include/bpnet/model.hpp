#pragma once

#include <optional>
#include <random>
#include <vector>

#include "bpnet/baselines.hpp"
#include "bpnet/config.hpp"
#include "bpnet/cross_attention.hpp"
#include "bpnet/data.hpp"
#include "bpnet/encoder.hpp"
#include "bpnet/matcher.hpp"
#include "bpnet/parameters.hpp"
#include "bpnet/proposal.hpp"

namespace bpnet {

enum class InferenceMode { kBPNet, kAnchorFree, kAnchorBased };

inline std::string to_string(InferenceMode m) {
  switch (m) {
    case InferenceMode::kBPNet: return "bpnet";
    case InferenceMode::kAnchorFree: return "anchor_free";
    case InferenceMode::kAnchorBased: return "anchor_based";
  }
  return "bpnet";
}

inline InferenceMode parse_mode(const std::string& s) {
  if (s == "bpnet") return InferenceMode::kBPNet;
  if (s == "anchor_free") return InferenceMode::kAnchorFree;
  if (s == "anchor_based") return InferenceMode::kAnchorBased;
  fail(ErrorCode::kArgument, "mode must be bpnet|anchor_free|anchor_based, got '" + s + "'");
}

/// Stage-one outputs for one sample.
struct StageOne {
  ad::Var fused;  // V^q
  BoundaryLogits logits;
  ScoreMap map;
};

/// Full network: shared encoder, visual-language attention, boundary
/// proposer and matcher. Parameter layout depends on the config variant.
class Model {
 public:
  Model(Config config, Index video_dim, Index query_dim)
      : config_(std::move(config)), video_dim_(video_dim), query_dim_(query_dim) {
    validate(config_);
    require(video_dim >= 1 && query_dim >= 1, ErrorCode::kArgument, "model: input dims must be >= 1");
    std::mt19937_64 rng(config_.seed);
    EncoderShape shape;
    shape.video_dim = video_dim;
    shape.query_dim = query_dim;
    shape.dim = config_.dim;
    shape.heads = config_.heads;
    shape.kernel = config_.kernel;
    shape.conv_blocks = config_.conv_blocks;
    shape.share = config_.share_encoder;
    shape.positional = config_.positional;
    shape.max_frames = config_.max_frames;
    encoder_ = make_encoder_params(params_, shape, rng);
    cross_ = make_cross_attention_params(params_, config_.dim, config_.similarity, rng);
    proposal_ = make_proposal_params(params_, config_.dim, rng);
    matcher_ = make_matcher_params(params_, config_.dim, config_.pooling,
                                   config_.variant != Variant::kNoFusion, rng);
    window_lengths_ = parse_lengths(config_.window_lengths);
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const Config& config() const { return config_; }
  Index video_dim() const { return video_dim_; }
  Index query_dim() const { return query_dim_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const EncoderParams& encoder_params() const { return encoder_; }
  const CrossAttentionParams& cross_params() const { return cross_; }
  const ProposalParams& proposal_params() const { return proposal_; }
  const MatcherParams& matcher_params() const { return matcher_; }

  EncodedPair encode(const Sample& s, const ForwardContext& ctx = {}) const {
    require(s.video.frames.cols() == video_dim_ && s.query.words.cols() == query_dim_,
            ErrorCode::kShape,
            "sample " + s.video.video_id + ": feature dims do not match the model");
    return bpnet::encode(ad::constant(s.video.frames.cast<double>()),
                         ad::constant(s.query.words.cast<double>()), encoder_, ctx);
  }

  StageOne stage_one(const EncodedPair& enc) const {
    StageOne out;
    out.fused = query_guided_features(enc.video, enc.query, cross_);
    out.logits = boundary_logits(out.fused, proposal_);
    out.map = joint_score_map(out.logits.start.value().row(0), out.logits.end.value().row(0));
    return out;
  }

  /// Frame features the matcher slices candidates from.
  bool pools_fused_features() const {
    return config_.variant == Variant::kNoFusion || config_.slice_fused_features;
  }

  /// N x 1 matching scores for spans.
  ad::Var score_spans(const EncodedPair& enc, const StageOne* stage,
                      const std::vector<TemporalSegment>& spans) const {
    if (pools_fused_features()) {
      require(stage != nullptr, ErrorCode::kArgument, "score_spans: V^q pooling needs stage one");
      return match_scores(stage->fused, enc.query, spans, matcher_);
    }
    return match_scores(enc.video, enc.query, spans, matcher_);
  }

  std::vector<Candidate> propose(const ScoreMap& map, int n) const {
    return top_n_candidates(map, n, config_.nms ? std::optional<double>(config_.nms_iou)
                                                : std::nullopt);
  }

  std::vector<TemporalSegment> windows(Index frames) const {
    return sliding_windows(frames, window_lengths_, config_.window_overlap);
  }

  /// Ranked frame-unit predictions for one sample.
  std::vector<Candidate> predict(const Sample& s, InferenceMode mode,
                                 std::optional<int> n_proposals = std::nullopt) const {
    const EncodedPair enc = encode(s);
    if (mode == InferenceMode::kAnchorBased) {
      std::optional<StageOne> stage;
      if (pools_fused_features()) stage = stage_one(enc);
      const auto spans = windows(s.video.length());
      std::vector<Candidate> cands;
      for (const auto& w : spans) cands.push_back({w, 0.0, std::nullopt});
      const ad::Var scores = score_spans(enc, stage ? &*stage : nullptr, spans);
      return rerank(std::move(cands), scores.value().col(0));
    }
    const StageOne stage = stage_one(enc);
    if (mode == InferenceMode::kAnchorFree) {
      const TemporalSegment best = anchor_free_infer(stage.map);
      return {{best, stage.map.map(best.first(), best.last()), std::nullopt}};
    }
    std::vector<Candidate> cands = propose(stage.map, n_proposals.value_or(config_.n_test));
    std::vector<TemporalSegment> spans;
    for (const auto& c : cands) spans.push_back(c.segment);
    const ad::Var scores = score_spans(enc, &stage, spans);
    return rerank(std::move(cands), scores.value().col(0));
  }

 private:
  Config config_;
  Index video_dim_;
  Index query_dim_;
  ParameterSet params_;
  EncoderParams encoder_;
  CrossAttentionParams cross_;
  ProposalParams proposal_;
  MatcherParams matcher_;
  std::vector<Index> window_lengths_;
};

/// The inference mode a variant is evaluated in by default.
inline InferenceMode default_mode(const Config& c) {
  return c.variant == Variant::kAnchorBased ? InferenceMode::kAnchorBased : InferenceMode::kBPNet;
}

struct Evaluation {
  EvalReport report;
  std::vector<std::vector<Candidate>> predictions;  // frames, ranked
};

/// Runs inference over samples and scores top-1 predictions against the
/// ground truth in seconds.
inline Evaluation evaluate(const Model& model, const std::vector<Sample>& samples,
                           InferenceMode mode, std::optional<int> n_proposals = std::nullopt) {
  require(!samples.empty(), ErrorCode::kArgument, "evaluate: no samples");
  Evaluation out;
  std::vector<std::vector<TemporalSegment>> ranked;
  std::vector<TemporalSegment> gts;
  for (const Sample& s : samples) {
    auto preds = model.predict(s, mode, n_proposals);
    std::vector<TemporalSegment> secs;
    secs.reserve(preds.size());
    for (const auto& c : preds) secs.push_back(to_seconds(c.segment, s.video.duration_s, s.video.length()));
    ranked.push_back(std::move(secs));
    gts.push_back(s.gt);
    out.predictions.push_back(std::move(preds));
  }
  out.report = make_report(ranked, gts);
  return out;
}

}  // namespace bpnet
