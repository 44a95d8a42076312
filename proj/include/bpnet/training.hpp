#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "bpnet/model.hpp"

namespace bpnet {

inline constexpr double kLogEps = 1e-12;

// ---------------------------------------------------------------------------
// Loss values on plain vectors (reference forms used by tests and reports)

inline double boundary_cls_loss(const Eigen::RowVectorXd& p_start, const Eigen::RowVectorXd& p_end,
                                const Eigen::RowVectorXd& y_start, const Eigen::RowVectorXd& y_end) {
  require(p_start.size() == y_start.size() && p_end.size() == y_end.size(), ErrorCode::kShape,
          "boundary_cls_loss: length mismatch");
  Index ys = 0;
  Index ye = 0;
  y_start.maxCoeff(&ys);
  y_end.maxCoeff(&ye);
  return -std::log(std::max(p_start(ys), kLogEps)) - std::log(std::max(p_end(ye), kLogEps));
}

inline double matching_reg_loss(const Eigen::VectorXd& predicted, const Eigen::VectorXd& targets) {
  require(predicted.size() == targets.size() && predicted.size() > 0, ErrorCode::kShape,
          "matching_reg_loss: length mismatch");
  return (predicted - targets).squaredNorm() / static_cast<double>(predicted.size());
}

inline double total_loss(double cls, double reg, double lambda) { return cls + lambda * reg; }

/// Frame-inclusive IoU of each candidate against the ground-truth span.
inline Eigen::VectorXd iou_targets(const std::vector<TemporalSegment>& candidates,
                                   const TemporalSegment& gt_frames) {
  Eigen::VectorXd out(static_cast<Index>(candidates.size()));
  for (std::size_t n = 0; n < candidates.size(); ++n) {
    out(static_cast<Index>(n)) = temporal_iou(candidates[n], gt_frames);
  }
  return out;
}

struct LossReport {
  double cls = 0.0;
  double reg = 0.0;
  double lambda = 1.0;
  double total() const { return total_loss(cls, reg, lambda); }
};

struct SampleLoss {
  ad::Var total;
  LossReport report;
  std::size_t candidates = 0;
};

/// Builds the differentiable per-sample objective. Candidates are resampled
/// from the current score map on every call (anchor-based: fixed windows,
/// no boundary term).
inline SampleLoss sample_loss(const Model& model, const Sample& s, const ForwardContext& ctx = {}) {
  const Config& cfg = model.config();
  const Index frames = s.video.length();
  const BoundaryLabels labels = make_boundary_labels(s.gt, s.video.duration_s, frames);
  const TemporalSegment gt_frames = TemporalSegment::frames(labels.start_index, labels.end_index);
  const EncodedPair enc = model.encode(s, ctx);

  SampleLoss out;
  out.report.lambda = cfg.lambda;
  std::vector<TemporalSegment> spans;
  std::optional<StageOne> stage;
  ad::Var cls;
  if (cfg.variant == Variant::kAnchorBased) {
    if (model.pools_fused_features()) stage = model.stage_one(enc);
    spans = model.windows(frames);
  } else {
    stage = model.stage_one(enc);
    const ad::Var p_start = ad::softmax_rows(stage->logits.start);
    const ad::Var p_end = ad::softmax_rows(stage->logits.end);
    cls = ad::add(ad::neg_log_at(p_start, labels.start_index, kLogEps),
                  ad::neg_log_at(p_end, labels.end_index, kLogEps));
    for (const auto& c : model.propose(stage->map, cfg.n_train)) spans.push_back(c.segment);
  }

  const Eigen::VectorXd targets = iou_targets(spans, gt_frames);
  const ad::Var scores = model.score_spans(enc, stage ? &*stage : nullptr, spans);
  const ad::Var reg = ad::mse(scores, targets);
  out.candidates = spans.size();
  out.report.reg = reg.item();
  if (cls.defined()) {
    out.report.cls = cls.item();
    out.total = ad::add(cls, ad::scale(reg, cfg.lambda));
  } else {
    out.total = ad::scale(reg, cfg.lambda);
  }
  return out;
}

struct EpochRecord {
  int epoch = 0;
  double cls = 0.0;
  double reg = 0.0;
  double total = 0.0;
  double val_miou = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_miou = -1.0;
  bool stopped_early = false;
};

inline void write_history(std::ostream& os, const std::vector<EpochRecord>& history) {
  os << "epoch\tl_cls\tl_reg\tl_total\tval_miou\n";
  os << std::setprecision(8);
  for (const auto& r : history) {
    os << r.epoch << '\t' << r.cls << '\t' << r.reg << '\t' << r.total << '\t' << r.val_miou
       << '\n';
  }
}

/// Minibatch Adam on the mean per-sample objective with early stopping on
/// validation mIoU (the training set when no validation set is given). The
/// model is left holding the best-validation parameters.
inline TrainResult train(Model& model, const std::vector<Sample>& train_set,
                         const std::vector<Sample>* validation = nullptr,
                         std::ostream* log = nullptr) {
  require(!train_set.empty(), ErrorCode::kArgument, "train: empty dataset");
  const Config& cfg = model.config();
  const std::vector<Sample>& val = validation != nullptr ? *validation : train_set;
  const InferenceMode mode = default_mode(cfg);

  AdamOptions opt;
  opt.learning_rate = cfg.lr;
  opt.max_grad_norm = cfg.max_grad_norm;
  Adam adam(model.parameters(), opt);
  std::mt19937_64 rng(cfg.seed ^ 0x5eedull);
  ForwardContext ctx{true, cfg.dropout, &rng};

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  std::vector<Matrix> best = model.parameters().snapshot();
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    int batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch));
      model.parameters().zero_grad();
      for (std::size_t k = begin; k < end; ++k) {
        SampleLoss loss = sample_loss(model, train_set[order[k]], ctx);
        require(std::isfinite(loss.total.item()), ErrorCode::kDiverged,
                "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batch_index) + " (sample " +
                    train_set[order[k]].video.video_id + ")");
        ad::backward(loss.total);
        rec.cls += loss.report.cls;
        rec.reg += loss.report.reg;
        rec.total += loss.total.item();
      }
      adam.step(model.parameters(), 1.0 / static_cast<double>(end - begin));
      ++batch_index;
    }
    const double n = static_cast<double>(train_set.size());
    rec.cls /= n;
    rec.reg /= n;
    rec.total /= n;
    rec.val_miou = evaluate(model, val, mode).report.miou;
    result.history.push_back(rec);
    if (log != nullptr) {
      *log << "epoch " << epoch << " l_cls " << rec.cls << " l_reg " << rec.reg << " val_miou "
           << rec.val_miou << '\n';
    }
    if (rec.val_miou > result.best_val_miou) {
      result.best_val_miou = rec.val_miou;
      result.best_epoch = epoch;
      best = model.parameters().snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  model.parameters().restore(best);
  return result;
}

}  // namespace bpnet
