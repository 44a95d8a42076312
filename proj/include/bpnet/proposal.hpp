#pragma once

// Stage one: boundary logits from two stacked LSTMs, the joint start/end
// score map, and top-N candidate extraction over its upper triangle.

#include <algorithm>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bpnet/autograd.hpp"
#include "bpnet/data.hpp"
#include "bpnet/metrics.hpp"
#include "bpnet/parameters.hpp"

namespace bpnet {

/// Gate layout along the 4h axis: input, forget, cell, output.
struct LstmParams {
  ad::Var input_weight;   // in x 4h
  ad::Var hidden_weight;  // h x 4h
  ad::Var bias;           // 1 x 4h

  Index hidden() const { return hidden_weight.rows(); }
};

inline LstmParams make_lstm_params(ParameterSet& ps, const std::string& prefix, Index in,
                                   Index hidden, std::mt19937_64& rng) {
  Matrix bias = Matrix::Zero(1, 4 * hidden);
  bias.middleCols(hidden, hidden).setOnes();  // forget gate starts open
  return {ps.add(prefix + ".input_weight", glorot(in, 4 * hidden, rng)),
          ps.add(prefix + ".hidden_weight", glorot(hidden, 4 * hidden, rng)),
          ps.add(prefix + ".bias", std::move(bias))};
}

/// Unidirectional LSTM over the rows of x with zero initial state; returns
/// the T x h matrix of hidden states.
inline ad::Var lstm(const ad::Var& x, const LstmParams& p) {
  const Index h = p.hidden();
  const ad::Var projected = ad::linear(x, p.input_weight, p.bias);
  ad::Var hidden = ad::constant(Matrix::Zero(1, h));
  ad::Var cell = ad::constant(Matrix::Zero(1, h));
  std::vector<ad::Var> states;
  states.reserve(static_cast<std::size_t>(x.rows()));
  for (Index t = 0; t < x.rows(); ++t) {
    const ad::Var gates =
        ad::add(ad::slice_rows(projected, t, 1), ad::matmul(hidden, p.hidden_weight));
    const ad::Var in_gate = ad::sigmoid(ad::slice_cols(gates, 0, h));
    const ad::Var forget_gate = ad::sigmoid(ad::slice_cols(gates, h, h));
    const ad::Var candidate = ad::tanh(ad::slice_cols(gates, 2 * h, h));
    const ad::Var out_gate = ad::sigmoid(ad::slice_cols(gates, 3 * h, h));
    cell = ad::add(ad::hadamard(forget_gate, cell), ad::hadamard(in_gate, candidate));
    hidden = ad::hadamard(out_gate, ad::tanh(cell));
    states.push_back(hidden);
  }
  return ad::concat_rows(states);
}

struct ProposalParams {
  LstmParams start_lstm;
  LstmParams end_lstm;
  ad::Var start_weight, start_bias;  // h x 1, 1 x 1
  ad::Var end_weight, end_bias;
};

inline ProposalParams make_proposal_params(ParameterSet& ps, Index d, std::mt19937_64& rng) {
  ProposalParams p;
  p.start_lstm = make_lstm_params(ps, "proposal.start_lstm", d, d, rng);
  p.end_lstm = make_lstm_params(ps, "proposal.end_lstm", d, d, rng);
  p.start_weight = ps.add("proposal.start_weight", glorot(d, 1, rng));
  p.start_bias = ps.add("proposal.start_bias", Matrix::Zero(1, 1));
  p.end_weight = ps.add("proposal.end_weight", glorot(d, 1, rng));
  p.end_bias = ps.add("proposal.end_bias", Matrix::Zero(1, 1));
  return p;
}

struct BoundaryLogits {
  ad::Var start;  // 1 x T
  ad::Var end;    // 1 x T
};

inline BoundaryLogits boundary_logits(const ad::Var& vq, const ProposalParams& p) {
  require(vq.rows() >= 1, ErrorCode::kShape, "boundary_logits: empty sequence");
  require(vq.value().allFinite(), ErrorCode::kDomain, "boundary_logits: non-finite input");
  const ad::Var h_start = lstm(vq, p.start_lstm);
  const ad::Var h_end = lstm(h_start, p.end_lstm);
  return {ad::transpose(ad::linear(h_start, p.start_weight, p.start_bias)),
          ad::transpose(ad::linear(h_end, p.end_weight, p.end_bias))};
}

/// Joint start/end probabilities. Cell (i, j) scores frames i..j and is a
/// valid segment iff i <= j.
struct ScoreMap {
  Eigen::RowVectorXd p_start;
  Eigen::RowVectorXd p_end;
  Matrix map;  // T x T outer product

  Index length() const { return p_start.size(); }
  static bool valid(Index i, Index j) { return i <= j; }

  double masked_sum() const {
    double s = 0.0;
    for (Index i = 0; i < length(); ++i) s += map.row(i).tail(length() - i).sum();
    return s;
  }
};

inline Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& logits) {
  Eigen::RowVectorXd p = (logits.array() - logits.maxCoeff()).exp().matrix();
  return p / p.sum();
}

inline ScoreMap joint_score_map(const Eigen::RowVectorXd& start_logits,
                                const Eigen::RowVectorXd& end_logits) {
  require(start_logits.size() == end_logits.size() && start_logits.size() >= 1,
          ErrorCode::kShape, "joint_score_map: logits must have equal non-zero length");
  ScoreMap m;
  m.p_start = softmax(start_logits);
  m.p_end = softmax(end_logits);
  m.map = m.p_start.transpose() * m.p_end;
  return m;
}

struct Candidate {
  TemporalSegment segment;  // frames
  double proposal_score = 0.0;
  std::optional<double> match_score;
};

namespace detail {

/// Score descending, then smaller start, then smaller end.
inline bool proposal_before(const Candidate& a, const Candidate& b) {
  if (a.proposal_score != b.proposal_score) return a.proposal_score > b.proposal_score;
  if (a.segment.start != b.segment.start) return a.segment.start < b.segment.start;
  return a.segment.end < b.segment.end;
}

}  // namespace detail

/// The N highest valid cells, sorted by score with (start, end) tie-break.
/// With nms_iou set, greedily drops candidates overlapping a kept one by
/// more than that frame IoU.
inline std::vector<Candidate> top_n_candidates(const ScoreMap& map, int n,
                                               std::optional<double> nms_iou = std::nullopt) {
  require(n >= 1, ErrorCode::kArgument, "top_n_candidates: N must be >= 1");
  const Index t_len = map.length();
  std::vector<Candidate> cells;
  cells.reserve(static_cast<std::size_t>(t_len * (t_len + 1) / 2));
  for (Index i = 0; i < t_len; ++i) {
    for (Index j = i; j < t_len; ++j) {
      cells.push_back({TemporalSegment::frames(i, j), map.map(i, j), std::nullopt});
    }
  }
  if (!nms_iou) {
    const auto keep = std::min(cells.size(), static_cast<std::size_t>(n));
    std::partial_sort(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(keep),
                      cells.end(), detail::proposal_before);
    cells.resize(keep);
    return cells;
  }
  std::sort(cells.begin(), cells.end(), detail::proposal_before);
  std::vector<Candidate> kept;
  for (const Candidate& c : cells) {
    if (static_cast<int>(kept.size()) == n) break;
    bool suppressed = false;
    for (const Candidate& k : kept) {
      if (temporal_iou(c.segment, k.segment) > *nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(c);
  }
  return kept;
}

}  // namespace bpnet
