#pragma once

// Ablation comparators sharing the BPNet backbone: stage-one argmax
// (anchor-free) and sliding-window matching (anchor-based).

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "bpnet/matcher.hpp"
#include "bpnet/proposal.hpp"

namespace bpnet {

inline Index window_stride(Index length, double overlap) {
  return std::max<Index>(1, std::lround(static_cast<double>(length) * (1.0 - overlap)));
}

/// Number of windows of one length; floor((T - L) / s) + 1 when L <= T.
inline Index window_count(Index frames, Index length, double overlap) {
  if (length > frames) return 0;
  return (frames - length) / window_stride(length, overlap) + 1;
}

/// Windows of each length in the given order, starting at 0 and stepping by
/// the stride while the window fits.
inline std::vector<TemporalSegment> sliding_windows(Index frames, const std::vector<Index>& lengths,
                                                    double overlap) {
  require(overlap >= 0.0 && overlap < 1.0, ErrorCode::kArgument,
          "sliding_windows: overlap must be in [0, 1)");
  std::vector<TemporalSegment> out;
  for (const Index len : lengths) {
    require(len >= 1, ErrorCode::kArgument, "sliding_windows: window length must be >= 1");
    const Index stride = window_stride(len, overlap);
    for (Index start = 0; start + len <= frames; start += stride) {
      out.push_back(TemporalSegment::frames(start, start + len - 1));
    }
  }
  require(!out.empty(), ErrorCode::kArgument,
          "sliding_windows: every window is longer than T=" + std::to_string(frames));
  return out;
}

inline std::vector<Index> parse_lengths(const std::string& text) {
  std::vector<Index> out;
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      require(used == tok.size() && v >= 1, ErrorCode::kArgument, "");
      out.push_back(v);
    } catch (const std::exception&) {
      fail(ErrorCode::kArgument, "bad window length list: '" + text + "'");
    }
  }
  require(!out.empty(), ErrorCode::kArgument, "empty window length list");
  return out;
}

/// Stage-one-only localisation: the best valid cell of the score map.
inline TemporalSegment anchor_free_infer(const ScoreMap& map) {
  Index best_i = 0;
  Index best_j = 0;
  double best = -1.0;
  for (Index i = 0; i < map.length(); ++i) {
    for (Index j = i; j < map.length(); ++j) {
      if (map.map(i, j) > best) {
        best = map.map(i, j);
        best_i = i;
        best_j = j;
      }
    }
  }
  return TemporalSegment::frames(best_i, best_j);
}

/// Scores every window with the matcher and returns the ranked list.
inline std::vector<Candidate> anchor_based_rank(const ad::Var& video, const ad::Var& query,
                                                const std::vector<TemporalSegment>& windows,
                                                const MatcherParams& params) {
  require(!windows.empty(), ErrorCode::kArgument, "anchor_based_infer: no windows");
  std::vector<Candidate> cands;
  cands.reserve(windows.size());
  for (const auto& w : windows) cands.push_back({w, 0.0, std::nullopt});
  const ad::Var scores = match_scores(video, query, windows, params);
  return rerank(std::move(cands), scores.value().col(0));
}

inline TemporalSegment anchor_based_infer(const ad::Var& video, const ad::Var& query,
                                          const std::vector<TemporalSegment>& windows,
                                          const MatcherParams& params) {
  return anchor_based_rank(video, query, windows, params).front().segment;
}

}  // namespace bpnet
