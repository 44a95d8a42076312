#pragma once

#include <algorithm>
#include <array>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bpnet/data.hpp"
#include "bpnet/error.hpp"

namespace bpnet {

/// Intersection over union of two segments in the same unit. Frame spans
/// are inclusive (a single frame has length 1); seconds are continuous.
inline double temporal_iou(const TemporalSegment& a, const TemporalSegment& b) {
  require(a.unit == b.unit, ErrorCode::kArgument, "temporal_iou: unit mismatch");
  require(a.start <= a.end && b.start <= b.end, ErrorCode::kArgument,
          "temporal_iou: segment with start > end");
  const double extra = a.unit == TimeUnit::kFrames ? 1.0 : 0.0;
  const double len_a = a.end - a.start + extra;
  const double len_b = b.end - b.start + extra;
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start) + extra);
  const double uni = len_a + len_b - inter;
  if (uni <= 0.0) return a == b ? 1.0 : 0.0;  // two zero-length instants
  return inter / uni;
}

/// Percentage of samples whose top-n ranked predictions contain one with
/// IoU strictly greater than theta.
inline double recall_at_n(const std::vector<std::vector<TemporalSegment>>& ranked,
                          const std::vector<TemporalSegment>& gts, int n, double theta) {
  require(ranked.size() == gts.size() && !gts.empty(), ErrorCode::kArgument,
          "recall_at_n: need one ranked list per ground truth");
  require(n >= 1, ErrorCode::kArgument, "recall_at_n: n must be >= 1");
  std::size_t hits = 0;
  for (std::size_t s = 0; s < gts.size(); ++s) {
    const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(n), ranked[s].size());
    for (std::size_t r = 0; r < top; ++r) {
      if (temporal_iou(ranked[s][r], gts[s]) > theta) {
        ++hits;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(gts.size());
}

inline double mean_iou(const std::vector<TemporalSegment>& top1,
                       const std::vector<TemporalSegment>& gts) {
  require(top1.size() == gts.size() && !gts.empty(), ErrorCode::kArgument,
          "mean_iou: need one prediction per ground truth");
  double total = 0.0;
  for (std::size_t s = 0; s < gts.size(); ++s) total += temporal_iou(top1[s], gts[s]);
  return 100.0 * total / static_cast<double>(gts.size());
}

inline constexpr std::array<double, 3> kIouThresholds = {0.3, 0.5, 0.7};

struct EvalReport {
  std::array<double, 3> r_at_1{};  // at kIouThresholds, percent
  double miou = 0.0;               // percent
  std::size_t n_samples = 0;
};

inline EvalReport make_report(const std::vector<std::vector<TemporalSegment>>& ranked,
                              const std::vector<TemporalSegment>& gts) {
  EvalReport r;
  r.n_samples = gts.size();
  for (std::size_t k = 0; k < kIouThresholds.size(); ++k) {
    r.r_at_1[k] = recall_at_n(ranked, gts, 1, kIouThresholds[k]);
  }
  std::vector<TemporalSegment> top1;
  top1.reserve(ranked.size());
  for (const auto& list : ranked) {
    require(!list.empty(), ErrorCode::kArgument, "make_report: empty prediction list");
    top1.push_back(list.front());
  }
  r.miou = mean_iou(top1, gts);
  return r;
}

/// Aligned table; one row per (name, report) pair.
inline void print_report_table(std::ostream& os,
                               const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::size_t width = 6;
  for (const auto& [name, _] : rows) width = std::max(width, name.size());
  os << std::left << std::setw(static_cast<int>(width)) << "Method" << std::right
     << " | IoU=0.3 | IoU=0.5 | IoU=0.7 |   mIoU |    n\n";
  os << std::string(width, '-') << "-+---------+---------+---------+--------+-----\n";
  for (const auto& [name, r] : rows) {
    os << std::left << std::setw(static_cast<int>(width)) << name << std::right << std::fixed
       << std::setprecision(2) << " | " << std::setw(7) << r.r_at_1[0] << " | " << std::setw(7)
       << r.r_at_1[1] << " | " << std::setw(7) << r.r_at_1[2] << " | " << std::setw(6) << r.miou
       << " | " << std::setw(4) << r.n_samples << '\n';
  }
}

/// Machine-readable form: name,r1_iou0.3,r1_iou0.5,r1_iou0.7,miou,n
inline std::string report_csv_line(const std::string& name, const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << name << ',' << r.r_at_1[0] << ',' << r.r_at_1[1]
     << ',' << r.r_at_1[2] << ',' << r.miou << ',' << r.n_samples;
  return os.str();
}

inline constexpr const char* kReportCsvHeader = "method,r1_iou0.3,r1_iou0.5,r1_iou0.7,miou,n";

}  // namespace bpnet
