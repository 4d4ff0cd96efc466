#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "asl/core.hpp"
#include "asl/matcher.hpp"

namespace asl {

struct EmptyGroundTruth : Error {
  using Error::Error;
};
struct GtMismatch : Error {
  using Error::Error;
};

using GtPairs = std::vector<std::pair<ImageId, ImageId>>;  // (query, ref)

struct EvalReport {
  double micro_ap = 0.0;
  double precision_at_n = 0.0;
  std::int64_t n = 0;
  std::int64_t true_positives = 0;
  std::int64_t false_positives = 0;
  std::int64_t num_gt_pairs = 0;
  bool short_list = false;  // fewer than n predictions were available
};

// Micro average precision over the globally ranked prediction list:
// descending score, ties by ascending query id then reference id; at every
// ground-truth hit at rank r with t hits so far, accumulate t/r; divide by
// |gt|. Throws EmptyGroundTruth when gt is empty.
double micro_ap(const std::vector<Prediction>& predictions, const GtPairs& gt);

struct PrecisionAtN {
  double precision = 0.0;
  std::int64_t true_positives = 0;
  std::int64_t false_positives = 0;
  bool short_list = false;
};

// precision = TP / (TP + FP) over the top n of the same global ordering.
// When fewer than n predictions exist the denominator shrinks to what is
// available and short_list is set; missing pairs are not counted as FP.
PrecisionAtN precision_at_n(const std::vector<Prediction>& predictions,
                            const GtPairs& gt, std::int64_t n);

EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const GtPairs& gt, std::int64_t n);

struct ReportDelta {
  // b - a for every numeric field.
  double micro_ap = 0.0;
  double precision_at_n = 0.0;
  std::int64_t n = 0;
  std::int64_t true_positives = 0;
  std::int64_t false_positives = 0;
};

// Signed deltas between two reports over the same ground truth; throws
// GtMismatch when num_gt_pairs differ.
ReportDelta compare_reports(const EvalReport& a, const EvalReport& b);
std::string render_delta_text(const EvalReport& a, const EvalReport& b,
                              const ReportDelta& d);
std::string render_delta_csv(const EvalReport& a, const EvalReport& b,
                             const ReportDelta& d);

struct SweepPoint {
  double fraction = 0.0;
  double micro_ap = 0.0;
};

// For each fraction f, matches the base queries plus the first
// ceil(f * pool) hard-negative queries (pool order fixed by
// hardneg_query_ids) and scores micro AP against the same ground truth.
std::vector<SweepPoint> sweep_hard_negatives(
    const std::vector<Descriptor>& queries,
    const std::vector<ImageId>& hardneg_query_ids, const RefIndex& index,
    const MatchConfig& cfg, const GtPairs& gt,
    const std::vector<double>& fractions);

void write_report_json(const std::filesystem::path& path,
                       const EvalReport& report);
EvalReport read_report_json(const std::filesystem::path& path);
std::string render_report_text(const EvalReport& report);

void write_sweep_csv(const std::filesystem::path& path,
                     const std::vector<SweepPoint>& curve);
// Minimal line-plot rendering of a sweep curve.
void write_sweep_svg(const std::filesystem::path& path,
                     const std::vector<SweepPoint>& curve);

}  // namespace asl
