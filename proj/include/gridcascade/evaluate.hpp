#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gridcascade/geometry.hpp"
#include "gridcascade/scoring.hpp"

namespace gridcascade {

struct Detection {
  BBox box;
  ScoreTriple scores;
  double fused = 0.0;
  int class_id = 0;
  int scene_id = 0;
  /// Scene-local identity used to break score ties deterministically.
  int local_id = 0;
};

/// Greedy suppression in descending fused score (ties: lower local_id).
/// Drops any detection whose IoU with an already kept one exceeds the
/// threshold. Output is in keep order.
std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold);

/// The `max_count` highest-scoring detections, in ranking order.
std::vector<Detection> cap_rois(std::span<const Detection> dets, std::size_t max_count);

/// Ranking order used everywhere: fused desc, then scene id, then local id.
bool ranks_before(const Detection& a, const Detection& b);

struct MatchResult {
  /// Matched gt per detection, -1 when unmatched.
  std::vector<int> gt_index;
  std::vector<bool> true_positive;
  /// Detections excluded from scoring (matched to an ignored gt, or
  /// unmatched and outside the evaluated area range).
  std::vector<bool> ignored;
  std::size_t unmatched_gts = 0;
};

/// Greedy matching of score-ranked detections: each takes the highest-IoU
/// unmatched gt with IoU >= threshold, preferring non-ignored gts (ties: lowest
/// gt index).
MatchResult match(std::span<const Detection> ranked, std::span<const BBox> gts,
                  double iou_threshold, std::span<const bool> gt_ignored = {},
                  double area_lo = 0.0, double area_hi = std::numeric_limits<double>::infinity());

inline constexpr int kRecallPoints = 101;

/// 101-point interpolated precision samples at recall 0, 0.01, ..., 1. The
/// recall-0 sample is the precision of the top-ranked detection; every other
/// sample is the precision envelope at the first rank reaching that recall.
std::array<double, kRecallPoints> interpolated_precision(std::span<const bool> tp_flags,
                                                         std::size_t n_gt);

/// Mean of interpolated_precision. With no gts the result is 1 when there are
/// also no detections, otherwise 0.
double average_precision(std::span<const bool> tp_flags, std::size_t n_gt);

struct GroundTruthSet {
  int scene_id = 0;
  std::vector<BBox> boxes;
};

struct ScaleBins {
  double small_max = 32.0 * 32.0;
  double medium_max = 96.0 * 96.0;
};

struct EvalSettings {
  /// AP averages over these thresholds.
  std::vector<double> thresholds = coco_thresholds();
  ScaleBins scale_bins;

  static std::vector<double> coco_thresholds();
};

struct ThresholdResult {
  double threshold = 0.0;
  double ap = 0.0;
  std::array<double, kRecallPoints> precision{};
};

struct EvalResult {
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ap_small = 0.0;
  double ap_medium = 0.0;
  double ap_large = 0.0;
  std::vector<ThresholdResult> per_threshold;

  /// AP at a threshold present in per_threshold; throws std::out_of_range.
  double ap_at(double threshold) const;

  std::string to_csv(const std::string& config_hash, std::uint64_t seed) const;
  std::string to_json(const std::string& config_hash, std::uint64_t seed) const;
  std::string pr_curve_csv(const std::string& config_hash, std::uint64_t seed) const;
};

/// Pools detections across scenes at each threshold (plus 0.5 and 0.75).
/// Throws std::invalid_argument for a detection whose scene id has no gt set.
EvalResult evaluate(std::span<const Detection> dets, std::span<const GroundTruthSet> gts,
                    const EvalSettings& settings = {});

/// AP over pooled detections for one threshold and gt area range.
double pooled_ap(std::span<const Detection> dets, std::span<const GroundTruthSet> gts,
                 double threshold, double area_lo = 0.0,
                 double area_hi = std::numeric_limits<double>::infinity(),
                 std::array<double, kRecallPoints>* precision = nullptr);

}  // namespace gridcascade
