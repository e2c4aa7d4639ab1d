#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gridcascade/gridcodec.hpp"
#include "gridcascade/predictor.hpp"
#include "gridcascade/scenario.hpp"

namespace gridcascade {

struct StageConfig {
  double mapping_ratio = 2.0;
  /// Training-time positive selection threshold.
  double iou_threshold = 0.5;
  double loss_weight = 1.0;

  void validate() const;
};

/// Coarse-to-fine stage schedule. Mapping ratios must be non-increasing.
struct CascadeConfig {
  std::vector<StageConfig> stages;
  double grid_loss_weight = 1.0;
  GridLayout layout;

  /// Ratios (2, 1.5, 1.25), thresholds (0.5, 0.6, 0.7), weights (1, 0.5, 0.25).
  static CascadeConfig standard();
  /// Same layout and grid weight, keeping only the first `n` stages.
  CascadeConfig truncated_to(std::size_t n) const;
  /// Replaces the mapping ratios, keeping thresholds and weights.
  CascadeConfig with_ratios(std::span<const double> ratios) const;

  void validate() const;
};

inline constexpr std::size_t kMaxStages = 5;

struct StageOutput {
  std::vector<BBox> boxes;
  std::vector<HeatmapSet> heatmaps;
  /// Boxes that could not be decoded; they pass through unchanged.
  std::vector<bool> pass_through;
};

/// Per-box seed for stage `stage` of scene `scene_id`.
std::uint64_t stage_box_seed(std::uint64_t seed, int scene_id, std::size_t stage, std::size_t box);

/// One refinement step: predict heatmaps over the expanded region, decode
/// points, fuse them into a box and clip it to the image.
StageOutput run_stage(const StageConfig& cfg, std::span<const BBox> boxes,
                      const HeatmapPredictor& predictor, const Scene& scene,
                      const GridLayout& layout, std::uint64_t seed, std::size_t stage_index = 0,
                      const std::vector<bool>& frozen = {});

struct PositiveSelection {
  std::vector<std::size_t> indices;
  std::vector<std::size_t> matched_gt;
};

/// Training-time selection: box i is kept iff its best gt IoU reaches the
/// threshold; matched to the argmax gt, lowest index on ties.
PositiveSelection select_positives(std::span<const BBox> boxes, std::span<const BBox> gts,
                                   double iou_threshold);

struct StageTrace {
  std::vector<BBox> input;
  std::vector<BBox> output;
  std::vector<HeatmapSet> heatmaps;
  std::vector<bool> pass_through;
  /// Best IoU of each output box against the scene's gts.
  std::vector<double> output_iou;
};

struct CascadeResult {
  std::vector<BBox> boxes;
  std::vector<StageTrace> trace;
  std::vector<bool> pass_through;
};

/// Chains run_stage: every box advances to the next stage. A box flagged as
/// pass-through keeps its box for every later stage. Stage errors are rethrown
/// as std::runtime_error prefixed with the stage index.
CascadeResult run_cascade(const CascadeConfig& cfg, std::span<const BBox> proposals,
                          const HeatmapPredictor& predictor, const Scene& scene,
                          std::uint64_t seed);

inline constexpr double kBceEpsilon = 1e-6;

/// Mean binary cross-entropy over the unmasked channels of a batch, with
/// predictions clamped to [1e-6, 1 - 1e-6]. Returns 0 for an empty batch.
/// When `value_grads` is non-null it receives dBCE/dvalue per heatmap
/// (zero where clamped or masked).
double heatmap_bce(std::span<const HeatmapSet> predicted, std::span<const HeatmapSet> targets,
                   std::vector<std::vector<double>>* value_grads = nullptr);

/// Sum over stages of loss_weight * grid_loss_weight * BCE(stage).
/// Aborts on shape mismatch.
double cmm_loss(std::span<const std::vector<HeatmapSet>> predicted,
                std::span<const std::vector<HeatmapSet>> targets, const CascadeConfig& cfg,
                std::vector<std::vector<std::vector<double>>>* value_grads = nullptr);

}  // namespace gridcascade
