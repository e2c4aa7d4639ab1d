#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gridcascade/gridcodec.hpp"
#include "gridcascade/mlp.hpp"
#include "gridcascade/scenario.hpp"

namespace gridcascade {

/// Proposal-time classification confidence, predicted IoU of the final box,
/// and classification confidence re-evaluated on the final box.
struct ScoreTriple {
  double cls = 0.0;
  double iou = 1.0;
  double resample = 1.0;

  void validate() const;
};

struct ScoringConfig {
  double gamma = 0.8;
  double alpha1 = 1.0;  // resample classification loss
  double alpha2 = 1.0;  // IoU regression loss
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  double lambda4 = 1.0;

  void validate() const;
};

/// (cls * iou)^gamma * resample^(1 - gamma), with 0^0 = 1.
double fused_score(const ScoreTriple& t, double gamma);

// ---------------------------------------------------------------------------
// IoU scoring

inline constexpr int kIouFeatureSize = 4 * kGridPoints + 4;

/// Fixed-length summary of a final-stage heatmap set: per channel the peak
/// value, normalized peak column and row, and mean mass; then box width and
/// height relative to the image, log aspect, and relative scale.
std::vector<double> iou_features(const HeatmapSet& h, const BBox& box, const ImageBounds& bounds);

struct IouPrediction {
  double foreground = 0.0;
  double background = 1.0;
};

/// Ground-truth IoU scorer. `FullExtent` measures IoU against the object's
/// complete extent instead of its visible box, which is what a scorer trained
/// only on complete objects learns to report.
class IouScoreOracle {
 public:
  enum class Reference { Visible, FullExtent };

  explicit IouScoreOracle(Reference ref = Reference::Visible) : ref_(ref) {}
  IouPrediction predict(const BBox& box, const Scene& scene) const;

 private:
  Reference ref_;
};

/// Three-layer regressor from iou_features to (foreground, background).
class IouScoreModel {
 public:
  IouScoreModel();
  explicit IouScoreModel(Mlp net, bool trained);

  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }
  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }

  /// Throws std::logic_error when the model has not been trained.
  IouPrediction predict(std::span<const double> features) const;

 private:
  Mlp net_;
  bool trained_ = false;
};

/// Mean over the batch of (fg - t)^2 + (bg - (1 - t))^2. Optional outputs
/// receive the per-item gradients.
double iou_score_loss(std::span<const double> pred_fg, std::span<const double> pred_bg,
                      std::span<const double> target_iou, std::vector<double>* grad_fg = nullptr,
                      std::vector<double>* grad_bg = nullptr);

// ---------------------------------------------------------------------------
// Resampled classification

/// Logistic calibration of final-box IoU, 0.5 at IoU 0.5.
double resample_oracle(const BBox& box, const Scene& scene);

/// Classifier over roi_descriptor features, trained with final cascade boxes
/// as positives and background proposals as negatives.
class ResampleScoreModel {
 public:
  ResampleScoreModel();
  explicit ResampleScoreModel(Mlp net, bool trained);

  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }
  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }

  double predict(std::span<const double> descriptor) const;
  double predict(const BBox& box, const Scene& scene, std::uint64_t seed) const;

 private:
  Mlp net_;
  bool trained_ = false;
};

/// Mean binary cross-entropy of probabilities against 0/1 labels.
double classification_loss(std::span<const double> prob, std::span<const double> label,
                           std::vector<double>* grad = nullptr);

// ---------------------------------------------------------------------------
// Joint loss assembly

double scoring_loss(double resample_loss, double iou_loss, double alpha1, double alpha2);
double total_loss(double rpn_loss, double cls_loss, double scoring, double grid_loss,
                  const ScoringConfig& cfg);

/// Rank-based AUC with ties counted as one half.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

}  // namespace gridcascade
