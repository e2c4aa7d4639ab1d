#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gridcascade/gridcodec.hpp"
#include "gridcascade/mlp.hpp"
#include "gridcascade/scenario.hpp"

namespace gridcascade {

/// Produces a HeatmapSet whose represented region is expand(box, ratio).
/// Implementations are immutable and deterministic given their inputs and
/// the per-call seed.
class HeatmapPredictor {
 public:
  virtual ~HeatmapPredictor() = default;
  virtual HeatmapSet predict(const Scene& scene, const BBox& box, double ratio,
                             const GridLayout& layout, std::uint64_t seed) const = 0;
};

struct OracleParams {
  /// Std-dev of the Gaussian displacement of each peak, in cells.
  double noise_sigma = 0.6;
  /// Clamp out-of-region points onto the border cell instead of dropping them.
  bool truncate = true;
  /// Exponential falloff per cell away from the peak.
  double peak_decay = 1.0;
  double background_level = 0.0;

  void validate() const;
};

/// Ground-truth-driven heatmaps with configurable misalignment. A box whose
/// best gt IoU is below 0.3 receives uniform background maps.
class OraclePredictor final : public HeatmapPredictor {
 public:
  explicit OraclePredictor(OracleParams params);

  HeatmapSet predict(const Scene& scene, const BBox& box, double ratio,
                     const GridLayout& layout, std::uint64_t seed) const override;

  const OracleParams& params() const { return params_; }

 private:
  OracleParams params_;
};

inline constexpr double kOracleMatchIou = 0.3;

/// Tiny trainable heatmap network: one tanh hidden layer over box geometry,
/// then separable per-channel row and column logits whose sums give S x S x 9
/// sigmoid maps.
class HeatmapNet {
 public:
  static constexpr int kInputs = 6;

  HeatmapNet() = default;
  HeatmapNet(int hidden, GridLayout layout);

  void initialize(std::uint64_t seed);

  int hidden() const { return hidden_; }
  const GridLayout& layout() const { return layout_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }

  static std::vector<double> features(const Scene& scene, const BBox& box, double ratio);

  struct Cache {
    std::vector<double> input;
    std::vector<double> hidden;
  };

  HeatmapSet forward(const Scene& scene, const BBox& box, double ratio,
                     Cache* cache = nullptr) const;

  /// Accumulates dL/dparams given dL/d(heatmap value) for one forward pass.
  void backward(const Cache& cache, const HeatmapSet& output,
                std::span<const double> value_grad, std::span<double> grad) const;

 private:
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return static_cast<std::size_t>(hidden_) * kInputs; }
  std::size_t w2() const { return b1() + static_cast<std::size_t>(hidden_); }
  std::size_t b2() const { return w2() + static_cast<std::size_t>(factor_count()) * hidden_; }
  int factor_count() const { return 2 * layout_.n_points * layout_.resolution; }

  int hidden_ = 0;
  GridLayout layout_;
  std::vector<double> params_;
};

class ToyPredictor final : public HeatmapPredictor {
 public:
  explicit ToyPredictor(HeatmapNet net) : net_(std::move(net)) {}

  HeatmapSet predict(const Scene& scene, const BBox& box, double ratio,
                     const GridLayout& layout, std::uint64_t seed) const override;

  const HeatmapNet& net() const { return net_; }

 private:
  HeatmapNet net_;
};

}  // namespace gridcascade
