#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gridcascade/geometry.hpp"

namespace gridcascade {

struct GroundTruth {
  BBox box;
  int class_id = 0;
  bool truncated = false;
  /// Pre-clip extent; equals `box` for complete objects.
  BBox full_extent;
};

struct Scene {
  int id = 0;
  ImageBounds bounds;
  std::vector<GroundTruth> gts;

  /// Throws std::invalid_argument when a gt escapes the bounds or the
  /// truncated flag disagrees with full_extent.
  void validate() const;
};

/// Fractions of small / medium / large objects (COCO area bins).
struct SizeMix {
  double small = 0.3;
  double medium = 0.4;
  double large = 0.3;
};

struct SceneParams {
  ImageBounds bounds{640.0, 480.0};
  int n_objects = 3;
  double truncated_fraction = 0.1;
  SizeMix size_mix;
};

Scene generate_scene(std::uint64_t seed, int id, const SceneParams& params);

/// Scenes with ids 0..n-1, each seeded from `seed` and its id.
std::vector<Scene> generate_corpus(std::uint64_t seed, int n_scenes,
                                   const SceneParams& params);

struct ProposalParams {
  /// Gaussian jitter of center and log-size, as a fraction of the gt size.
  double jitter_sigma = 0.15;
  /// Log2 step that proposal sizes snap to (anchor scales); 0 disables.
  double scale_quantization = 0.0;
  int per_gt = 10;
  int n_background = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

/// RPN stand-in: `per_gt` jittered copies of every gt followed by
/// `n_background` boxes whose IoU with every gt is below 0.3.
std::vector<BBox> generate_proposals(const Scene& scene, const ProposalParams& params);

inline constexpr double kBackgroundIou = 0.3;

/// Best IoU of `box` against the visible gt boxes, and the index achieving it
/// (lowest index on ties, -1 when the scene has no gts).
struct BestMatch {
  int index = -1;
  double iou = 0.0;
};
BestMatch best_match(const BBox& box, const Scene& scene);

double sigmoid(double x);

/// Classification confidence computed on the proposal rather than the refined
/// box: a logistic of proposal IoU blended with seeded uniform noise.
double simulate_cls_confidence(const BBox& proposal, const Scene& scene,
                               double decorrelation, std::uint64_t seed);

/// Synthetic stand-in for pooled RoI appearance features.
inline constexpr int kRoiDescriptorSize = 5;
std::vector<double> roi_descriptor(const BBox& box, const Scene& scene,
                                   std::uint64_t seed);

inline constexpr int kSceneSchemaVersion = 1;

void save_scenes(const std::vector<Scene>& scenes, const std::filesystem::path& path);
std::vector<Scene> load_scenes(const std::filesystem::path& path);

}  // namespace gridcascade
