#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "gridcascade/geometry.hpp"

namespace gridcascade {

/// Grid point arrangement. Only the 3x3 layout (corners, edge midpoints,
/// center) is supported; point k sits at row k / 3, column k % 3.
struct GridLayout {
  int n_points = 9;
  int resolution = 28;

  void validate() const;
};

inline constexpr int kGridSide = 3;
inline constexpr int kGridPoints = kGridSide * kGridSide;

/// Continuous heatmap coordinates: `u` runs along image x, `v` along image y.
struct CellPoint {
  double u = 0.0;
  double v = 0.0;
};

/// Per-grid-point S x S maps over the represented region expand(proposal, ratio).
/// Channels flagged as masked carry no supervision (their grid point fell
/// outside the represented region when the target was encoded).
class HeatmapSet {
 public:
  HeatmapSet(const BBox& proposal, double ratio, const GridLayout& layout);

  int channels() const { return layout_.n_points; }
  int resolution() const { return layout_.resolution; }
  std::size_t cells_per_channel() const {
    return static_cast<std::size_t>(layout_.resolution) * layout_.resolution;
  }
  const GridLayout& layout() const { return layout_; }
  const BBox& proposal() const { return proposal_; }
  double ratio() const { return ratio_; }
  BBox region() const { return expand(proposal_, ratio_); }

  double at(int channel, int row, int col) const {
    return values_[offset(channel, row, col)];
  }
  double& at(int channel, int row, int col) {
    return values_[offset(channel, row, col)];
  }

  std::span<const double> channel(int c) const;
  std::span<double> channel(int c);
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool masked(int c) const { return masked_.at(static_cast<std::size_t>(c)) != 0; }
  void set_masked(int c, bool m) { masked_.at(static_cast<std::size_t>(c)) = m ? 1 : 0; }

  /// Throws std::domain_error if any value lies outside [0,1] or is not finite.
  void validate() const;

 private:
  std::size_t offset(int channel, int row, int col) const {
    return (static_cast<std::size_t>(channel) * layout_.resolution + row) *
               layout_.resolution +
           col;
  }

  BBox proposal_;
  double ratio_;
  GridLayout layout_;
  std::vector<double> values_;
  std::vector<std::uint8_t> masked_;
};

struct DecodedPoint {
  Point2 location;
  double confidence = 0.0;
  int row = 0;
  int col = 0;
};

using DecodedPoints = std::vector<DecodedPoint>;

class UndecodableBoxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The nine grid points of `box` in layout order.
std::array<Point2, kGridPoints> grid_points(const BBox& box);

CellPoint image_to_cell(const Point2& p, const BBox& proposal, double ratio,
                        int resolution);
Point2 cell_to_image(const CellPoint& c, const BBox& proposal, double ratio,
                     int resolution);

/// Integer cell (row, col) under the closed-region convention: the far edge
/// of the represented region (continuous coordinate exactly S) belongs to the
/// last cell. Returns false when the point lies outside [0,S]^2.
bool cell_index(const CellPoint& c, int resolution, int& row, int& col);

/// Binary training target: a 3x3 block of ones around each in-region grid
/// point of `gt`. Out-of-region points yield a zero, masked channel.
HeatmapSet encode_target(const BBox& gt, const BBox& proposal, double ratio,
                         const GridLayout& layout);

/// Argmax decoding. Ties resolve to the smallest row-major index; the location
/// is the mean center of the max-valued cells within Chebyshev radius 2 of the
/// argmax, so a flat 3x3 target block decodes to its middle cell.
DecodedPoints decode_points(const HeatmapSet& h);

/// Fuses decoded points into a box: each edge is the confidence-weighted mean
/// of the matching coordinate over its side column/row of three points.
/// Throws UndecodableBoxError when a side group carries no confidence.
BBox points_to_box(const DecodedPoints& points, const GridLayout& layout);

}  // namespace gridcascade
