#include "gridcascade/gridcodec.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gridcascade {

namespace {

BBox checked_region(const BBox& proposal, double ratio) {
  if (!proposal.has_positive_area()) {
    throw std::invalid_argument("heatmap mapping requires a positive-area proposal");
  }
  return expand(proposal, ratio);
}

constexpr int kDecodeRadius = 2;

}  // namespace

void GridLayout::validate() const {
  if (n_points != kGridPoints) {
    std::ostringstream msg;
    msg << "only the 9-point grid layout is supported, got " << n_points;
    throw std::invalid_argument(msg.str());
  }
  if (resolution < 4) {
    std::ostringstream msg;
    msg << "heatmap resolution must be at least 4, got " << resolution;
    throw std::invalid_argument(msg.str());
  }
}

HeatmapSet::HeatmapSet(const BBox& proposal, double ratio, const GridLayout& layout)
    : proposal_(proposal), ratio_(ratio), layout_(layout) {
  layout_.validate();
  checked_region(proposal, ratio);
  values_.assign(static_cast<std::size_t>(layout_.n_points) * cells_per_channel(), 0.0);
  masked_.assign(static_cast<std::size_t>(layout_.n_points), 0);
}

std::span<const double> HeatmapSet::channel(int c) const {
  return std::span<const double>(values_).subspan(
      static_cast<std::size_t>(c) * cells_per_channel(), cells_per_channel());
}

std::span<double> HeatmapSet::channel(int c) {
  return std::span<double>(values_).subspan(
      static_cast<std::size_t>(c) * cells_per_channel(), cells_per_channel());
}

void HeatmapSet::validate() const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double v = values_[i];
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      std::ostringstream msg;
      msg << "heatmap value " << v << " at flat index " << i << " outside [0,1]";
      throw std::domain_error(msg.str());
    }
  }
}

std::array<Point2, kGridPoints> grid_points(const BBox& box) {
  const std::array<double, 3> xs{box.x1(), box.center_x(), box.x2()};
  const std::array<double, 3> ys{box.y1(), box.center_y(), box.y2()};
  std::array<Point2, kGridPoints> pts;
  for (int r = 0; r < kGridSide; ++r) {
    for (int c = 0; c < kGridSide; ++c) {
      pts[static_cast<std::size_t>(r * kGridSide + c)] = {xs[c], ys[r]};
    }
  }
  return pts;
}

CellPoint image_to_cell(const Point2& p, const BBox& proposal, double ratio,
                        int resolution) {
  const BBox r = checked_region(proposal, ratio);
  return {(p.x - r.x1()) / r.width() * resolution,
          (p.y - r.y1()) / r.height() * resolution};
}

Point2 cell_to_image(const CellPoint& c, const BBox& proposal, double ratio,
                     int resolution) {
  const BBox r = checked_region(proposal, ratio);
  return {r.x1() + c.u / resolution * r.width(),
          r.y1() + c.v / resolution * r.height()};
}

bool cell_index(const CellPoint& c, int resolution, int& row, int& col) {
  const double s = resolution;
  if (!(c.u >= 0.0 && c.u <= s && c.v >= 0.0 && c.v <= s)) return false;
  col = std::min(static_cast<int>(std::floor(c.u)), resolution - 1);
  row = std::min(static_cast<int>(std::floor(c.v)), resolution - 1);
  return true;
}

HeatmapSet encode_target(const BBox& gt, const BBox& proposal, double ratio,
                         const GridLayout& layout) {
  HeatmapSet target(proposal, ratio, layout);
  const int s = layout.resolution;
  const auto pts = grid_points(gt);
  for (int k = 0; k < layout.n_points; ++k) {
    const CellPoint cp = image_to_cell(pts[static_cast<std::size_t>(k)], proposal, ratio, s);
    int row = 0;
    int col = 0;
    if (!cell_index(cp, s, row, col)) {
      target.set_masked(k, true);
      continue;
    }
    for (int r = std::max(0, row - 1); r <= std::min(s - 1, row + 1); ++r) {
      for (int c = std::max(0, col - 1); c <= std::min(s - 1, col + 1); ++c) {
        target.at(k, r, c) = 1.0;
      }
    }
  }
  return target;
}

DecodedPoints decode_points(const HeatmapSet& h) {
  const int s = h.resolution();
  DecodedPoints out(static_cast<std::size_t>(h.channels()));
  for (int k = 0; k < h.channels(); ++k) {
    const auto ch = h.channel(k);
    // std::max_element returns the first maximum: smallest row-major index.
    const auto best = std::max_element(ch.begin(), ch.end());
    const auto flat = static_cast<int>(best - ch.begin());
    const double peak = *best;
    const int row = flat / s;
    const int col = flat % s;

    double su = 0.0;
    double sv = 0.0;
    int count = 0;
    for (int r = std::max(0, row - kDecodeRadius); r <= std::min(s - 1, row + kDecodeRadius); ++r) {
      for (int c = std::max(0, col - kDecodeRadius); c <= std::min(s - 1, col + kDecodeRadius); ++c) {
        if (h.at(k, r, c) == peak) {
          su += c + 0.5;
          sv += r + 0.5;
          ++count;
        }
      }
    }
    const CellPoint centre{su / count, sv / count};
    auto& dp = out[static_cast<std::size_t>(k)];
    dp.location = cell_to_image(centre, h.proposal(), h.ratio(), s);
    dp.confidence = peak;
    dp.row = row;
    dp.col = col;
  }
  return out;
}

BBox points_to_box(const DecodedPoints& points, const GridLayout& layout) {
  layout.validate();
  if (points.size() != static_cast<std::size_t>(layout.n_points)) {
    throw std::invalid_argument("decoded point count does not match the grid layout");
  }
  // side: 0 = left column, 1 = right column, 2 = top row, 3 = bottom row
  auto fuse = [&](int side) {
    double num = 0.0;
    double den = 0.0;
    for (int i = 0; i < kGridSide; ++i) {
      int k = 0;
      switch (side) {
        case 0: k = i * kGridSide; break;
        case 1: k = i * kGridSide + kGridSide - 1; break;
        case 2: k = i; break;
        default: k = (kGridSide - 1) * kGridSide + i; break;
      }
      const auto& p = points[static_cast<std::size_t>(k)];
      const double coord = side < 2 ? p.location.x : p.location.y;
      num += p.confidence * coord;
      den += p.confidence;
    }
    if (!(den > 0.0)) {
      static constexpr const char* kNames[] = {"left", "right", "top", "bottom"};
      throw UndecodableBoxError(std::string("undecodable box: ") + kNames[side] +
                                " grid points carry zero confidence");
    }
    return num / den;
  };
  double x1 = fuse(0);
  double x2 = fuse(1);
  double y1 = fuse(2);
  double y2 = fuse(3);
  if (x1 > x2) std::swap(x1, x2);
  if (y1 > y2) std::swap(y1, y2);
  return BBox(x1, y1, x2, y2);
}

}  // namespace gridcascade
