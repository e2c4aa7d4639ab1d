#pragma once

#include <array>

namespace gridcascade {

/// Positive image extent in pixels.
struct ImageBounds {
  double width = 1.0;
  double height = 1.0;

  ImageBounds() = default;
  ImageBounds(double w, double h);
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Axis-aligned box in continuous corner coordinates. Width is x2 - x1.
/// Zero-area boxes are representable; negative extents are not.
class BBox {
 public:
  BBox() = default;
  BBox(double x1, double y1, double x2, double y2);

  static BBox from_center(double cx, double cy, double w, double h);

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }

  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1_ + x2_); }
  double center_y() const { return 0.5 * (y1_ + y2_); }
  bool has_positive_area() const { return width() > 0.0 && height() > 0.0; }

  std::array<double, 4> coords() const { return {x1_, y1_, x2_, y2_}; }

  friend bool operator==(const BBox&, const BBox&) = default;

 private:
  double x1_ = 0.0;
  double y1_ = 0.0;
  double x2_ = 0.0;
  double y2_ = 0.0;
};

double intersection_area(const BBox& a, const BBox& b);

/// Intersection over union. Returns 0 whenever either box has zero area.
double iou(const BBox& a, const BBox& b);

/// Scales width and height by `ratio` about the box center. Not clipped.
/// Throws std::invalid_argument for ratio < 1.
BBox expand(const BBox& b, double ratio);

/// Clamps every coordinate into [0,width]x[0,height]. A box fully outside
/// collapses onto the nearest border.
BBox clip(const BBox& b, const ImageBounds& bounds);

}  // namespace gridcascade
