#include "gridcascade/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gridcascade {

ImageBounds::ImageBounds(double w, double h) : width(w), height(h) {
  if (!(std::isfinite(w) && std::isfinite(h) && w > 0.0 && h > 0.0)) {
    std::ostringstream msg;
    msg << "image bounds must be positive and finite, got " << w << "x" << h;
    throw std::invalid_argument(msg.str());
  }
}

BBox::BBox(double x1, double y1, double x2, double y2)
    : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
  if (!(std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
        std::isfinite(y2))) {
    throw std::invalid_argument("box coordinates must be finite");
  }
  if (x2 < x1 || y2 < y1) {
    std::ostringstream msg;
    msg << "box has negative extent: (" << x1 << ", " << y1 << ", " << x2
        << ", " << y2 << ")";
    throw std::invalid_argument(msg.str());
  }
}

BBox BBox::from_center(double cx, double cy, double w, double h) {
  return BBox(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h);
}

double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double h = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const BBox& a, const BBox& b) {
  if (!a.has_positive_area() || !b.has_positive_area()) return 0.0;
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

BBox expand(const BBox& b, double ratio) {
  if (!(ratio >= 1.0) || !std::isfinite(ratio)) {
    std::ostringstream msg;
    msg << "expansion ratio must be >= 1, got " << ratio;
    throw std::invalid_argument(msg.str());
  }
  return BBox::from_center(b.center_x(), b.center_y(), b.width() * ratio,
                           b.height() * ratio);
}

BBox clip(const BBox& b, const ImageBounds& bounds) {
  auto cx = [&](double v) { return std::clamp(v, 0.0, bounds.width); };
  auto cy = [&](double v) { return std::clamp(v, 0.0, bounds.height); };
  return BBox(cx(b.x1()), cy(b.y1()), cx(b.x2()), cy(b.y2()));
}

}  // namespace gridcascade
