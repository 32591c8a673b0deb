#pragma once

#include <algorithm>

namespace pag::wsol {

// Axis-aligned box in continuous pixel coordinates; area = width * height.
struct BoundingBox {
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  bool valid() const { return xmin < xmax && ymin < ymax; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double ih = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

}  // namespace pag::wsol
