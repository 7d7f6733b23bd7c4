#include "svg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace svg::geometry {

bool NormBBox::well_formed() const {
  auto in_range = [](int v) { return v >= 0 && v <= kNormScale; };
  return in_range(x1) && in_range(y1) && in_range(x2) && in_range(y2) && x1 <= x2 && y1 <= y2;
}

double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0 || h <= 0) return 0.0;
  return w * h;
}

double iou_box(const BBox& a, const BBox& b) {
  // Extents rather than BBox::area so the measure stays translation invariant.
  auto extent = [](const BBox& x) { return std::max(0.0, x.width()) * std::max(0.0, x.height()); };
  const double inter = intersection_area(a, b);
  const double uni = extent(a) + extent(b) - inter;
  if (uni <= 0) return a == b ? 1.0 : 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_mask(const Mask& a, const Mask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    std::ostringstream os;
    os << "mask size mismatch: " << a.width() << "x" << a.height() << " vs " << b.width() << "x"
       << b.height();
    throw std::invalid_argument(os.str());
  }
  // Walk both run lists in lockstep; each step consumes the shorter remaining run.
  const auto& ra = a.runs();
  const auto& rb = b.runs();
  std::size_t ia = 0, ib = 0;
  std::uint64_t left_a = ra.empty() ? 0 : ra[0];
  std::uint64_t left_b = rb.empty() ? 0 : rb[0];
  std::uint64_t inter = 0, uni = 0;
  while (ia < ra.size() && ib < rb.size()) {
    if (left_a == 0) {
      if (++ia < ra.size()) left_a = ra[ia];
      continue;
    }
    if (left_b == 0) {
      if (++ib < rb.size()) left_b = rb[ib];
      continue;
    }
    const std::uint64_t step = std::min(left_a, left_b);
    const bool fa = ia % 2 == 1;
    const bool fb = ib % 2 == 1;
    if (fa && fb) inter += step;
    if (fa || fb) uni += step;
    left_a -= step;
    left_b -= step;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

int scale_coord(double v, int extent) {
  const double scaled = std::round(v * kNormScale / extent);
  return static_cast<int>(std::clamp(scaled, 0.0, static_cast<double>(kNormScale)));
}

}  // namespace

NormBBox normalize_box(const BBox& box, int image_width, int image_height,
                       std::vector<Diagnostic>* warnings) {
  if (image_width <= 0 || image_height <= 0) {
    throw std::invalid_argument("image dimensions must be positive");
  }
  const double w = image_width;
  const double h = image_height;
  BBox clamped{std::clamp(box.x1, 0.0, w), std::clamp(box.y1, 0.0, h), std::clamp(box.x2, 0.0, w),
               std::clamp(box.y2, 0.0, h)};
  if (!(clamped == box) && warnings != nullptr) {
    std::ostringstream os;
    os << "box (" << box.x1 << ", " << box.y1 << ", " << box.x2 << ", " << box.y2
       << ") clamped to image " << image_width << "x" << image_height;
    warnings->push_back(Diagnostic{"box_clamped", os.str(), 0});
  }
  return NormBBox{scale_coord(clamped.x1, image_width), scale_coord(clamped.y1, image_height),
                  scale_coord(clamped.x2, image_width), scale_coord(clamped.y2, image_height)};
}

BBox denormalize_box(const NormBBox& box, int image_width, int image_height) {
  const double sx = static_cast<double>(image_width) / kNormScale;
  const double sy = static_cast<double>(image_height) / kNormScale;
  return BBox{box.x1 * sx, box.y1 * sy, box.x2 * sx, box.y2 * sy};
}

BBox union_box(const BBox& a, const BBox& b) {
  return BBox{std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
              std::max(a.y2, b.y2)};
}

double Candidate::area() const {
  if (mask) return static_cast<double>(mask->foreground());
  return box.area();
}

double candidate_iou(const Candidate& a, const Candidate& b) {
  if (a.mask && b.mask && a.mask->width() == b.mask->width() &&
      a.mask->height() == b.mask->height()) {
    return iou_mask(*a.mask, *b.mask);
  }
  return iou_box(a.box, b.box);
}

std::vector<std::size_t> nms_by_area_indices(std::span<const Candidate> candidates,
                                             double iou_threshold, std::size_t k) {
  std::vector<double> areas(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) areas[i] = candidates[i].area();
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&areas](std::size_t a, std::size_t b) { return areas[a] > areas[b]; });

  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    if (kept.size() >= k) break;
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t s) {
      return candidate_iou(candidates[idx], candidates[s]) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

std::vector<Candidate> nms_by_area(std::span<const Candidate> candidates, double iou_threshold,
                                   std::size_t k) {
  std::vector<Candidate> out;
  for (std::size_t idx : nms_by_area_indices(candidates, iou_threshold, k)) {
    out.push_back(candidates[idx]);
  }
  return out;
}

}  // namespace svg::geometry
