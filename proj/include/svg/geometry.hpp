#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "svg/core.hpp"

namespace svg::geometry {

inline constexpr int kNormScale = 1000;

// Box in the 0..1000 coordinate frame used by the region-token grammar.
struct NormBBox {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  bool well_formed() const;
  friend bool operator==(const NormBBox&, const NormBBox&) = default;
};

// Intersection over union. A zero-union pair scores 1 only when the boxes are identical.
double iou_box(const BBox& a, const BBox& b);
double intersection_area(const BBox& a, const BBox& b);

// Foreground IoU; two empty masks score 1. Throws std::invalid_argument on a size mismatch.
double iou_mask(const Mask& a, const Mask& b);

// Scales pixel coordinates into 0..1000 with round-half-away-from-zero. Boxes
// reaching outside the image are clamped first and a "box_clamped" diagnostic
// is appended to `warnings` when provided.
NormBBox normalize_box(const BBox& box, int image_width, int image_height,
                       std::vector<Diagnostic>* warnings = nullptr);
BBox denormalize_box(const NormBBox& box, int image_width, int image_height);

BBox union_box(const BBox& a, const BBox& b);

struct Candidate {
  BBox box;
  std::optional<Mask> mask;

  // Mask foreground when a mask is present, box area otherwise.
  double area() const;
  friend bool operator==(const Candidate&, const Candidate&) = default;
};

// Mask IoU when both candidates carry same-sized masks, box IoU otherwise.
double candidate_iou(const Candidate& a, const Candidate& b);

// Greedy area-ordered suppression. Candidates are visited by descending area
// (ties keep input order); a candidate survives when its IoU with every earlier
// survivor is below `iou_threshold`. Returns input indices of at most k
// survivors, largest first.
std::vector<std::size_t> nms_by_area_indices(std::span<const Candidate> candidates,
                                             double iou_threshold, std::size_t k);
std::vector<Candidate> nms_by_area(std::span<const Candidate> candidates, double iou_threshold,
                                   std::size_t k);

}  // namespace svg::geometry
