#pragma once

// Generators and independent oracles shared by the unit tests and the
// acceptance binary. The oracles deliberately avoid calling library code.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "svg/core.hpp"
#include "svg/geometry.hpp"

namespace svgtest {

inline std::filesystem::path data_dir() { return std::filesystem::path(SVG_TEST_DATA_DIR); }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("svgkit-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

using Rng = std::mt19937_64;

inline int uniform(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
inline bool coin(Rng& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

// Integer-cornered box inside [0,w] x [0,h] with positive extent.
inline svg::BBox random_box(Rng& rng, int w, int h) {
  const int x1 = uniform(rng, 0, w - 1);
  const int y1 = uniform(rng, 0, h - 1);
  const int x2 = uniform(rng, x1 + 1, w);
  const int y2 = uniform(rng, y1 + 1, h);
  return svg::BBox{double(x1), double(y1), double(x2), double(y2)};
}

inline const std::vector<std::string>& predicate_vocabulary() {
  static const std::vector<std::string> v = {"above",  "below",   "left of", "right of",  "on",    "under",
                                             "near",   "holding", "wearing", "part of",   "loves", "looking at",
                                             "behind", "in front of", "standing on", "beside", "friend of"};
  return v;
}

inline const std::vector<std::string>& name_vocabulary() {
  static const std::vector<std::string> v = {"person", "dog", "tree", "car", "umbrella", "grass", "sky", "fence"};
  return v;
}

struct GraphOptions {
  int max_regions = 10;
  int max_relations = 30;
  double mask_probability = 0.2;
  double depth_probability = 0.5;
  int min_size = 20;
  int max_size = 400;
};

inline svg::SceneGraph random_graph(Rng& rng, const GraphOptions& opt = {}) {
  svg::SceneGraph g;
  g.image_id = "img" + std::to_string(uniform(rng, 0, 999999));
  g.image_width = uniform(rng, opt.min_size, opt.max_size);
  g.image_height = uniform(rng, opt.min_size, opt.max_size);
  const int n = uniform(rng, 0, opt.max_regions);
  std::vector<int> ids(svg::kMaxRegionId + 1);
  for (int i = 0; i <= svg::kMaxRegionId; ++i) ids[i] = i;
  std::shuffle(ids.begin(), ids.end(), rng);
  for (int i = 0; i < n; ++i) {
    svg::Region r;
    r.id = ids[i];
    r.name = name_vocabulary()[uniform(rng, 0, int(name_vocabulary().size()) - 1)];
    r.bbox = random_box(rng, g.image_width, g.image_height);
    if (coin(rng, opt.mask_probability)) r.mask = svg::Mask::from_box(g.image_width, g.image_height, r.bbox);
    if (coin(rng, opt.depth_probability)) r.depth = uniform(rng, 0, svg::kMaxDepth);
    g.regions.push_back(std::move(r));
  }
  if (n >= 2) {
    const int m = uniform(rng, 0, opt.max_relations);
    for (int i = 0; i < m; ++i) {
      const int a = uniform(rng, 0, n - 1);
      int b = uniform(rng, 0, n - 2);
      if (b >= a) ++b;
      svg::Relation rel;
      rel.subject_id = g.regions[a].id;
      rel.object_id = g.regions[b].id;
      rel.predicate = predicate_vocabulary()[uniform(rng, 0, int(predicate_vocabulary().size()) - 1)];
      const int c = uniform(rng, -1, 4);
      if (c >= 0) rel.category = svg::kAllCategories[c];
      g.relations.push_back(std::move(rel));
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Oracles

// Box IoU by counting unit cells; only valid for integer-cornered boxes.
inline double raster_iou(const svg::BBox& a, const svg::BBox& b) {
  const int x0 = int(std::min(a.x1, b.x1)), x1 = int(std::max(a.x2, b.x2));
  const int y0 = int(std::min(a.y1, b.y1)), y1 = int(std::max(a.y2, b.y2));
  long inter = 0, uni = 0;
  for (int x = x0; x < x1; ++x) {
    for (int y = y0; y < y1; ++y) {
      const bool in_a = x >= a.x1 && x < a.x2 && y >= a.y1 && y < a.y2;
      const bool in_b = x >= b.x1 && x < b.x2 && y >= b.y1 && y < b.y2;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  if (uni == 0) return a == b ? 1.0 : 0.0;
  return double(inter) / double(uni);
}

// Greedy NMS restated as a fixed point: a candidate survives iff no
// higher-ranked survivor overlaps it at or above the threshold. Ranking is by
// area descending with input order breaking ties; areas are integers here.
inline std::vector<std::size_t> nms_oracle(const std::vector<svg::BBox>& boxes, double threshold, std::size_t k) {
  std::vector<std::size_t> order(boxes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto area = [&](std::size_t i) { return long((boxes[i].x2 - boxes[i].x1) * (boxes[i].y2 - boxes[i].y1)); };
  // Selection sort keeps the tie rule obvious.
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::size_t best = i;
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (area(order[j]) > area(order[best])) best = j;
    }
    std::rotate(order.begin() + i, order.begin() + best, order.begin() + best + 1);
  }
  std::vector<bool> survives(boxes.size(), false);
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < order.size(); ++r) {
    bool ok = true;
    for (std::size_t q = 0; q < r; ++q) {
      if (survives[order[q]] && raster_iou(boxes[order[q]], boxes[order[r]]) >= threshold) ok = false;
    }
    survives[order[r]] = ok;
    if (ok) out.push_back(order[r]);
  }
  if (out.size() > k) out.resize(k);
  return out;
}

// Spatial truth on 0..1000 integer boxes, written against doubled coordinates
// so centre comparisons stay in integers.
struct IntBox {
  int x1, y1, x2, y2;
};

inline bool oracle_above(IntBox s, IntBox o) {
  const int centre_s2 = s.y1 + s.y2, centre_o2 = o.y1 + o.y2;
  const int overhang2 = 2 * (s.y2 - o.y1);
  const int smaller = std::min(s.y2 - s.y1, o.y2 - o.y1);
  return centre_s2 < centre_o2 && overhang2 < smaller;  // overhang < 0.5 * smaller
}

inline IntBox flip_y(IntBox b) { return IntBox{b.x1, 1000 - b.y2, b.x2, 1000 - b.y1}; }
inline IntBox transpose(IntBox b) { return IntBox{b.y1, b.x1, b.y2, b.x2}; }

inline bool oracle_below(IntBox s, IntBox o) { return oracle_above(flip_y(s), flip_y(o)); }
inline bool oracle_left(IntBox s, IntBox o) { return oracle_above(transpose(s), transpose(o)); }
inline bool oracle_right(IntBox s, IntBox o) { return oracle_below(transpose(s), transpose(o)); }
inline bool oracle_overlap(IntBox s, IntBox o) {
  return std::min(s.x2, o.x2) > std::max(s.x1, o.x1) && std::min(s.y2, o.y2) > std::max(s.y1, o.y1);
}

// Best achievable number of matched GT triplets over every one-to-one
// assignment. `ok[g][p]` says whether prediction p may match GT g.
inline std::size_t max_matching(const std::vector<std::vector<bool>>& ok) {
  const std::size_t gts = ok.size();
  if (gts == 0) return 0;
  const std::size_t preds = ok[0].size();
  std::size_t best = 0;
  std::vector<bool> used(preds, false);
  auto rec = [&](auto&& self, std::size_t g, std::size_t count) -> void {
    if (g == gts) {
      best = std::max(best, count);
      return;
    }
    self(self, g + 1, count);
    for (std::size_t p = 0; p < preds; ++p) {
      if (!used[p] && ok[g][p]) {
        used[p] = true;
        self(self, g + 1, count + 1);
        used[p] = false;
      }
    }
  };
  rec(rec, 0, 0);
  return best;
}

}  // namespace svgtest
