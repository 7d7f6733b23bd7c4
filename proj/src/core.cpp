#include "svg/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace svg {

double BBox::area() const {
  if (!well_formed()) return 0.0;
  return width() * height();
}

bool BBox::well_formed() const {
  return x1 <= x2 && y1 <= y2 && x1 >= 0 && y1 >= 0;
}

// ---------------------------------------------------------------------------
// Mask

Mask::Mask(int width, int height, std::vector<std::uint32_t> runs)
    : width_(width), height_(height), runs_(std::move(runs)) {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("mask dimensions must be positive");
  }
  const std::uint64_t total =
      std::accumulate(runs_.begin(), runs_.end(), std::uint64_t{0});
  if (total != static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height)) {
    std::ostringstream os;
    os << "mask runs cover " << total << " pixels, expected " << width << "x" << height;
    throw std::invalid_argument(os.str());
  }
}

Mask Mask::encode(int width, int height, std::span<const std::uint8_t> raster) {
  if (width <= 0 || height <= 0 ||
      raster.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw std::invalid_argument("raster size does not match mask dimensions");
  }
  std::vector<std::uint32_t> runs;
  bool current = false;
  std::uint32_t count = 0;
  for (std::uint8_t px : raster) {
    const bool fg = px != 0;
    if (fg != current) {
      runs.push_back(count);
      count = 0;
      current = fg;
    }
    ++count;
  }
  runs.push_back(count);
  return Mask(width, height, std::move(runs));
}

Mask Mask::from_box(int width, int height, const BBox& box) {
  std::vector<std::uint8_t> raster(static_cast<std::size_t>(width) * height, 0);
  const int x_lo = std::clamp(static_cast<int>(std::lround(box.x1)), 0, width);
  const int x_hi = std::clamp(static_cast<int>(std::lround(box.x2)), 0, width);
  const int y_lo = std::clamp(static_cast<int>(std::lround(box.y1)), 0, height);
  const int y_hi = std::clamp(static_cast<int>(std::lround(box.y2)), 0, height);
  for (int x = x_lo; x < x_hi; ++x) {
    for (int y = y_lo; y < y_hi; ++y) {
      raster[static_cast<std::size_t>(x) * height + y] = 1;
    }
  }
  return encode(width, height, raster);
}

std::vector<std::uint8_t> Mask::decode() const {
  std::vector<std::uint8_t> raster;
  raster.reserve(static_cast<std::size_t>(width_) * height_);
  std::uint8_t value = 0;
  for (std::uint32_t run : runs_) {
    raster.insert(raster.end(), run, value);
    value ^= 1;
  }
  return raster;
}

bool Mask::at(int x, int y) const {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return false;
  const std::uint64_t index = static_cast<std::uint64_t>(x) * height_ + y;
  std::uint64_t pos = 0;
  bool fg = false;
  for (std::uint32_t run : runs_) {
    if (index < pos + run) return fg;
    pos += run;
    fg = !fg;
  }
  return false;
}

std::size_t Mask::foreground() const {
  std::size_t total = 0;
  for (std::size_t i = 1; i < runs_.size(); i += 2) total += runs_[i];
  return total;
}

std::optional<BBox> Mask::bounds() const {
  if (foreground() == 0) return std::nullopt;
  std::uint64_t pos = 0;
  int min_x = width_, min_y = height_, max_x = -1, max_y = -1;
  for (std::size_t i = 0; i < runs_.size(); ++i) {
    const std::uint64_t run = runs_[i];
    if (i % 2 == 1 && run > 0) {
      const auto first = pos;
      const auto last = pos + run - 1;
      const int x_first = static_cast<int>(first / height_);
      const int x_last = static_cast<int>(last / height_);
      min_x = std::min(min_x, x_first);
      max_x = std::max(max_x, x_last);
      if (x_first != x_last) {
        // Crossing a column boundary touches both the bottom and the top row.
        min_y = 0;
        max_y = height_ - 1;
      } else {
        min_y = std::min(min_y, static_cast<int>(first % height_));
        max_y = std::max(max_y, static_cast<int>(last % height_));
      }
    }
    pos += run;
  }
  return BBox{static_cast<double>(min_x), static_cast<double>(min_y),
              static_cast<double>(max_x + 1), static_cast<double>(max_y + 1)};
}

// ---------------------------------------------------------------------------
// Enumerations

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view to_string(RelationCategory c) {
  switch (c) {
    case RelationCategory::spatial: return "spatial";
    case RelationCategory::interactional: return "interactional";
    case RelationCategory::functional: return "functional";
    case RelationCategory::social: return "social";
    case RelationCategory::emotional: return "emotional";
  }
  return "unknown";
}

std::optional<RelationCategory> parse_category(std::string_view text) {
  std::string s = lower(trim(text));
  for (std::string_view suffix : {" relationships", " relationship", " relations", " relation"}) {
    if (s.size() > suffix.size() && s.ends_with(suffix)) {
      s.resize(s.size() - suffix.size());
      break;
    }
  }
  for (RelationCategory c : kAllCategories) {
    if (s == to_string(c)) return c;
  }
  return std::nullopt;
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::raw: return "raw";
    case Stage::validated: return "validated";
    case Stage::filtered: return "filtered";
    case Stage::edited: return "edited";
    case Stage::merged: return "merged";
  }
  return "unknown";
}

std::optional<Stage> parse_stage(std::string_view text) {
  for (Stage s : {Stage::raw, Stage::validated, Stage::filtered, Stage::edited, Stage::merged}) {
    if (text == to_string(s)) return s;
  }
  return std::nullopt;
}

void append_provenance(DatasetRecord& record, Stage stage) {
  record.provenance.push_back(stage);
}

// ---------------------------------------------------------------------------
// Graph helpers

const Region* SceneGraph::find_region(int id) const {
  for (const auto& r : regions) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

Region* SceneGraph::find_region(int id) {
  for (auto& r : regions) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

std::string fold_predicate(std::string_view predicate) {
  std::string out;
  out.reserve(predicate.size());
  bool pending_space = false;
  for (unsigned char c : trim(predicate)) {
    if (std::isspace(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

RelationKey RelationKey::of(const Relation& r) {
  return RelationKey{r.subject_id, r.object_id, fold_predicate(r.predicate)};
}

SceneGraph canonicalize(const SceneGraph& graph) {
  std::set<int> ids;
  for (const auto& region : graph.regions) {
    if (!ids.insert(region.id).second) {
      throw StructuralError("duplicate region id " + std::to_string(region.id) + " in image '" +
                            graph.image_id + "'");
    }
  }

  SceneGraph out = graph;
  out.relations.clear();
  std::set<RelationKey> seen;
  std::map<int, std::size_t> per_subject;
  for (std::size_t i = 0; i < graph.relations.size(); ++i) {
    const Relation& rel = graph.relations[i];
    if (!ids.contains(rel.subject_id) || !ids.contains(rel.object_id)) {
      std::ostringstream os;
      os << "relation " << i << " (" << rel.subject_id << ", \"" << rel.predicate << "\", "
         << rel.object_id << ") in image '" << graph.image_id
         << "' references a missing region";
      throw StructuralError(os.str());
    }
    if (rel.subject_id == rel.object_id) continue;
    RelationKey key = RelationKey::of(rel);
    if (key.predicate.empty()) continue;
    if (!seen.insert(std::move(key)).second) continue;
    if (per_subject[rel.subject_id] >= kMaxRelationsPerSubject) continue;
    ++per_subject[rel.subject_id];
    out.relations.push_back(rel);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation

std::vector<Violation> validate(const SceneGraph& graph) {
  std::vector<Violation> out;
  auto add = [&out](std::string field, std::string rule, std::string message) {
    out.push_back(Violation{std::move(field), std::move(rule), std::move(message)});
  };

  if (graph.image_width <= 0 || graph.image_height <= 0) {
    add("image_size", "positive_dimensions", "image dimensions must be positive");
  }

  std::set<int> ids;
  for (std::size_t i = 0; i < graph.regions.size(); ++i) {
    const Region& r = graph.regions[i];
    const std::string field = "regions[" + std::to_string(i) + "]";
    if (r.id < 0 || r.id > kMaxRegionId) {
      add(field + ".id", "id_range",
          "region id " + std::to_string(r.id) + " outside [0, " + std::to_string(kMaxRegionId) + "]");
    }
    if (!ids.insert(r.id).second) {
      add(field + ".id", "unique_id", "duplicate region id " + std::to_string(r.id));
    }
    if (!r.bbox.well_formed()) {
      add(field + ".bbox", "bbox_order", "box must satisfy 0 <= x1 <= x2 and 0 <= y1 <= y2");
    }
    if (r.depth && (*r.depth < 0 || *r.depth > kMaxDepth)) {
      add(field + ".depth", "depth_range",
          "depth " + std::to_string(*r.depth) + " outside [0, 255]");
    }
    if (r.mask) {
      if (r.mask->width() != graph.image_width || r.mask->height() != graph.image_height) {
        add(field + ".mask", "mask_dimensions", "mask dimensions differ from the image");
      } else if (r.mask->foreground() == 0) {
        add(field + ".mask", "empty_mask", "mask has no foreground pixels");
      }
    }
  }

  std::map<int, std::size_t> per_subject;
  for (std::size_t i = 0; i < graph.relations.size(); ++i) {
    const Relation& rel = graph.relations[i];
    const std::string field = "relations[" + std::to_string(i) + "]";
    if (rel.subject_id == rel.object_id) {
      add(field, "self_loop", "subject and object are both region " + std::to_string(rel.subject_id));
    }
    if (!ids.contains(rel.subject_id)) {
      add(field + ".subject_id", "dangling_endpoint",
          "subject region " + std::to_string(rel.subject_id) + " does not exist");
    }
    if (!ids.contains(rel.object_id)) {
      add(field + ".object_id", "dangling_endpoint",
          "object region " + std::to_string(rel.object_id) + " does not exist");
    }
    if (fold_predicate(rel.predicate).empty()) {
      add(field + ".predicate", "non_empty_predicate", "predicate is empty");
    }
    if (++per_subject[rel.subject_id] == kMaxRelationsPerSubject + 1) {
      add(field, "relation_cap",
          "region " + std::to_string(rel.subject_id) + " has more than " +
              std::to_string(kMaxRelationsPerSubject) + " outgoing relations");
    }
  }
  return out;
}

std::vector<Violation> validate_record(const DatasetRecord& record) {
  std::vector<Violation> out = validate(record.scene_graph);
  for (std::size_t i = 1; i < record.provenance.size(); ++i) {
    if (record.provenance[i] < record.provenance[i - 1]) {
      out.push_back(Violation{"provenance[" + std::to_string(i) + "]", "stage_order",
                              std::string(to_string(record.provenance[i])) + " recorded after " +
                                  std::string(to_string(record.provenance[i - 1]))});
    }
  }
  return out;
}

}  // namespace svg
