#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace svg {

// Upper bound on outgoing relations kept per subject region.
inline constexpr std::size_t kMaxRelationsPerSubject = 20;
// Region ids live in [0, kMaxRegionId]; at most 99 regions per image.
inline constexpr int kMaxRegionId = 98;
inline constexpr int kMaxDepth = 255;

// Thrown when a graph cannot be processed because its references are broken.
struct StructuralError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Diagnostic {
  std::string code;     // short machine-readable tag, e.g. "dangling_relation"
  std::string message;  // human-readable detail
  std::size_t line = 0; // 1-based source line when the diagnostic came from text, else 0
};

// Axis-aligned pixel box, top-left (x1, y1) and bottom-right (x2, y2).
struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const;
  bool well_formed() const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

// Binary raster stored as column-major run lengths. Runs alternate
// background/foreground and always start with a (possibly empty) background run.
class Mask {
 public:
  Mask() = default;
  // Throws std::invalid_argument unless the runs cover exactly width*height pixels.
  Mask(int width, int height, std::vector<std::uint32_t> runs);

  // raster is column-major: pixel (x, y) lives at index x*height + y.
  static Mask encode(int width, int height, std::span<const std::uint8_t> raster);
  static Mask from_box(int width, int height, const BBox& box);

  std::vector<std::uint8_t> decode() const;
  bool at(int x, int y) const;

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<std::uint32_t>& runs() const { return runs_; }
  std::size_t foreground() const;
  // Tight pixel box around the foreground; nullopt for an empty mask.
  std::optional<BBox> bounds() const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint32_t> runs_;
};

enum class RelationCategory { spatial, interactional, functional, social, emotional };

inline constexpr RelationCategory kAllCategories[] = {
    RelationCategory::spatial, RelationCategory::interactional, RelationCategory::functional,
    RelationCategory::social, RelationCategory::emotional};

std::string_view to_string(RelationCategory c);
// Case-insensitive; accepts the bare name or "<name> relationship(s)". nullopt otherwise.
std::optional<RelationCategory> parse_category(std::string_view text);

struct Region {
  int id = 0;
  std::string name;
  BBox bbox;
  std::optional<Mask> mask;
  std::optional<int> depth;  // 0..255, lower is farther from the camera

  friend bool operator==(const Region&, const Region&) = default;
};

struct Relation {
  int subject_id = 0;
  int object_id = 0;
  std::string predicate;
  std::optional<RelationCategory> category;

  friend bool operator==(const Relation&, const Relation&) = default;
};

struct SceneGraph {
  std::string image_id;
  int image_width = 0;
  int image_height = 0;
  std::vector<Region> regions;
  std::vector<Relation> relations;

  const Region* find_region(int id) const;
  Region* find_region(int id);

  friend bool operator==(const SceneGraph&, const SceneGraph&) = default;
};

enum class Stage { raw, validated, filtered, edited, merged };

std::string_view to_string(Stage s);
std::optional<Stage> parse_stage(std::string_view text);

struct DatasetRecord {
  SceneGraph scene_graph;
  std::string source;
  std::vector<Stage> provenance;

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

// Provenance is append-only; the new tag is appended even when out of order
// and validate_record() reports the ordering violation.
void append_provenance(DatasetRecord& record, Stage stage);

// Lower-cased, trimmed, internal whitespace collapsed to single spaces.
std::string fold_predicate(std::string_view predicate);

// Identity of a relation for dedup, removal and verdict lookup.
struct RelationKey {
  int subject_id = 0;
  int object_id = 0;
  std::string predicate;  // folded

  static RelationKey of(const Relation& r);
  auto operator<=>(const RelationKey&) const = default;
};

// Dedups relations by RelationKey (first occurrence wins), drops self-loops and
// empty predicates, and keeps at most kMaxRelationsPerSubject per subject in
// input order. Throws StructuralError on duplicate region ids or dangling
// relation endpoints.
SceneGraph canonicalize(const SceneGraph& graph);

struct Violation {
  std::string field;  // e.g. "regions[2].depth"
  std::string rule;   // e.g. "depth_range"
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

std::vector<Violation> validate(const SceneGraph& graph);
std::vector<Violation> validate_record(const DatasetRecord& record);

}  // namespace svg
