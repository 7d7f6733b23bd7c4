#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "svg/core.hpp"
#include "svg/geometry.hpp"

namespace svg::sgtext {

struct ParseError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// `region{i}`, optionally followed by ` <mask> <pos>` and a box span.
struct RegionToken {
  int id = 0;
  bool has_mask_pos = false;
  std::optional<geometry::NormBBox> box;

  std::string to_string() const;
  friend bool operator==(const RegionToken&, const RegionToken&) = default;
};

// `<|box_start|>(x1,y1),(x2,y2)<|box_end|>`
std::string format_box(const geometry::NormBBox& box);

// Parses a token at the start of `text` (leading whitespace allowed) and
// reports how many bytes were consumed.
std::optional<RegionToken> parse_region_token(std::string_view text, std::size_t* consumed = nullptr);

// Every well-formed box span in `text`, in order of appearance.
std::vector<geometry::NormBBox> extract_boxes(std::string_view text);

struct ObjectLine {
  int id = 0;
  std::string name;
  std::optional<geometry::NormBBox> box;

  friend bool operator==(const ObjectLine&, const ObjectLine&) = default;
};

struct RelationItem {
  int object_id = 0;
  std::string predicate;

  friend bool operator==(const RelationItem&, const RelationItem&) = default;
};

struct RelationLine {
  int subject_id = 0;
  std::vector<RelationItem> items;

  friend bool operator==(const RelationLine&, const RelationLine&) = default;
};

// Text-level view of an `Objects:` / `Relations:` block pair.
struct SgTextDocument {
  std::vector<ObjectLine> objects;
  std::vector<RelationLine> relations;

  friend bool operator==(const SgTextDocument&, const SgTextDocument&) = default;
};

// How each input line was classified. The four counters always sum to the
// number of input lines, and `rejected` equals the number of diagnostics with
// code "rejected_line".
struct LineTally {
  std::size_t total = 0;
  std::size_t accepted = 0;  // headers, object lines, relation lines
  std::size_t blank = 0;
  std::size_t ignored = 0;   // text before the Objects: header
  std::size_t rejected = 0;
};

struct ParsedDocument {
  SgTextDocument document;
  std::vector<Diagnostic> diagnostics;
  LineTally tally;
};

// Throws ParseError when no `Objects:` header is present.
ParsedDocument parse_document(std::string_view text);
std::string emit_document(const SgTextDocument& document);

struct ParsedSceneGraph {
  SceneGraph graph;
  std::vector<Diagnostic> diagnostics;
  LineTally tally;
  // Regions whose object line carried no box; their bbox is all zeros.
  std::vector<int> boxless_regions;
};

// Boxes are mapped back from the 0..1000 frame into pixels.
// Throws ParseError when no `Objects:` header is present.
ParsedSceneGraph parse_scene_graph_text(std::string_view text, int image_width, int image_height);

// Relations are grouped by subject in region order; subjects without relations
// are omitted. Every line, headers included, ends with '\n'.
std::string emit_scene_graph_text(const SceneGraph& graph, bool with_boxes);

// Items of one relation line body: `region3 standing on, region7 beside`.
// Malformed items are skipped and reported.
std::vector<RelationItem> parse_relation_items(std::string_view body, std::size_t line,
                                               std::vector<Diagnostic>& diagnostics);

// ---------------------------------------------------------------------------
// Edit sets

struct RelationAddition {
  int subject_id = 0;
  std::string predicate;
  int object_id = 0;
  std::optional<RelationCategory> category;

  friend bool operator==(const RelationAddition&, const RelationAddition&) = default;
};

struct RelationRemoval {
  int subject_id = 0;
  std::string predicate;
  int object_id = 0;

  friend bool operator==(const RelationRemoval&, const RelationRemoval&) = default;
};

struct EditSet {
  std::map<int, std::string> renames;
  std::vector<RelationAddition> additions;
  std::vector<RelationRemoval> removals;

  bool empty() const { return renames.empty() && additions.empty() && removals.empty(); }
  friend bool operator==(const EditSet&, const EditSet&) = default;
};

struct ParsedEditSet {
  EditSet edits;
  std::vector<Diagnostic> diagnostics;
};

// Locates one object literal inside arbitrary text (prose, code fences,
// python-style quoting) and reads it as an edit set keyed by object id.
// Throws ParseError when no object literal can be recovered.
ParsedEditSet parse_edit_set(std::string_view text);

// Canonical compact serialization, readable by parse_edit_set.
std::string emit_edit_set(const EditSet& edits);

// ---------------------------------------------------------------------------
// Teacher relation responses

// A subject block of the annotation response format:
//   Subject: region4
//   Description: ...
//   Spatial: region2 stands on top of, region1 left of
struct SubjectAnnotation {
  int subject_id = 0;
  std::optional<std::string> description;
  std::vector<Relation> relations;
};

struct ParsedAnnotation {
  std::vector<SubjectAnnotation> subjects;
  std::vector<Diagnostic> diagnostics;
};

ParsedAnnotation parse_annotation_response(std::string_view text);

}  // namespace svg::sgtext
