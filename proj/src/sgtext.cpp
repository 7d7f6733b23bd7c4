#include "svg/sgtext.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "svg/json_repair.hpp"

namespace svg::sgtext {

using geometry::NormBBox;
using nlohmann::json;

namespace {

constexpr std::string_view kBoxStart = "<|box_start|>";
constexpr std::string_view kBoxEnd = "<|box_end|>";

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool starts_with_icase(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

// Minimal cursor over a string_view.
class Cursor {
 public:
  explicit Cursor(std::string_view text) : text_(text) {}

  std::size_t pos() const { return pos_; }
  void reset(std::size_t pos) { pos_ = pos; }
  bool done() const { return pos_ >= text_.size(); }
  std::string_view rest() const { return text_.substr(pos_); }

  void skip_ws() {
    while (!done() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool eat(std::string_view literal, bool icase = false) {
    const auto r = rest();
    if (icase ? starts_with_icase(r, literal) : r.starts_with(literal)) {
      pos_ += literal.size();
      return true;
    }
    return false;
  }

  std::optional<int> integer() {
    const auto r = rest();
    std::size_t n = 0;
    while (n < r.size() && std::isdigit(static_cast<unsigned char>(r[n]))) ++n;
    if (n == 0 || n > 9) return std::nullopt;
    int value = 0;
    std::from_chars(r.data(), r.data() + n, value);
    pos_ += n;
    return value;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

std::optional<std::pair<int, int>> parse_point(Cursor& c) {
  c.skip_ws();
  if (!c.eat("(")) return std::nullopt;
  c.skip_ws();
  auto x = c.integer();
  if (!x) return std::nullopt;
  c.skip_ws();
  if (!c.eat(",")) return std::nullopt;
  c.skip_ws();
  auto y = c.integer();
  if (!y) return std::nullopt;
  c.skip_ws();
  if (!c.eat(")")) return std::nullopt;
  return std::pair{*x, *y};
}

// Raw box span at the cursor; coordinates may still be out of range or inverted.
std::optional<NormBBox> parse_box_span(Cursor& c) {
  const std::size_t start = c.pos();
  c.skip_ws();
  if (!c.eat(kBoxStart)) {
    c.reset(start);
    return std::nullopt;
  }
  auto p1 = parse_point(c);
  c.skip_ws();
  const bool comma = p1 && c.eat(",");
  auto p2 = comma ? parse_point(c) : std::nullopt;
  c.skip_ws();
  if (!p1 || !p2 || !c.eat(kBoxEnd)) {
    c.reset(start);
    return std::nullopt;
  }
  return NormBBox{p1->first, p1->second, p2->first, p2->second};
}

// Brings a raw box into the 0..1000 frame with ordered corners.
NormBBox tidy_box(NormBBox box, std::size_t line, std::vector<Diagnostic>& diagnostics) {
  const NormBBox raw = box;
  auto clamp = [](int v) { return std::clamp(v, 0, geometry::kNormScale); };
  box = NormBBox{clamp(box.x1), clamp(box.y1), clamp(box.x2), clamp(box.y2)};
  if (box.x1 > box.x2) std::swap(box.x1, box.x2);
  if (box.y1 > box.y2) std::swap(box.y1, box.y2);
  if (!(box == raw)) {
    diagnostics.push_back(Diagnostic{"box_adjusted", "box clamped to 0..1000 or corners reordered", line});
  }
  return box;
}

// Strips list markers and markdown emphasis that models like to add.
std::string_view strip_decoration(std::string_view line) {
  line = trim(line);
  if (line.size() >= 2 && (line[0] == '-' || line[0] == '*') && line[1] == ' ') {
    line = trim(line.substr(2));
  }
  return line;
}

bool is_header(std::string_view line, std::string_view word) {
  std::string s = lower(trim(line));
  auto is_decor = [](char c) { return c == '*' || c == '#' || c == '_' || c == '`' || c == ' '; };
  while (!s.empty() && is_decor(s.front())) s.erase(s.begin());
  while (!s.empty() && is_decor(s.back())) s.pop_back();
  if (s.ends_with(':')) s.pop_back();
  while (!s.empty() && is_decor(s.back())) s.pop_back();
  return s == word;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

// `region{i}` followed by ':'; returns the id and leaves the cursor after the colon.
std::optional<int> parse_line_subject(Cursor& c) {
  std::size_t consumed = 0;
  auto token = parse_region_token(c.rest(), &consumed);
  if (!token) return std::nullopt;
  c.reset(c.pos() + consumed);
  c.skip_ws();
  if (!c.eat(":")) return std::nullopt;
  return token->id;
}

std::string single_line(std::string_view s) {
  std::string out(s);
  std::replace(out.begin(), out.end(), '\n', ' ');
  std::replace(out.begin(), out.end(), '\r', ' ');
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tokens

std::string format_box(const NormBBox& box) {
  std::ostringstream os;
  os << kBoxStart << '(' << box.x1 << ',' << box.y1 << "),(" << box.x2 << ',' << box.y2 << ')'
     << kBoxEnd;
  return os.str();
}

std::string RegionToken::to_string() const {
  std::string out = "region" + std::to_string(id);
  if (has_mask_pos) out += " <mask> <pos>";
  if (box) out += " " + format_box(*box);
  return out;
}

std::optional<RegionToken> parse_region_token(std::string_view text, std::size_t* consumed) {
  Cursor c(text);
  c.skip_ws();
  const bool angle = c.eat("<");
  if (!c.eat("region", /*icase=*/true)) return std::nullopt;
  auto id = c.integer();
  if (!id) return std::nullopt;
  if (angle && !c.eat(">")) return std::nullopt;

  RegionToken token{*id, false, std::nullopt};
  std::size_t end = c.pos();
  {
    Cursor probe = c;
    probe.skip_ws();
    if (probe.eat("<mask>")) {
      probe.skip_ws();
      if (probe.eat("<pos>")) {
        token.has_mask_pos = true;
        c = probe;
        end = c.pos();
      }
    }
  }
  if (auto box = parse_box_span(c)) {
    token.box = *box;
    end = c.pos();
  }
  if (consumed != nullptr) *consumed = end;
  return token;
}

std::vector<NormBBox> extract_boxes(std::string_view text) {
  std::vector<NormBBox> out;
  for (std::size_t pos = text.find(kBoxStart); pos != std::string_view::npos;
       pos = text.find(kBoxStart, pos + 1)) {
    Cursor c(text.substr(pos));
    if (auto box = parse_box_span(c)) {
      if (box->well_formed()) out.push_back(*box);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Document parsing

std::vector<RelationItem> parse_relation_items(std::string_view body, std::size_t line,
                                               std::vector<Diagnostic>& diagnostics) {
  std::vector<RelationItem> items;
  std::size_t start = 0;
  while (start <= body.size()) {
    std::size_t comma = body.find(',', start);
    if (comma == std::string_view::npos) comma = body.size();
    const std::string_view item = trim(body.substr(start, comma - start));
    start = comma + 1;
    if (item.empty()) continue;
    std::size_t consumed = 0;
    auto token = parse_region_token(item, &consumed);
    if (!token) {
      diagnostics.push_back(Diagnostic{"dropped_item",
                                       "relation item without an object region: '" +
                                           std::string(item) + "'",
                                       line});
      continue;
    }
    const std::string_view predicate = trim(item.substr(consumed));
    if (predicate.empty()) {
      diagnostics.push_back(
          Diagnostic{"dropped_item", "relation item without a predicate: '" + std::string(item) + "'",
                     line});
      continue;
    }
    items.push_back(RelationItem{token->id, std::string(predicate)});
  }
  return items;
}

ParsedDocument parse_document(std::string_view text) {
  enum class Block { preamble, objects, relations };
  ParsedDocument out;
  auto& diags = out.diagnostics;
  auto& tally = out.tally;
  const auto lines = split_lines(text);
  tally.total = lines.size();

  Block block = Block::preamble;
  bool saw_objects = false;
  auto reject = [&](std::size_t line_no, std::string message) {
    ++tally.rejected;
    diags.push_back(Diagnostic{"rejected_line", std::move(message), line_no});
  };

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const std::string_view raw = lines[i];
    if (trim(raw).empty()) {
      ++tally.blank;
      continue;
    }
    if (is_header(raw, "objects")) {
      if (saw_objects) {
        reject(line_no, "second Objects: header");
        continue;
      }
      saw_objects = true;
      block = Block::objects;
      ++tally.accepted;
      continue;
    }
    if (is_header(raw, "relations")) {
      if (block == Block::objects) {
        block = Block::relations;
        ++tally.accepted;
      } else if (block == Block::preamble) {
        ++tally.ignored;
      } else {
        reject(line_no, "second Relations: header");
      }
      continue;
    }
    if (block == Block::preamble) {
      ++tally.ignored;
      continue;
    }

    const std::string_view line = strip_decoration(raw);
    Cursor c(line);
    const auto subject = parse_line_subject(c);
    if (!subject) {
      reject(line_no, "expected 'region{i}:' at start of line: '" + std::string(line) + "'");
      continue;
    }

    if (block == Block::objects) {
      ObjectLine obj{*subject, {}, std::nullopt};
      std::string_view rest = trim(c.rest());
      const std::size_t box_at = rest.rfind(kBoxStart);
      if (box_at != std::string_view::npos) {
        Cursor bc(rest.substr(box_at));
        if (auto box = parse_box_span(bc)) {
          obj.box = tidy_box(*box, line_no, diags);
          if (!trim(bc.rest()).empty()) {
            diags.push_back(Diagnostic{"trailing_text", "text after box ignored", line_no});
          }
          rest = trim(rest.substr(0, box_at));
        } else {
          diags.push_back(Diagnostic{"malformed_box", "unparseable box span, region kept without box",
                                     line_no});
          rest = trim(rest.substr(0, box_at));
        }
      }
      obj.name = std::string(rest);
      out.document.objects.push_back(std::move(obj));
      ++tally.accepted;
      continue;
    }

    auto items = parse_relation_items(c.rest(), line_no, diags);
    if (items.empty()) {
      reject(line_no, "relation line without any well-formed item");
      continue;
    }
    out.document.relations.push_back(RelationLine{*subject, std::move(items)});
    ++tally.accepted;
  }

  if (!saw_objects) throw ParseError("no 'Objects:' header found in model output");
  return out;
}

std::string emit_document(const SgTextDocument& document) {
  std::string out = "Objects:\n";
  for (const auto& obj : document.objects) {
    out += "region" + std::to_string(obj.id) + ": " + single_line(obj.name);
    if (obj.box) out += " " + format_box(*obj.box);
    out += '\n';
  }
  out += "Relations:\n";
  for (const auto& rel : document.relations) {
    if (rel.items.empty()) continue;
    out += "region" + std::to_string(rel.subject_id) + ": ";
    for (std::size_t i = 0; i < rel.items.size(); ++i) {
      if (i > 0) out += ", ";
      std::string predicate = single_line(rel.items[i].predicate);
      std::replace(predicate.begin(), predicate.end(), ',', ' ');
      out += "region" + std::to_string(rel.items[i].object_id) + " " + predicate;
    }
    out += '\n';
  }
  return out;
}

ParsedSceneGraph parse_scene_graph_text(std::string_view text, int image_width, int image_height) {
  ParsedDocument doc = parse_document(text);
  ParsedSceneGraph out;
  out.diagnostics = std::move(doc.diagnostics);
  out.tally = doc.tally;
  out.graph.image_width = image_width;
  out.graph.image_height = image_height;

  std::set<int> ids;
  for (auto& obj : doc.document.objects) {
    if (!ids.insert(obj.id).second) {
      // The line was counted as accepted by the document pass; reclassify it.
      --out.tally.accepted;
      ++out.tally.rejected;
      out.diagnostics.push_back(Diagnostic{
          "rejected_line", "duplicate region" + std::to_string(obj.id) + ", first occurrence kept", 0});
      continue;
    }
    Region region;
    region.id = obj.id;
    region.name = std::move(obj.name);
    if (obj.box) {
      region.bbox = geometry::denormalize_box(*obj.box, image_width, image_height);
    } else {
      out.boxless_regions.push_back(obj.id);
    }
    out.graph.regions.push_back(std::move(region));
  }

  for (const auto& line : doc.document.relations) {
    for (const auto& item : line.items) {
      if (!ids.contains(line.subject_id) || !ids.contains(item.object_id)) {
        std::ostringstream os;
        os << "relation (region" << line.subject_id << ", \"" << item.predicate << "\", region"
           << item.object_id << ") references an undeclared region";
        out.diagnostics.push_back(Diagnostic{"dangling_relation", os.str(), 0});
        continue;
      }
      if (line.subject_id == item.object_id) {
        out.diagnostics.push_back(Diagnostic{
            "self_loop", "relation of region" + std::to_string(line.subject_id) + " to itself dropped", 0});
        continue;
      }
      out.graph.relations.push_back(Relation{line.subject_id, item.object_id, item.predicate, std::nullopt});
    }
  }
  return out;
}

std::string emit_scene_graph_text(const SceneGraph& graph, bool with_boxes) {
  SgTextDocument doc;
  for (const auto& region : graph.regions) {
    ObjectLine obj{region.id, region.name, std::nullopt};
    if (with_boxes) {
      obj.box = geometry::normalize_box(region.bbox, graph.image_width, graph.image_height);
    }
    doc.objects.push_back(std::move(obj));
  }
  for (const auto& region : graph.regions) {
    RelationLine line{region.id, {}};
    for (const auto& rel : graph.relations) {
      if (rel.subject_id == region.id) line.items.push_back(RelationItem{rel.object_id, rel.predicate});
    }
    if (!line.items.empty()) doc.relations.push_back(std::move(line));
  }
  return emit_document(doc);
}

// ---------------------------------------------------------------------------
// Edit sets

namespace {

enum class EditVerb { add, remove };

std::optional<EditVerb> parse_verb(std::string_view key) {
  const std::string k = lower(trim(key));
  if (k == "add" || k == "added" || k == "adds" || k == "addition" || k == "additions") {
    return EditVerb::add;
  }
  if (k == "remove" || k == "removed" || k == "removes" || k == "removal" || k == "removals" ||
      k == "delete" || k == "deleted") {
    return EditVerb::remove;
  }
  return std::nullopt;
}

std::optional<int> parse_object_key(std::string_view key) {
  std::string k = lower(trim(key));
  for (std::string_view prefix : {"region", "object_", "object", "obj_", "obj", "[", "#"}) {
    if (k.starts_with(prefix)) {
      k.erase(0, prefix.size());
      break;
    }
  }
  if (k.ends_with("]")) k.pop_back();
  if (k.empty() || k.size() > 9 ||
      !std::all_of(k.begin(), k.end(), [](unsigned char c) { return std::isdigit(c); })) {
    return std::nullopt;
  }
  return std::stoi(k);
}

std::optional<int> coerce_id(const json& value) {
  if (value.is_number_integer()) {
    const auto v = value.get<long long>();
    if (v < 0 || v > 1'000'000) return std::nullopt;
    return static_cast<int>(v);
  }
  if (value.is_number_float()) {
    const double v = value.get<double>();
    if (v >= 0 && v <= 1'000'000 && std::floor(v) == v) return static_cast<int>(v);
    return std::nullopt;
  }
  if (value.is_string()) return parse_object_key(value.get<std::string>());
  return std::nullopt;
}

// Turns {"4.rel.add.on": [8]} style keys into nested objects.
json unflatten(const json& object) {
  json out = json::object();
  for (const auto& [key, value] : object.items()) {
    if (key.find('.') == std::string::npos) {
      if (out.contains(key) && out[key].is_object() && value.is_object()) {
        out[key].update(value);
      } else {
        out[key] = value;
      }
      continue;
    }
    json* node = &out;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
      node = &(*node)[part];
      start = dot + 1;
    }
  }
  return out;
}

class EditReader {
 public:
  explicit EditReader(ParsedEditSet& out) : out_(out) {}

  void read_root(const json& root) {
    const json flat = unflatten(root);
    for (const auto& [key, value] : flat.items()) {
      auto id = parse_object_key(key);
      if (!id) {
        note("unknown_key", "ignored top-level key '" + key + "'");
        continue;
      }
      if (!value.is_object()) {
        note("malformed_entry", "entry for object " + key + " is not an object");
        continue;
      }
      read_object(*id, value);
    }
  }

 private:
  void note(std::string code, std::string message) {
    out_.diagnostics.push_back(Diagnostic{std::move(code), std::move(message), 0});
  }

  void read_object(int subject, const json& entry) {
    for (const auto& [key, value] : entry.items()) {
      const std::string k = lower(trim(key));
      if (k == "name" || k == "description" || k == "desc") {
        if (value.is_string()) {
          out_.edits.renames[subject] = std::string(trim(value.get<std::string>()));
        } else {
          note("malformed_entry", "name for object " + std::to_string(subject) + " is not a string");
        }
      } else if (k == "bbox" || k == "box") {
        note("bbox_edit_ignored", "box edits are not supported (object " + std::to_string(subject) + ")");
      } else if (k == "rel" || k == "rels" || k == "relations" || k == "relationships" ||
                 k == "relation") {
        read_rel(subject, value);
      } else {
        note("unknown_key", "ignored key '" + key + "' on object " + std::to_string(subject));
      }
    }
  }

  void read_rel(int subject, const json& rel) {
    if (!rel.is_object()) {
      note("malformed_entry", "'rel' of object " + std::to_string(subject) + " is not an object");
      return;
    }
    for (const auto& [key, value] : rel.items()) {
      if (auto verb = parse_verb(key)) {
        read_verb_block(subject, *verb, value, std::nullopt);
        continue;
      }
      // Predicate-first nesting: {"on": {"add": [...], "remove": [...]}}.
      if (value.is_object()) {
        bool any = false;
        for (const auto& [inner_key, inner] : value.items()) {
          if (auto verb = parse_verb(inner_key)) {
            read_list(subject, *verb, key, inner, std::nullopt);
            any = true;
          } else {
            note("unknown_key", "ignored key '" + inner_key + "' under relation '" + key + "'");
          }
        }
        if (!any) note("malformed_entry", "relation '" + key + "' has no add/remove list");
      } else if (value.is_array()) {
        note("bare_list_as_add", "bare id list under relation '" + key + "' read as additions");
        read_list(subject, EditVerb::add, key, value, std::nullopt);
      } else {
        note("unknown_key", "ignored relation key '" + key + "'");
      }
    }
  }

  // Body of an add/remove key: {"pred": [ids]}, {"spatial": {"pred": [ids]}}, or
  // [{"predicate": p, "objects": [ids], "category": c}, ...].
  void read_verb_block(int subject, EditVerb verb, const json& block,
                       std::optional<RelationCategory> category) {
    if (block.is_array()) {
      for (const auto& item : block) {
        if (!item.is_object()) {
          if (!item.is_null()) note("malformed_entry", "non-object entry in add/remove list ignored");
          continue;
        }
        std::optional<std::string> predicate;
        std::optional<RelationCategory> item_category = category;
        const json* ids = nullptr;
        for (const auto& [key, value] : item.items()) {
          const std::string k = lower(key);
          if ((k == "predicate" || k == "rel" || k == "rel_name" || k == "relation" || k == "name") &&
              value.is_string()) {
            predicate = value.get<std::string>();
          } else if ((k == "category" || k == "type") && value.is_string()) {
            item_category = parse_category(value.get<std::string>());
            if (!item_category) note("unknown_category", "unknown category '" + value.get<std::string>() + "'");
          } else if (k == "objects" || k == "ids" || k == "object_ids" || k == "obj_ids" || k == "targets") {
            ids = &value;
          } else {
            note("unknown_key", "ignored key '" + key + "' in edit entry");
          }
        }
        if (!predicate || ids == nullptr) {
          note("malformed_entry", "edit entry needs a predicate and an id list");
          continue;
        }
        read_list(subject, verb, *predicate, *ids, item_category);
      }
      return;
    }
    if (!block.is_object()) {
      note("malformed_entry", "add/remove block of object " + std::to_string(subject) + " is not an object");
      return;
    }
    for (const auto& [key, value] : block.items()) {
      if (value.is_object()) {
        if (auto cat = parse_category(key)) {
          read_verb_block(subject, verb, value, cat);
          continue;
        }
      }
      if (value.is_array() || value.is_number() || value.is_string()) {
        read_list(subject, verb, key, value.is_array() ? value : json::array({value}), category);
      } else {
        note("malformed_entry", "relation '" + key + "' has no id list");
      }
    }
  }

  void read_list(int subject, EditVerb verb, std::string_view predicate, const json& list,
                 std::optional<RelationCategory> category) {
    const json items = list.is_array() ? list : json::array({list});
    std::vector<int> ids;
    for (const auto& item : items) {
      if (auto id = coerce_id(item)) {
        ids.push_back(*id);
        continue;
      }
      if (item.is_string()) {
        if (auto cat = parse_category(item.get<std::string>())) {
          if (verb == EditVerb::add) {
            category = cat;
          }
          continue;
        }
      }
      note("malformed_entry", "ignored non-id list element " + item.dump() + " under '" +
                                  std::string(predicate) + "'");
    }
    const std::string pred(trim(predicate));
    if (pred.empty()) {
      note("malformed_entry", "empty predicate ignored");
      return;
    }
    for (int id : ids) {
      if (verb == EditVerb::add) {
        out_.edits.additions.push_back(RelationAddition{subject, pred, id, category});
      } else {
        out_.edits.removals.push_back(RelationRemoval{subject, pred, id});
      }
    }
  }

  ParsedEditSet& out_;
};

}  // namespace

ParsedEditSet parse_edit_set(std::string_view text) {
  ParsedEditSet out;
  auto root = jsonrepair::find_object(text, out.diagnostics);
  if (!root) throw ParseError("no object literal found in edit response");
  EditReader(out).read_root(*root);
  return out;
}

std::string emit_edit_set(const EditSet& edits) {
  json root = json::object();
  auto entry = [&root](int id) -> json& {
    json& e = root[std::to_string(id)];
    if (e.is_null()) e = json::object();
    return e;
  };
  for (const auto& [id, name] : edits.renames) entry(id)["name"] = name;
  for (const auto& add : edits.additions) {
    json item = {{"predicate", add.predicate}, {"objects", json::array({add.object_id})}};
    if (add.category) item["category"] = std::string(to_string(*add.category));
    json& rel = entry(add.subject_id)["rel"];
    rel["add"].push_back(std::move(item));
  }
  for (const auto& rem : edits.removals) {
    entry(rem.subject_id)["rel"]["remove"][rem.predicate].push_back(rem.object_id);
  }
  return root.dump();
}

// ---------------------------------------------------------------------------
// Annotation responses

ParsedAnnotation parse_annotation_response(std::string_view text) {
  ParsedAnnotation out;
  SubjectAnnotation* current = nullptr;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    std::string_view line = strip_decoration(lines[i]);
    if (line.empty()) continue;
    std::string cleaned(line);
    cleaned.erase(std::remove(cleaned.begin(), cleaned.end(), '*'), cleaned.end());
    const std::size_t colon = cleaned.find(':');
    if (colon == std::string::npos) {
      out.diagnostics.push_back(Diagnostic{"ignored_line", "no 'Label:' prefix", line_no});
      continue;
    }
    const std::string label = lower(trim(std::string_view(cleaned).substr(0, colon)));
    const std::string_view body = trim(std::string_view(cleaned).substr(colon + 1));

    if (label == "subject") {
      auto token = parse_region_token(body);
      if (!token) {
        out.diagnostics.push_back(Diagnostic{"ignored_line", "subject line without region token", line_no});
        current = nullptr;
        continue;
      }
      out.subjects.push_back(SubjectAnnotation{token->id, std::nullopt, {}});
      current = &out.subjects.back();
      continue;
    }
    if (current == nullptr) {
      out.diagnostics.push_back(Diagnostic{"ignored_line", "line outside a subject block", line_no});
      continue;
    }
    if (label == "description") {
      current->description = std::string(body);
      continue;
    }
    auto category = parse_category(label);
    if (!category) {
      out.diagnostics.push_back(Diagnostic{"unknown_category", "unknown label '" + label + "'", line_no});
      continue;
    }
    if (body.empty() || lower(body) == "none") continue;
    for (auto& item : parse_relation_items(body, line_no, out.diagnostics)) {
      current->relations.push_back(
          Relation{current->subject_id, item.object_id, std::move(item.predicate), category});
    }
  }
  return out;
}

}  // namespace svg::sgtext
