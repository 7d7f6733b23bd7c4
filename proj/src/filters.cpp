#include "svg/filters.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace svg::filters {

using geometry::NormBBox;
using nlohmann::json;

std::string_view to_string(SpatialRule rule) {
  switch (rule) {
    case SpatialRule::above: return "above";
    case SpatialRule::below: return "below";
    case SpatialRule::left: return "left";
    case SpatialRule::right: return "right";
    case SpatialRule::overlap: return "overlap";
    case SpatialRule::above_or_overlap: return "above_or_overlap";
    case SpatialRule::below_or_overlap: return "below_or_overlap";
  }
  return "unknown";
}

std::optional<SpatialRule> parse_spatial_rule(std::string_view name) {
  for (SpatialRule r : {SpatialRule::above, SpatialRule::below, SpatialRule::left, SpatialRule::right,
                        SpatialRule::overlap, SpatialRule::above_or_overlap,
                        SpatialRule::below_or_overlap}) {
    if (name == to_string(r)) return r;
  }
  return std::nullopt;
}

std::string_view to_string(DepthRule rule) {
  return rule == DepthRule::in_front_of ? "in_front_of" : "behind";
}

std::optional<DepthRule> parse_depth_rule(std::string_view name) {
  if (name == "in_front_of") return DepthRule::in_front_of;
  if (name == "behind") return DepthRule::behind;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Rule map

PredicateRuleMap PredicateRuleMap::defaults() {
  PredicateRuleMap map;
  for (auto p : {"above", "over", "on top of", "standing on"}) map.set(p, SpatialRule::above_or_overlap);
  for (auto p : {"below", "under", "beneath", "underneath"}) map.set(p, SpatialRule::below_or_overlap);
  for (auto p : {"left of", "to the left of"}) map.set(p, SpatialRule::left);
  for (auto p : {"right of", "to the right of"}) map.set(p, SpatialRule::right);
  for (auto p : {"on", "in", "inside", "within", "at", "attached to"}) map.set(p, SpatialRule::overlap);
  for (auto p : {"next to", "beside", "near", "adjacent to"}) map.set(p, SpatialRule::overlap);
  map.set_depth("in front of", DepthRule::in_front_of);
  map.set_depth("behind", DepthRule::behind);
  return map;
}

void PredicateRuleMap::set(std::string_view predicate, SpatialRule rule) {
  spatial_[fold_predicate(predicate)] = rule;
}

void PredicateRuleMap::set_depth(std::string_view predicate, DepthRule rule) {
  depth_[fold_predicate(predicate)] = rule;
}

std::optional<SpatialRule> PredicateRuleMap::spatial_rule(std::string_view predicate) const {
  auto it = spatial_.find(fold_predicate(predicate));
  if (it == spatial_.end()) return std::nullopt;
  return it->second;
}

std::optional<DepthRule> PredicateRuleMap::depth_rule(std::string_view predicate) const {
  auto it = depth_.find(fold_predicate(predicate));
  if (it == depth_.end()) return std::nullopt;
  return it->second;
}

bool PredicateRuleMap::checkable(std::string_view predicate) const {
  return spatial_rule(predicate).has_value() || depth_rule(predicate).has_value();
}

PredicateRuleMap PredicateRuleMap::from_json_text(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("rule map is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("rule map must be a JSON object");

  PredicateRuleMap map;
  auto read_spatial = [&map](const json& table) {
    if (!table.is_object()) throw ConfigError("'spatial' must be an object");
    for (const auto& [predicate, rule] : table.items()) {
      if (!rule.is_string()) throw ConfigError("rule for '" + predicate + "' must be a string");
      auto parsed = parse_spatial_rule(rule.get<std::string>());
      if (!parsed) throw ConfigError("unknown rule '" + rule.get<std::string>() + "' for '" + predicate + "'");
      map.set(predicate, *parsed);
    }
  };

  const bool structured = root.contains("spatial") || root.contains("depth") || root.contains("version");
  if (!structured) {
    read_spatial(root);
    return map;
  }
  if (root.contains("version") && root["version"] != 1) {
    throw ConfigError("unsupported rule map version " + root["version"].dump());
  }
  if (root.contains("spatial")) read_spatial(root["spatial"]);
  if (root.contains("depth")) {
    const json& table = root["depth"];
    if (!table.is_object()) throw ConfigError("'depth' must be an object");
    for (const auto& [predicate, rule] : table.items()) {
      auto parsed = rule.is_string() ? parse_depth_rule(rule.get<std::string>()) : std::nullopt;
      if (!parsed) throw ConfigError("unknown depth rule " + rule.dump() + " for '" + predicate + "'");
      map.set_depth(predicate, *parsed);
    }
  }
  if (root.contains("overhang_fraction")) {
    if (!root["overhang_fraction"].is_number()) throw ConfigError("overhang_fraction must be a number");
    map.params_.overhang_fraction = root["overhang_fraction"].get<double>();
  }
  if (root.contains("depth_margin")) {
    if (!root["depth_margin"].is_number_integer()) throw ConfigError("depth_margin must be an integer");
    map.params_.depth_margin = root["depth_margin"].get<int>();
  }
  return map;
}

PredicateRuleMap PredicateRuleMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open rule map '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json_text(buffer.str());
}

std::string PredicateRuleMap::to_json_text() const {
  json root = {{"version", 1}};
  root["spatial"] = json::object();
  for (const auto& [p, r] : spatial_) root["spatial"][p] = std::string(to_string(r));
  root["depth"] = json::object();
  for (const auto& [p, r] : depth_) root["depth"][p] = std::string(to_string(r));
  root["overhang_fraction"] = params_.overhang_fraction;
  root["depth_margin"] = params_.depth_margin;
  return root.dump(2);
}

// ---------------------------------------------------------------------------
// Rule evaluation

namespace {

struct Span {
  double lo, hi;
  double center() const { return (lo + hi) / 2.0; }
  double extent() const { return hi - lo; }
};

// `first` lies before `second` along one axis: its center comes first and it
// reaches into `second` by less than the allowed overhang.
bool precedes(Span first, Span second, double fraction) {
  const double overhang = first.hi - second.lo;
  return first.center() < second.center() &&
         overhang < fraction * std::min(first.extent(), second.extent());
}

Span ys(const NormBBox& b) { return {static_cast<double>(b.y1), static_cast<double>(b.y2)}; }
Span xs(const NormBBox& b) { return {static_cast<double>(b.x1), static_cast<double>(b.x2)}; }

bool overlaps(const NormBBox& s, const NormBBox& o) {
  const int w = std::min(s.x2, o.x2) - std::max(s.x1, o.x1);
  const int h = std::min(s.y2, o.y2) - std::max(s.y1, o.y1);
  return w > 0 && h > 0;
}

}  // namespace

bool eval_rule(SpatialRule rule, const NormBBox& s, const NormBBox& o, const RuleParams& params) {
  const double f = params.overhang_fraction;
  switch (rule) {
    case SpatialRule::above: return precedes(ys(s), ys(o), f);
    case SpatialRule::below: return precedes(ys(o), ys(s), f);
    case SpatialRule::left: return precedes(xs(s), xs(o), f);
    case SpatialRule::right: return precedes(xs(o), xs(s), f);
    case SpatialRule::overlap: return overlaps(s, o);
    case SpatialRule::above_or_overlap: return precedes(ys(s), ys(o), f) || overlaps(s, o);
    case SpatialRule::below_or_overlap: return precedes(ys(o), ys(s), f) || overlaps(s, o);
  }
  return false;
}

bool eval_rule(SpatialRule rule, const Region& subject, const Region& object, int image_width,
               int image_height, const RuleParams& params) {
  return eval_rule(rule, geometry::normalize_box(subject.bbox, image_width, image_height),
                   geometry::normalize_box(object.bbox, image_width, image_height), params);
}

std::optional<bool> eval_depth_rule(DepthRule rule, const Region& subject, const Region& object,
                                    const RuleParams& params) {
  if (!subject.depth || !object.depth) return std::nullopt;
  const int s = *subject.depth;
  const int o = *object.depth;
  if (rule == DepthRule::in_front_of) return s > o + params.depth_margin;
  return o > s + params.depth_margin;
}

// ---------------------------------------------------------------------------
// Reports

std::string_view to_string(RemovalReason reason) {
  switch (reason) {
    case RemovalReason::rule_violation: return "rule_violation";
    case RemovalReason::judge_rejection: return "judge_rejection";
    case RemovalReason::similarity_below_threshold: return "similarity_below_threshold";
  }
  return "unknown";
}

void FilterReport::keep(const Relation& r) {
  kept.push_back(r);
  auto& c = counts[r.category];
  ++c.input;
  ++c.kept;
}

void FilterReport::remove(const Relation& r, RemovalReason reason) {
  removed.push_back(RemovedRelation{r, reason});
  ++counts[r.category].input;
}

void FilterReport::absorb(const FilterReport& other) {
  kept.insert(kept.end(), other.kept.begin(), other.kept.end());
  removed.insert(removed.end(), other.removed.begin(), other.removed.end());
  for (const auto& [category, count] : other.counts) {
    counts[category].input += count.input;
    counts[category].kept += count.kept;
  }
}

FilterReport rule_filter(const SceneGraph& graph, const PredicateRuleMap& map) {
  FilterReport report;
  for (const Relation& rel : graph.relations) {
    const Region* s = graph.find_region(rel.subject_id);
    const Region* o = graph.find_region(rel.object_id);
    if (s == nullptr || o == nullptr) {
      throw StructuralError("relation references a missing region in image '" + graph.image_id + "'");
    }
    std::optional<bool> verdict;
    if (auto rule = map.spatial_rule(rel.predicate)) {
      verdict = eval_rule(*rule, *s, *o, graph.image_width, graph.image_height, map.params());
    } else if (auto depth = map.depth_rule(rel.predicate)) {
      verdict = eval_depth_rule(*depth, *s, *o, map.params());
    }
    if (verdict.value_or(true)) {
      report.keep(rel);
    } else {
      report.remove(rel, RemovalReason::rule_violation);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Judges

std::string_view to_string(Answer a) {
  switch (a) {
    case Answer::yes: return "yes";
    case Answer::no: return "no";
    case Answer::abstain: return "abstain";
  }
  return "abstain";
}

JudgeVerdict parse_verdict(std::string judge_name, std::string raw_text) {
  Answer answer = Answer::abstain;
  std::string word;
  auto flush = [&]() {
    if (answer == Answer::abstain) {
      if (word == "yes") answer = Answer::yes;
      if (word == "no") answer = Answer::no;
    }
    word.clear();
  };
  for (unsigned char c : raw_text) {
    if (std::isalpha(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return JudgeVerdict{std::move(judge_name), answer, std::move(raw_text)};
}

FilterReport judge_filter(const std::vector<JudgeItem>& items,
                          const std::map<RelationKey, std::vector<JudgeVerdict>>& verdicts) {
  FilterReport report;
  for (const auto& item : items) {
    if (item.relation.category == RelationCategory::spatial) {
      report.keep(item.relation);
      continue;
    }
    auto it = verdicts.find(RelationKey::of(item.relation));
    if (it == verdicts.end() || it->second.empty()) {
      throw WiringError("no judge verdicts for relation '" + item.phrase + "'");
    }
    const bool rejected = std::any_of(it->second.begin(), it->second.end(),
                                      [](const JudgeVerdict& v) { return v.answer == Answer::no; });
    if (rejected) {
      report.remove(item.relation, RemovalReason::judge_rejection);
    } else {
      report.keep(item.relation);
    }
  }
  return report;
}

FilterReport similarity_filter(const std::vector<SimilarityItem>& items,
                               const std::map<SimilarityKey, double>& scores, double threshold) {
  FilterReport report;
  for (const auto& item : items) {
    auto it = scores.find({item.phrase, item.crop_ref});
    if (it == scores.end()) {
      throw std::invalid_argument("missing similarity score for '" + item.phrase + "' @ " + item.crop_ref);
    }
    const double score = it->second;
    if (!(score >= -1.0 && score <= 1.0)) {
      throw std::invalid_argument("similarity score out of [-1, 1] for '" + item.phrase + "'");
    }
    if (score >= threshold) {
      report.keep(item.relation);
    } else {
      report.remove(item.relation, RemovalReason::similarity_below_threshold);
    }
  }
  return report;
}

}  // namespace svg::filters
