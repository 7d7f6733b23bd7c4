#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "svg/core.hpp"
#include "svg/geometry.hpp"

namespace svg::filters {

// Planar spatial checks; closed set of seven.
enum class SpatialRule { above, below, left, right, overlap, above_or_overlap, below_or_overlap };

// Depth-based checks for "behind" / "in front of"; only evaluated when both
// regions carry depth, otherwise the relation passes through.
enum class DepthRule { in_front_of, behind };

std::string_view to_string(SpatialRule rule);
std::optional<SpatialRule> parse_spatial_rule(std::string_view name);
std::string_view to_string(DepthRule rule);
std::optional<DepthRule> parse_depth_rule(std::string_view name);

struct ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RuleParams {
  // Allowed overhang along the checked axis, as a fraction of the smaller extent.
  double overhang_fraction = 0.5;
  // Depth gap (0..255 scale) required for in-front/behind.
  int depth_margin = 10;
};

class PredicateRuleMap {
 public:
  PredicateRuleMap() = default;

  // The 22-entry planar table plus the two depth entries.
  static PredicateRuleMap defaults();
  // Schema:
  //   {"version": 1,
  //    "spatial": {"<predicate>": "<rule>", ...},
  //    "depth": {"<predicate>": "in_front_of" | "behind", ...},   (optional)
  //    "overhang_fraction": 0.5, "depth_margin": 10}                (optional)
  // A flat {"<predicate>": "<rule>"} object is also accepted. Unknown rule
  // names raise ConfigError.
  static PredicateRuleMap from_json_text(std::string_view text);
  static PredicateRuleMap load(const std::string& path);
  std::string to_json_text() const;

  void set(std::string_view predicate, SpatialRule rule);
  void set_depth(std::string_view predicate, DepthRule rule);

  std::optional<SpatialRule> spatial_rule(std::string_view predicate) const;
  std::optional<DepthRule> depth_rule(std::string_view predicate) const;
  bool checkable(std::string_view predicate) const;

  const std::map<std::string, SpatialRule>& spatial() const { return spatial_; }
  const std::map<std::string, DepthRule>& depth() const { return depth_; }
  RuleParams& params() { return params_; }
  const RuleParams& params() const { return params_; }

 private:
  std::map<std::string, SpatialRule> spatial_;
  std::map<std::string, DepthRule> depth_;
  RuleParams params_;
};

bool eval_rule(SpatialRule rule, const geometry::NormBBox& subject, const geometry::NormBBox& object,
               const RuleParams& params = {});
// Boxes are normalized against the image size before comparison.
bool eval_rule(SpatialRule rule, const Region& subject, const Region& object, int image_width,
               int image_height, const RuleParams& params = {});
// nullopt when either depth is missing.
std::optional<bool> eval_depth_rule(DepthRule rule, const Region& subject, const Region& object,
                                    const RuleParams& params = {});

enum class RemovalReason { rule_violation, judge_rejection, similarity_below_threshold };
std::string_view to_string(RemovalReason reason);

struct RemovedRelation {
  Relation relation;
  RemovalReason reason;

  friend bool operator==(const RemovedRelation&, const RemovedRelation&) = default;
};

struct CategoryCount {
  std::size_t input = 0;
  std::size_t kept = 0;

  friend bool operator==(const CategoryCount&, const CategoryCount&) = default;
};

// kept and removed partition the input; counts are keyed by category, with
// nullopt collecting untagged relations.
struct FilterReport {
  std::vector<Relation> kept;
  std::vector<RemovedRelation> removed;
  std::map<std::optional<RelationCategory>, CategoryCount> counts;

  void keep(const Relation& r);
  void remove(const Relation& r, RemovalReason reason);
  // Appends another report's contents (used to combine stages and images).
  void absorb(const FilterReport& other);

  friend bool operator==(const FilterReport&, const FilterReport&) = default;
};

// Keeps mapped relations that satisfy their rule; unmapped predicates pass through.
FilterReport rule_filter(const SceneGraph& graph, const PredicateRuleMap& map);

enum class Answer { yes, no, abstain };
std::string_view to_string(Answer a);

struct JudgeVerdict {
  std::string judge_name;
  Answer answer = Answer::abstain;
  std::string raw_text;
};

// First standalone "yes"/"no" word (case-insensitive) decides; abstain otherwise.
JudgeVerdict parse_verdict(std::string judge_name, std::string raw_text);

struct JudgeItem {
  Relation relation;
  std::string phrase;  // "subject predicate object"
};

struct WiringError : public std::logic_error {
  using std::logic_error::logic_error;
};

// Removes a relation iff some verdict is `no`; abstentions count as yes.
// Spatial-category relations pass through without verdicts. Throws WiringError
// when a non-spatial relation has no verdicts.
FilterReport judge_filter(const std::vector<JudgeItem>& items,
                          const std::map<RelationKey, std::vector<JudgeVerdict>>& verdicts);

inline constexpr double kDefaultSimilarityThreshold = 0.3;

struct SimilarityItem {
  Relation relation;
  std::string phrase;
  std::string crop_ref;
};

using SimilarityKey = std::pair<std::string, std::string>;  // (phrase, crop_ref)

// Keeps a pair iff score >= threshold. Throws std::invalid_argument on a
// missing score or one outside [-1, 1].
FilterReport similarity_filter(const std::vector<SimilarityItem>& items,
                               const std::map<SimilarityKey, double>& scores,
                               double threshold = kDefaultSimilarityThreshold);

}  // namespace svg::filters
