#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svg/core.hpp"
#include "svg/filters.hpp"
#include "svg/geometry.hpp"
#include "svg/sgtext.hpp"

namespace svg::pipeline {

inline constexpr double kDefaultNmsIou = 0.6;
inline constexpr double kDefaultValidationIou = 0.5;
inline constexpr double kDefaultMergeIou = 0.5;

enum class ProposalSource { sam_part, sam_whole, semsam_g1, semsam_g2, semsam_all6, other };

std::string_view to_string(ProposalSource s);
ProposalSource parse_proposal_source(std::string_view text);  // unknown names map to `other`

struct ProposalSet {
  ProposalSource source = ProposalSource::other;
  std::vector<geometry::Candidate> proposals;
};

// Union of all sets, then area-ordered NMS keeping the k largest survivors.
std::vector<geometry::Candidate> refine_proposals(std::span<const ProposalSet> sets,
                                                  double iou_threshold, std::size_t k);

struct RegionMatch {
  int region_id = 0;
  double best_iou = 0.0;
  bool used_mask = false;  // best score came from mask IoU
  bool kept = false;
};

struct RegionValidation {
  SceneGraph graph;
  std::vector<RegionMatch> matches;
};

// Keeps regions whose best IoU against any proposal is strictly above the
// threshold and drops relations touching removed regions. Mask IoU is used
// when both sides carry same-sized masks.
RegionValidation validate_regions(const SceneGraph& graph,
                                  std::span<const geometry::Candidate> proposals,
                                  double iou_threshold = kDefaultValidationIou);
void validate_regions(DatasetRecord& record, std::span<const geometry::Candidate> proposals,
                      double iou_threshold = kDefaultValidationIou);

struct EditOutcome {
  SceneGraph graph;
  std::vector<Diagnostic> diagnostics;
};

// Renames, then removals, then additions, then canonicalize. Edits naming
// unknown regions are rejected with a diagnostic; unmatched removals are no-ops.
EditOutcome apply_edits(const SceneGraph& graph, const sgtext::EditSet& edits);
std::vector<Diagnostic> apply_edits(DatasetRecord& record, const sgtext::EditSet& edits);

struct MergeError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Regions of b are paired one-to-one with regions of a by descending IoU; pairs
// above the threshold unify under a's id and name, the rest of b is appended
// under the smallest unused ids, and the result is canonicalized. Throws
// MergeError when the ids would run past kMaxRegionId.
SceneGraph merge_graphs(const SceneGraph& a, const SceneGraph& b,
                        double iou_threshold = kDefaultMergeIou);
DatasetRecord merge_records(const DatasetRecord& a, const DatasetRecord& b,
                            double iou_threshold = kDefaultMergeIou);

// Streaming accumulator. add() and merge() are associative and commutative on
// every integer field; the floating per-image mean is summed in input order.
class StatsAccumulator {
 public:
  void add(const SceneGraph& graph);
  void add(const DatasetRecord& record) { add(record.scene_graph); }
  void merge(const StatsAccumulator& other);

  std::size_t images() const { return images_; }
  std::size_t regions() const { return regions_; }
  std::size_t relations() const { return relations_; }
  std::size_t subjects() const { return subjects_; }
  const std::map<std::optional<RelationCategory>, std::size_t>& by_category() const {
    return by_category_;
  }
  double per_image_ratio_sum() const { return per_image_ratio_sum_; }
  std::size_t images_with_regions() const { return images_with_regions_; }

 private:
  std::size_t images_ = 0;
  std::size_t regions_ = 0;
  std::size_t relations_ = 0;
  std::size_t subjects_ = 0;  // regions with at least one outgoing relation
  std::size_t images_with_regions_ = 0;
  double per_image_ratio_sum_ = 0.0;
  std::map<std::optional<RelationCategory>, std::size_t> by_category_;
};

struct DatasetStats {
  std::size_t images = 0;
  std::size_t regions = 0;
  std::size_t relations = 0;
  double objects_per_image = 0.0;
  double triplets_per_image = 0.0;
  // Headline value: total relations / total regions.
  double predicates_per_region = 0.0;
  // Mean over images (with at least one region) of relations / regions.
  double predicates_per_region_image_mean = 0.0;
  // Relations per distinct subject region.
  double relations_per_subject = 0.0;
  // nullopt key holds untagged relations.
  std::map<std::optional<RelationCategory>, std::size_t> relations_by_category;
};

DatasetStats finalize(const StatsAccumulator& acc);
DatasetStats compute_stats(std::span<const DatasetRecord> records);

// Ordered parallel map over a bounded pool of worker threads; results keep
// input order. workers <= 1 runs inline.
template <typename In, typename Out>
std::vector<Out> parallel_map(std::span<const In> inputs, const std::function<Out(const In&)>& fn,
                              std::size_t workers);

}  // namespace svg::pipeline

#include "svg/detail/parallel_map.hpp"
