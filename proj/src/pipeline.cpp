#include "svg/pipeline.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>

namespace svg::pipeline {

using geometry::Candidate;

std::string_view to_string(ProposalSource s) {
  switch (s) {
    case ProposalSource::sam_part: return "sam_part";
    case ProposalSource::sam_whole: return "sam_whole";
    case ProposalSource::semsam_g1: return "semsam_g1";
    case ProposalSource::semsam_g2: return "semsam_g2";
    case ProposalSource::semsam_all6: return "semsam_all6";
    case ProposalSource::other: return "other";
  }
  return "other";
}

ProposalSource parse_proposal_source(std::string_view text) {
  for (auto s : {ProposalSource::sam_part, ProposalSource::sam_whole, ProposalSource::semsam_g1,
                 ProposalSource::semsam_g2, ProposalSource::semsam_all6}) {
    if (text == to_string(s)) return s;
  }
  return ProposalSource::other;
}

std::vector<Candidate> refine_proposals(std::span<const ProposalSet> sets, double iou_threshold,
                                        std::size_t k) {
  std::vector<Candidate> pool;
  for (const auto& set : sets) pool.insert(pool.end(), set.proposals.begin(), set.proposals.end());
  return geometry::nms_by_area(pool, iou_threshold, k);
}

// ---------------------------------------------------------------------------
// Region validation

namespace {

// Score of a region against one proposal, and whether masks were compared.
std::pair<double, bool> region_iou(const Region& region, const Candidate& proposal) {
  if (region.mask && proposal.mask && region.mask->width() == proposal.mask->width() &&
      region.mask->height() == proposal.mask->height()) {
    return {geometry::iou_mask(*region.mask, *proposal.mask), true};
  }
  return {geometry::iou_box(region.bbox, proposal.box), false};
}

double region_pair_iou(const Region& a, const Region& b) {
  return region_iou(a, Candidate{b.bbox, b.mask}).first;
}

// Drops relations whose endpoints are not in `ids`.
std::vector<Relation> relations_within(const std::vector<Relation>& relations, const std::set<int>& ids) {
  std::vector<Relation> out;
  for (const auto& rel : relations) {
    if (ids.contains(rel.subject_id) && ids.contains(rel.object_id)) out.push_back(rel);
  }
  return out;
}

}  // namespace

RegionValidation validate_regions(const SceneGraph& graph, std::span<const Candidate> proposals,
                                  double iou_threshold) {
  RegionValidation out;
  out.graph = graph;
  out.graph.regions.clear();
  std::set<int> kept_ids;
  for (const auto& region : graph.regions) {
    RegionMatch match{region.id, 0.0, false, false};
    for (const auto& proposal : proposals) {
      const auto [iou, used_mask] = region_iou(region, proposal);
      if (iou > match.best_iou) {
        match.best_iou = iou;
        match.used_mask = used_mask;
      }
    }
    match.kept = match.best_iou > iou_threshold;
    if (match.kept) {
      out.graph.regions.push_back(region);
      kept_ids.insert(region.id);
    }
    out.matches.push_back(match);
  }
  out.graph.relations = relations_within(graph.relations, kept_ids);
  return out;
}

void validate_regions(DatasetRecord& record, std::span<const Candidate> proposals, double iou_threshold) {
  record.scene_graph = validate_regions(record.scene_graph, proposals, iou_threshold).graph;
  append_provenance(record, Stage::validated);
}

// ---------------------------------------------------------------------------
// Edits

EditOutcome apply_edits(const SceneGraph& graph, const sgtext::EditSet& edits) {
  EditOutcome out;
  out.graph = graph;
  auto reject = [&out](std::string message) {
    out.diagnostics.push_back(Diagnostic{"rejected_edit", std::move(message), 0});
  };
  auto known = [&graph](int id) { return graph.find_region(id) != nullptr; };

  for (const auto& [id, name] : edits.renames) {
    Region* region = out.graph.find_region(id);
    if (region == nullptr) {
      reject("rename of unknown region " + std::to_string(id));
      continue;
    }
    if (!name.empty()) region->name = name;
  }

  for (const auto& removal : edits.removals) {
    if (!known(removal.subject_id) || !known(removal.object_id)) {
      std::ostringstream os;
      os << "removal (" << removal.subject_id << ", \"" << removal.predicate << "\", " << removal.object_id
         << ") names an unknown region";
      reject(os.str());
      continue;
    }
    const RelationKey key{removal.subject_id, removal.object_id, fold_predicate(removal.predicate)};
    auto& rels = out.graph.relations;
    const auto before = rels.size();
    std::erase_if(rels, [&key](const Relation& r) { return RelationKey::of(r) == key; });
    if (rels.size() == before) {
      std::ostringstream os;
      os << "removal (" << removal.subject_id << ", \"" << removal.predicate << "\", " << removal.object_id
         << ") matched nothing";
      out.diagnostics.push_back(Diagnostic{"noop_removal", os.str(), 0});
    }
  }

  for (const auto& addition : edits.additions) {
    if (!known(addition.subject_id) || !known(addition.object_id)) {
      std::ostringstream os;
      os << "addition (" << addition.subject_id << ", \"" << addition.predicate << "\", "
         << addition.object_id << ") names an unknown region";
      reject(os.str());
      continue;
    }
    if (addition.subject_id == addition.object_id) {
      reject("addition relates region " + std::to_string(addition.subject_id) + " to itself");
      continue;
    }
    out.graph.relations.push_back(
        Relation{addition.subject_id, addition.object_id, addition.predicate, addition.category});
  }

  out.graph = canonicalize(out.graph);
  return out;
}

std::vector<Diagnostic> apply_edits(DatasetRecord& record, const sgtext::EditSet& edits) {
  auto outcome = apply_edits(record.scene_graph, edits);
  record.scene_graph = std::move(outcome.graph);
  append_provenance(record, Stage::edited);
  return std::move(outcome.diagnostics);
}

// ---------------------------------------------------------------------------
// Merging

SceneGraph merge_graphs(const SceneGraph& a, const SceneGraph& b, double iou_threshold) {
  if (a.image_id != b.image_id) {
    throw MergeError("cannot merge graphs of different images ('" + a.image_id + "' vs '" + b.image_id + "')");
  }
  if (a.image_width != b.image_width || a.image_height != b.image_height) {
    throw MergeError("cannot merge graphs of image '" + a.image_id + "' with different dimensions");
  }

  struct Pair {
    double iou;
    std::size_t ia, ib;
  };
  std::vector<Pair> pairs;
  for (std::size_t ia = 0; ia < a.regions.size(); ++ia) {
    for (std::size_t ib = 0; ib < b.regions.size(); ++ib) {
      const double iou = region_pair_iou(a.regions[ia], b.regions[ib]);
      if (iou > iou_threshold) pairs.push_back(Pair{iou, ia, ib});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    return std::tie(y.iou, x.ia, x.ib) < std::tie(x.iou, y.ia, y.ib);
  });

  std::map<int, int> remap;  // b id -> merged id
  std::vector<bool> a_taken(a.regions.size(), false);
  std::vector<bool> b_taken(b.regions.size(), false);
  for (const auto& p : pairs) {
    if (a_taken[p.ia] || b_taken[p.ib]) continue;
    a_taken[p.ia] = b_taken[p.ib] = true;
    remap[b.regions[p.ib].id] = a.regions[p.ia].id;
  }

  SceneGraph out = a;
  std::set<int> used;
  for (const auto& r : a.regions) used.insert(r.id);
  int next_id = 0;
  for (std::size_t ib = 0; ib < b.regions.size(); ++ib) {
    if (b_taken[ib]) continue;
    while (used.contains(next_id)) ++next_id;
    if (next_id > kMaxRegionId) {
      throw MergeError("merged graph of image '" + a.image_id + "' would exceed " +
                       std::to_string(kMaxRegionId + 1) + " regions");
    }
    Region region = b.regions[ib];
    remap[region.id] = next_id;
    region.id = next_id;
    used.insert(next_id);
    out.regions.push_back(std::move(region));
  }
  for (const auto& rel : b.relations) {
    auto s = remap.find(rel.subject_id);
    auto o = remap.find(rel.object_id);
    if (s == remap.end() || o == remap.end()) {
      throw StructuralError("relation in second graph of image '" + b.image_id +
                            "' references a missing region");
    }
    Relation moved = rel;
    moved.subject_id = s->second;
    moved.object_id = o->second;
    out.relations.push_back(std::move(moved));
  }
  return canonicalize(out);
}

DatasetRecord merge_records(const DatasetRecord& a, const DatasetRecord& b, double iou_threshold) {
  DatasetRecord out;
  out.scene_graph = merge_graphs(a.scene_graph, b.scene_graph, iou_threshold);
  out.source = a.source == b.source ? a.source : a.source + "+" + b.source;
  out.provenance = a.provenance;
  append_provenance(out, Stage::merged);
  return out;
}

// ---------------------------------------------------------------------------
// Statistics

void StatsAccumulator::add(const SceneGraph& graph) {
  ++images_;
  regions_ += graph.regions.size();
  relations_ += graph.relations.size();
  std::set<int> subjects;
  for (const auto& rel : graph.relations) {
    subjects.insert(rel.subject_id);
    ++by_category_[rel.category];
  }
  subjects_ += subjects.size();
  if (!graph.regions.empty()) {
    ++images_with_regions_;
    per_image_ratio_sum_ +=
        static_cast<double>(graph.relations.size()) / static_cast<double>(graph.regions.size());
  }
}

void StatsAccumulator::merge(const StatsAccumulator& other) {
  images_ += other.images_;
  regions_ += other.regions_;
  relations_ += other.relations_;
  subjects_ += other.subjects_;
  images_with_regions_ += other.images_with_regions_;
  per_image_ratio_sum_ += other.per_image_ratio_sum_;
  for (const auto& [category, count] : other.by_category_) by_category_[category] += count;
}

DatasetStats finalize(const StatsAccumulator& acc) {
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  DatasetStats s;
  s.images = acc.images();
  s.regions = acc.regions();
  s.relations = acc.relations();
  s.objects_per_image = ratio(acc.regions(), acc.images());
  s.triplets_per_image = ratio(acc.relations(), acc.images());
  s.predicates_per_region = ratio(acc.relations(), acc.regions());
  s.predicates_per_region_image_mean =
      acc.images_with_regions() == 0 ? 0.0
                                     : acc.per_image_ratio_sum() / static_cast<double>(acc.images_with_regions());
  s.relations_per_subject = ratio(acc.relations(), acc.subjects());
  s.relations_by_category = acc.by_category();
  return s;
}

DatasetStats compute_stats(std::span<const DatasetRecord> records) {
  StatsAccumulator acc;
  for (const auto& r : records) acc.add(r);
  return finalize(acc);
}

}  // namespace svg::pipeline
