#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "svg/core.hpp"
#include "svg/eval.hpp"
#include "svg/filters.hpp"
#include "svg/io.hpp"
#include "svg/pipeline.hpp"
#include "svg/teacher.hpp"

// Dataset-level stages. Each takes records in image order, runs per-image work
// on `workers` threads and returns results in input order, so outputs do not
// depend on the worker count.
namespace svg::stages {

struct Context {
  std::size_t workers = 1;
  std::vector<io::StageDiagnostic> diagnostics;
};

// Images without proposals lose every region.
std::vector<DatasetRecord> validate(const std::vector<DatasetRecord>& records,
                                    const std::map<std::string, std::vector<geometry::Candidate>>& proposals,
                                    double iou_threshold, Context& ctx);

// Descriptions rename their subject region; relations are appended with their
// category. Routed through apply_edits so unknown ids are rejected the same way.
pipeline::EditOutcome apply_annotation(const SceneGraph& graph, const sgtext::ParsedAnnotation& annotation);

struct TeacherOutput {
  std::vector<DatasetRecord> records;
  std::vector<io::ResponseEntry> responses;
};

TeacherOutput annotate(const std::vector<DatasetRecord>& records,
                       const std::map<std::string, io::ImageCaptions>& captions, const io::Endpoint& teacher,
                       int subject_count, Context& ctx);

// Prompts that annotate() would send, one per record.
std::vector<teacher::ChatRequest> annotation_requests(const std::vector<DatasetRecord>& records,
                                                      const std::map<std::string, io::ImageCaptions>& captions,
                                                      int subject_count);

using JudgePanel = std::vector<std::pair<std::string, io::Endpoint>>;

struct FilterOptions {
  filters::PredicateRuleMap rules = filters::PredicateRuleMap::defaults();
  const JudgePanel* judges = nullptr;  // non-spatial, rule-uncheckable relations are judged when set
  const std::map<filters::SimilarityKey, double>* similarity = nullptr;  // similarity filter when set
  double similarity_threshold = filters::kDefaultSimilarityThreshold;
};

struct GraphFilterOutcome {
  SceneGraph graph;
  filters::FilterReport report;
};

// Rule filter, then judges, then similarity. The report counts every input
// relation once, with the reason of the first stage that removed it.
GraphFilterOutcome filter_graph(const SceneGraph& graph, const FilterOptions& options);

struct FilterOutput {
  std::vector<DatasetRecord> records;
  filters::FilterReport report;
};

FilterOutput filter(const std::vector<DatasetRecord>& records, const FilterOptions& options, Context& ctx);

std::vector<teacher::ChatRequest> edit_requests(const std::vector<DatasetRecord>& records,
                                                const std::map<std::string, io::ImageCaptions>& captions);

std::vector<io::ResponseEntry> generate_edits(const std::vector<DatasetRecord>& records,
                                              const std::map<std::string, io::ImageCaptions>& captions,
                                              const io::Endpoint& editor, Context& ctx);

// Entries for the same image apply in file order. Images without entries pass
// through untouched; unparseable responses leave the graph unchanged and are
// reported.
std::vector<DatasetRecord> apply_edits(const std::vector<DatasetRecord>& records,
                                       const std::vector<io::EditEntry>& edits, Context& ctx);

// Pairs predictions with ground truth by image id. Ground-truth images without
// predictions are scored against an empty graph.
std::vector<std::pair<SceneGraph, SceneGraph>> pair_for_eval(const std::vector<DatasetRecord>& predicted,
                                                             const std::vector<DatasetRecord>& gt, Context& ctx);

// ---------------------------------------------------------------------------
// Declarative runs
//
// {"version":1, "workers":4, "graphs":"records.jsonl",
//  "stages":[
//    {"stage":"validate-regions","proposals":"proposals.jsonl","iou":0.5},
//    {"stage":"annotate","transport":"teacher.json","captions":"captions.jsonl","subjects":5},
//    {"stage":"filter","rules":"rules.json","judges":"judges.json",
//     "similarity_scores":"scores.jsonl","sim_threshold":0.3},
//    {"stage":"edit-generate","transport":"editor.json","captions":"captions.jsonl"},
//    {"stage":"edit-apply"},                      (uses the last edit-generate, or "edits":"file")
//    {"stage":"stats"},
//    {"stage":"eval","gt":"gt.jsonl","objects":"objects.txt","predicates":"predicates.txt","k":20}]}
//
// Relative paths resolve against the config file. Outputs land in `out_dir`
// as NN-<stage>.<ext> plus diagnostics.jsonl.

struct RunSummary {
  std::vector<std::filesystem::path> outputs;
  std::size_t diagnostics = 0;
};

RunSummary run(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
               std::optional<std::size_t> workers_override = std::nullopt);

}  // namespace svg::stages
