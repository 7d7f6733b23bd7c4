#include "svg/stages.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "svg/sgtext.hpp"

namespace svg::stages {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void record_diagnostics(Context& ctx, std::string_view stage, const std::string& image_id,
                        const std::vector<Diagnostic>& diagnostics) {
  for (const auto& d : diagnostics) ctx.diagnostics.push_back(io::StageDiagnostic{std::string(stage), image_id, d});
}

const io::ImageCaptions& captions_for(const std::map<std::string, io::ImageCaptions>& captions,
                                      const std::string& image_id) {
  static const io::ImageCaptions kNone;
  auto it = captions.find(image_id);
  return it == captions.end() ? kNone : it->second;
}

std::string phrase_of(const SceneGraph& g, const Relation& rel) {
  const Region* s = g.find_region(rel.subject_id);
  const Region* o = g.find_region(rel.object_id);
  return s->name + " " + rel.predicate + " " + o->name;
}

std::string send(const io::Endpoint& endpoint, teacher::ChatRequest request) {
  if (request.model.empty()) request.model = endpoint.model;
  return teacher::call_with_retry(*endpoint.transport, request, endpoint.retry).text;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<DatasetRecord> validate(const std::vector<DatasetRecord>& records,
                                    const std::map<std::string, std::vector<geometry::Candidate>>& proposals,
                                    double iou_threshold, Context& ctx) {
  struct Result {
    DatasetRecord record;
    std::vector<Diagnostic> diagnostics;
  };
  static const std::vector<geometry::Candidate> kEmpty;
  auto results = pipeline::parallel_map<DatasetRecord, Result>(
      records,
      [&](const DatasetRecord& in) {
        Result r{in, {}};
        auto it = proposals.find(in.scene_graph.image_id);
        if (it == proposals.end()) {
          r.diagnostics.push_back(Diagnostic{"no_proposals", "image has no proposals; all regions dropped", 0});
        }
        auto validation =
            pipeline::validate_regions(in.scene_graph, it == proposals.end() ? kEmpty : it->second, iou_threshold);
        for (const auto& m : validation.matches) {
          if (!m.kept) {
            r.diagnostics.push_back(Diagnostic{"region_dropped",
                                               "region " + std::to_string(m.region_id) + " best IoU " +
                                                   std::to_string(m.best_iou),
                                               0});
          }
        }
        r.record.scene_graph = std::move(validation.graph);
        append_provenance(r.record, Stage::validated);
        return r;
      },
      ctx.workers);
  std::vector<DatasetRecord> out;
  for (auto& r : results) {
    record_diagnostics(ctx, "validate-regions", r.record.scene_graph.image_id, r.diagnostics);
    out.push_back(std::move(r.record));
  }
  return out;
}

pipeline::EditOutcome apply_annotation(const SceneGraph& graph, const sgtext::ParsedAnnotation& annotation) {
  sgtext::EditSet edits;
  for (const auto& subject : annotation.subjects) {
    if (subject.description && !subject.description->empty()) edits.renames[subject.subject_id] = *subject.description;
    for (const auto& rel : subject.relations) {
      edits.additions.push_back(sgtext::RelationAddition{rel.subject_id, rel.predicate, rel.object_id, rel.category});
    }
  }
  auto outcome = pipeline::apply_edits(graph, edits);
  outcome.diagnostics.insert(outcome.diagnostics.begin(), annotation.diagnostics.begin(),
                             annotation.diagnostics.end());
  return outcome;
}

std::vector<teacher::ChatRequest> annotation_requests(const std::vector<DatasetRecord>& records,
                                                      const std::map<std::string, io::ImageCaptions>& captions,
                                                      int subject_count) {
  std::vector<teacher::ChatRequest> out;
  for (const auto& record : records) {
    const auto& c = captions_for(captions, record.scene_graph.image_id);
    teacher::RelationPromptOptions options{c.region_captions, subject_count};
    out.push_back(teacher::build_relation_prompt(record.scene_graph, c.captions, options));
  }
  return out;
}

TeacherOutput annotate(const std::vector<DatasetRecord>& records,
                       const std::map<std::string, io::ImageCaptions>& captions, const io::Endpoint& teacher,
                       int subject_count, Context& ctx) {
  struct Result {
    DatasetRecord record;
    io::ResponseEntry response;
    std::vector<Diagnostic> diagnostics;
  };
  const auto requests = annotation_requests(records, captions, subject_count);
  std::vector<std::size_t> indices(records.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  auto results = pipeline::parallel_map<std::size_t, Result>(
      indices,
      [&](const std::size_t& i) {
        auto request = requests[i];
        if (request.model.empty()) request.model = teacher.model;
        const std::string text = send(teacher, request);
        auto outcome = apply_annotation(records[i].scene_graph, sgtext::parse_annotation_response(text));
        DatasetRecord record = records[i];
        record.scene_graph = std::move(outcome.graph);
        return Result{std::move(record), io::ResponseEntry{records[i].scene_graph.image_id, request.digest(), text},
                      std::move(outcome.diagnostics)};
      },
      ctx.workers);
  TeacherOutput out;
  for (auto& r : results) {
    record_diagnostics(ctx, "annotate", r.response.image_id, r.diagnostics);
    out.records.push_back(std::move(r.record));
    out.responses.push_back(std::move(r.response));
  }
  return out;
}

// ---------------------------------------------------------------------------

GraphFilterOutcome filter_graph(const SceneGraph& graph, const FilterOptions& options) {
  for (const auto& rel : graph.relations) {
    if (graph.find_region(rel.subject_id) == nullptr || graph.find_region(rel.object_id) == nullptr) {
      throw StructuralError("relation references a missing region in image '" + graph.image_id + "'");
    }
  }
  std::map<RelationKey, filters::RemovalReason> removed;
  auto note = [&removed](const filters::FilterReport& report) {
    for (const auto& r : report.removed) removed.emplace(RelationKey::of(r.relation), r.reason);
  };

  const auto rules = filters::rule_filter(graph, options.rules);
  note(rules);
  std::vector<Relation> current = rules.kept;

  if (options.judges != nullptr && !options.judges->empty()) {
    std::vector<filters::JudgeItem> items;
    std::map<RelationKey, std::vector<filters::JudgeVerdict>> verdicts;
    for (const auto& rel : current) {
      if (rel.category == RelationCategory::spatial || options.rules.checkable(rel.predicate)) continue;
      const auto key = RelationKey::of(rel);
      items.push_back(filters::JudgeItem{rel, phrase_of(graph, rel)});
      if (verdicts.contains(key)) continue;
      const Region& s = *graph.find_region(rel.subject_id);
      const Region& o = *graph.find_region(rel.object_id);
      auto& list = verdicts[key];
      for (const auto& [name, endpoint] : *options.judges) {
        const auto request = teacher::build_judge_prompt(s, rel.predicate, o, graph.image_id);
        list.push_back(filters::parse_verdict(name, send(endpoint, request)));
      }
    }
    note(filters::judge_filter(items, verdicts));
  }

  if (options.similarity != nullptr) {
    std::vector<filters::SimilarityItem> items;
    for (const auto& rel : current) {
      if (removed.contains(RelationKey::of(rel))) continue;
      const Region& s = *graph.find_region(rel.subject_id);
      const Region& o = *graph.find_region(rel.object_id);
      items.push_back(filters::SimilarityItem{
          rel, phrase_of(graph, rel), teacher::crop_ref(graph.image_id, geometry::union_box(s.bbox, o.bbox))});
    }
    note(filters::similarity_filter(items, *options.similarity, options.similarity_threshold));
  }

  GraphFilterOutcome out;
  out.graph = graph;
  out.graph.relations.clear();
  for (const auto& rel : graph.relations) {
    auto it = removed.find(RelationKey::of(rel));
    if (it == removed.end()) {
      out.report.keep(rel);
      out.graph.relations.push_back(rel);
    } else {
      out.report.remove(rel, it->second);
    }
  }
  return out;
}

FilterOutput filter(const std::vector<DatasetRecord>& records, const FilterOptions& options, Context& ctx) {
  auto results = pipeline::parallel_map<DatasetRecord, GraphFilterOutcome>(
      records, [&](const DatasetRecord& r) { return filter_graph(r.scene_graph, options); }, ctx.workers);
  FilterOutput out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    DatasetRecord record = records[i];
    record.scene_graph = std::move(results[i].graph);
    append_provenance(record, Stage::filtered);
    out.report.absorb(results[i].report);
    out.records.push_back(std::move(record));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<teacher::ChatRequest> edit_requests(const std::vector<DatasetRecord>& records,
                                                const std::map<std::string, io::ImageCaptions>& captions) {
  std::vector<teacher::ChatRequest> out;
  for (const auto& record : records) {
    out.push_back(teacher::build_edit_prompt(record.scene_graph,
                                             captions_for(captions, record.scene_graph.image_id).dense_caption));
  }
  return out;
}

std::vector<io::ResponseEntry> generate_edits(const std::vector<DatasetRecord>& records,
                                              const std::map<std::string, io::ImageCaptions>& captions,
                                              const io::Endpoint& editor, Context& ctx) {
  const auto requests = edit_requests(records, captions);
  std::vector<std::size_t> indices(records.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  return pipeline::parallel_map<std::size_t, io::ResponseEntry>(
      indices,
      [&](const std::size_t& i) {
        auto request = requests[i];
        if (request.model.empty()) request.model = editor.model;
        return io::ResponseEntry{records[i].scene_graph.image_id, request.digest(), send(editor, request)};
      },
      ctx.workers);
}

std::vector<DatasetRecord> apply_edits(const std::vector<DatasetRecord>& records,
                                       const std::vector<io::EditEntry>& edits, Context& ctx) {
  std::map<std::string, std::vector<const io::EditEntry*>> by_image;
  for (const auto& e : edits) by_image[e.image_id].push_back(&e);
  std::set<std::string> known;
  for (const auto& r : records) known.insert(r.scene_graph.image_id);
  for (const auto& [image_id, _] : by_image) {
    if (!known.contains(image_id)) {
      ctx.diagnostics.push_back(io::StageDiagnostic{
          "edit-apply", image_id, Diagnostic{"unknown_image", "edits for an image not in the input", 0}});
    }
  }

  struct Result {
    DatasetRecord record;
    std::vector<Diagnostic> diagnostics;
  };
  auto results = pipeline::parallel_map<DatasetRecord, Result>(
      records,
      [&](const DatasetRecord& in) {
        Result r{in, {}};
        auto it = by_image.find(in.scene_graph.image_id);
        if (it == by_image.end()) return r;
        for (const auto* entry : it->second) {
          sgtext::ParsedEditSet parsed;
          try {
            parsed = sgtext::parse_edit_set(entry->text);
          } catch (const sgtext::ParseError& e) {
            r.diagnostics.push_back(Diagnostic{"unparseable_edits", e.what(), 0});
            continue;
          }
          r.diagnostics.insert(r.diagnostics.end(), parsed.diagnostics.begin(), parsed.diagnostics.end());
          auto outcome = pipeline::apply_edits(r.record.scene_graph, parsed.edits);
          r.record.scene_graph = std::move(outcome.graph);
          r.diagnostics.insert(r.diagnostics.end(), outcome.diagnostics.begin(), outcome.diagnostics.end());
        }
        append_provenance(r.record, Stage::edited);
        return r;
      },
      ctx.workers);
  std::vector<DatasetRecord> out;
  for (auto& r : results) {
    record_diagnostics(ctx, "edit-apply", r.record.scene_graph.image_id, r.diagnostics);
    out.push_back(std::move(r.record));
  }
  return out;
}

std::vector<std::pair<SceneGraph, SceneGraph>> pair_for_eval(const std::vector<DatasetRecord>& predicted,
                                                             const std::vector<DatasetRecord>& gt, Context& ctx) {
  std::map<std::string, const SceneGraph*> by_image;
  for (const auto& p : predicted) {
    if (!by_image.emplace(p.scene_graph.image_id, &p.scene_graph).second) {
      throw io::DataError("duplicate predictions for image '" + p.scene_graph.image_id + "'");
    }
  }
  std::vector<std::pair<SceneGraph, SceneGraph>> pairs;
  std::set<std::string> used;
  for (const auto& g : gt) {
    const SceneGraph& truth = g.scene_graph;
    auto it = by_image.find(truth.image_id);
    if (it == by_image.end()) {
      SceneGraph empty;
      empty.image_id = truth.image_id;
      empty.image_width = truth.image_width;
      empty.image_height = truth.image_height;
      ctx.diagnostics.push_back(
          io::StageDiagnostic{"eval", truth.image_id, Diagnostic{"missing_prediction", "scored as empty", 0}});
      pairs.emplace_back(std::move(empty), truth);
    } else {
      used.insert(truth.image_id);
      pairs.emplace_back(*it->second, truth);
    }
  }
  for (const auto& [image_id, _] : by_image) {
    if (!used.contains(image_id)) {
      ctx.diagnostics.push_back(
          io::StageDiagnostic{"eval", image_id, Diagnostic{"no_ground_truth", "prediction ignored", 0}});
    }
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Declarative runs

namespace {

struct RunState {
  fs::path base;
  fs::path out_dir;
  std::vector<DatasetRecord> records;
  std::optional<std::vector<io::EditEntry>> pending_edits;
  Context ctx;
  RunSummary summary;
  int step = 0;
};

fs::path resolve(const RunState& s, const json& stage, const char* key) {
  if (!stage.contains(key)) {
    throw io::ConfigError(std::string("stage '") + stage.value("stage", "?") + "' needs \"" + key + "\"");
  }
  const fs::path p(stage[key].get<std::string>());
  return p.is_absolute() ? p : s.base / p;
}

std::optional<fs::path> resolve_optional(const RunState& s, const json& stage, const char* key) {
  if (!stage.contains(key) || stage[key].is_null()) return std::nullopt;
  return resolve(s, stage, key);
}

fs::path output(RunState& s, std::string_view name, std::string_view ext) {
  char prefix[8];
  std::snprintf(prefix, sizeof prefix, "%02d-", s.step);
  fs::path p = s.out_dir / (prefix + std::string(name) + "." + std::string(ext));
  s.summary.outputs.push_back(p);
  return p;
}

std::map<std::string, io::ImageCaptions> maybe_captions(const RunState& s, const json& stage) {
  auto path = resolve_optional(s, stage, "captions");
  return path ? io::read_captions(*path) : std::map<std::string, io::ImageCaptions>{};
}

void run_stage(RunState& s, const json& stage) {
  const std::string name = stage.value("stage", "");
  if (name == "validate-regions") {
    const auto proposals = io::read_proposals(resolve(s, stage, "proposals"));
    s.records = validate(s.records, io::proposals_by_image(proposals),
                         stage.value("iou", pipeline::kDefaultValidationIou), s.ctx);
    io::write_records(output(s, name, "jsonl"), s.records);
  } else if (name == "annotate") {
    const auto endpoint = io::make_endpoint(io::load_transport_config(resolve(s, stage, "transport")));
    auto result = annotate(s.records, maybe_captions(s, stage), endpoint,
                           stage.value("subjects", teacher::kDefaultSubjectCount), s.ctx);
    s.records = std::move(result.records);
    io::write_text(output(s, "annotate-responses", "jsonl"), io::responses_to_text(result.responses));
    io::write_records(output(s, name, "jsonl"), s.records);
  } else if (name == "filter") {
    FilterOptions options;
    if (auto rules = resolve_optional(s, stage, "rules")) options.rules = filters::PredicateRuleMap::load(rules->string());
    JudgePanel judges;
    if (auto path = resolve_optional(s, stage, "judges")) {
      judges = io::load_judges(*path);
      options.judges = &judges;
    }
    std::map<filters::SimilarityKey, double> scores;
    if (auto path = resolve_optional(s, stage, "similarity_scores")) {
      scores = io::read_similarity_scores(*path);
      options.similarity = &scores;
    }
    options.similarity_threshold = stage.value("sim_threshold", filters::kDefaultSimilarityThreshold);
    auto result = filter(s.records, options, s.ctx);
    s.records = std::move(result.records);
    io::write_json(output(s, "filter-report", "json"), io::filter_report_to_json(result.report));
    io::write_records(output(s, name, "jsonl"), s.records);
  } else if (name == "edit-generate") {
    const auto endpoint = io::make_endpoint(io::load_transport_config(resolve(s, stage, "transport")));
    const auto responses = generate_edits(s.records, maybe_captions(s, stage), endpoint, s.ctx);
    io::write_text(output(s, name, "jsonl"), io::responses_to_text(responses));
    std::vector<io::EditEntry> entries;
    for (const auto& r : responses) entries.push_back(io::EditEntry{r.image_id, r.response});
    s.pending_edits = std::move(entries);
  } else if (name == "edit-apply") {
    std::vector<io::EditEntry> entries;
    if (auto path = resolve_optional(s, stage, "edits")) {
      entries = io::read_edits(*path);
    } else if (s.pending_edits) {
      entries = *s.pending_edits;
    } else {
      throw io::ConfigError("edit-apply needs \"edits\" or an earlier edit-generate stage");
    }
    s.records = apply_edits(s.records, entries, s.ctx);
    io::write_records(output(s, name, "jsonl"), s.records);
  } else if (name == "stats") {
    io::write_json(output(s, name, "json"), io::stats_to_json(pipeline::compute_stats(s.records)));
  } else if (name == "eval") {
    eval::LabelSpace labels;
    labels.object_classes = eval::load_class_list(resolve(s, stage, "objects").string());
    labels.predicate_classes = eval::load_class_list(resolve(s, stage, "predicates").string());
    const auto gt = io::read_records(resolve(s, stage, "gt"));
    const std::size_t k = stage.value("k", eval::kDefaultK);
    const eval::LexicalTrigramProvider provider;
    const auto pairs = pair_for_eval(s.records, gt, s.ctx);
    const auto score = eval::score_dataset(pairs, k, labels, provider);
    io::write_json(output(s, name, "json"), io::eval_to_json(score, k, provider.name()));
  } else {
    throw io::ConfigError("unknown stage '" + name + "'");
  }
}

}  // namespace

RunSummary run(const fs::path& config_path, const fs::path& out_dir, std::optional<std::size_t> workers_override) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) throw io::ConfigError("cannot open " + config_path.string());
  const json config = json::parse(in, nullptr, false);
  if (config.is_discarded() || !config.is_object()) throw io::ConfigError(config_path.string() + ": not a JSON object");
  if (config.value("version", 0) != 1) throw io::ConfigError(config_path.string() + ": expected \"version\": 1");
  if (!config.contains("stages") || !config["stages"].is_array()) {
    throw io::ConfigError(config_path.string() + ": needs a \"stages\" list");
  }

  RunState s;
  s.base = config_path.parent_path();
  s.out_dir = out_dir;
  s.ctx.workers = workers_override.value_or(config.value("workers", std::size_t{1}));
  try {
    s.records = io::read_records(resolve(s, config, "graphs"));
  } catch (const io::ConfigError&) {
    throw io::ConfigError(config_path.string() + ": needs \"graphs\"");
  }
  fs::create_directories(out_dir);
  for (const auto& stage : config["stages"]) {
    ++s.step;
    try {
      run_stage(s, stage);
    } catch (const json::exception& e) {
      throw io::ConfigError("stage " + std::to_string(s.step) + ": " + e.what());
    }
  }
  const fs::path diagnostics = out_dir / "diagnostics.jsonl";
  io::write_text(diagnostics, io::diagnostics_to_text(s.ctx.diagnostics));
  s.summary.outputs.push_back(diagnostics);
  s.summary.diagnostics = s.ctx.diagnostics.size();
  return s.summary;
}

}  // namespace svg::stages
