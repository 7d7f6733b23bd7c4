// svgtool: command-line front end over the svgkit library.
//
// Exit codes: 0 success, 1 data error, 2 config error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "svg/core.hpp"
#include "svg/eval.hpp"
#include "svg/filters.hpp"
#include "svg/io.hpp"
#include "svg/pipeline.hpp"
#include "svg/sgtext.hpp"
#include "svg/stages.hpp"
#include "svg/teacher.hpp"

namespace fs = std::filesystem;
using namespace svg;

namespace {

constexpr int kOk = 0;
constexpr int kDataError = 1;
constexpr int kConfigError = 2;

// Matches the 99-region ceiling of the region-token vocabulary.
constexpr std::size_t kDefaultProposalCount = kMaxRegionId + 1;

struct Common {
  std::size_t jobs = 1;
  std::string diagnostics;
};

void write_diagnostics(const Common& common, const stages::Context& ctx) {
  if (!common.diagnostics.empty()) {
    io::write_text(common.diagnostics, io::diagnostics_to_text(ctx.diagnostics));
  } else if (!ctx.diagnostics.empty()) {
    std::cerr << ctx.diagnostics.size() << " diagnostic(s); pass --diagnostics to keep them\n";
  }
}

stages::Context make_context(const Common& common) {
  stages::Context ctx;
  ctx.workers = std::max<std::size_t>(common.jobs, 1);
  return ctx;
}

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--jobs,-j", common.jobs, "Worker threads")->capture_default_str();
  cmd->add_option("--diagnostics", common.diagnostics, "Diagnostics sidecar (JSONL)");
}

// ---------------------------------------------------------------------------

int refine_proposals(const std::vector<std::string>& inputs, double iou, std::size_t k, const std::string& out) {
  if (k == 0) throw io::ConfigError("--k must be positive");
  std::vector<io::ImageProposals> images;
  for (const auto& path : inputs) {
    auto part = io::read_proposals(path);
    images.insert(images.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  // Lines for one image may be spread over several files.
  std::vector<io::ImageProposals> merged;
  std::map<std::string, std::size_t> index;
  for (auto& image : images) {
    auto [it, inserted] = index.emplace(image.image_id, merged.size());
    if (inserted) {
      merged.push_back(std::move(image));
      continue;
    }
    auto& target = merged[it->second];
    if (target.width != image.width || target.height != image.height) {
      throw io::DataError("image '" + image.image_id + "' has inconsistent sizes across proposal files");
    }
    for (auto& set : image.sets) target.sets.push_back(std::move(set));
  }
  if (merged.empty()) std::cerr << "warning: no proposals in input\n";
  std::string text;
  for (const auto& image : merged) {
    const auto survivors = pipeline::refine_proposals(image.sets, iou, k);
    text += io::proposals_to_json(image.image_id, image.width, image.height, "refined", survivors).dump();
    text += '\n';
  }
  io::write_text(out, text);
  return kOk;
}

std::vector<io::EditEntry> read_edit_files(const std::vector<std::string>& paths) {
  std::vector<io::EditEntry> entries;
  for (const auto& p : paths) {
    auto part = io::read_edits(p);
    entries.insert(entries.end(), part.begin(), part.end());
  }
  return entries;
}

int merge_files(const std::string& a_path, const std::string& b_path, double iou, const std::string& out) {
  const auto a = io::read_records(a_path);
  const auto b = io::read_records(b_path);
  std::map<std::string, std::size_t> b_index;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!b_index.emplace(b[i].scene_graph.image_id, i).second) {
      throw io::DataError(b_path + ": duplicate image '" + b[i].scene_graph.image_id + "'");
    }
  }
  std::vector<DatasetRecord> merged;
  std::set<std::string> seen;
  for (const auto& rec : a) {
    if (!seen.insert(rec.scene_graph.image_id).second) {
      throw io::DataError(a_path + ": duplicate image '" + rec.scene_graph.image_id + "'");
    }
    auto it = b_index.find(rec.scene_graph.image_id);
    merged.push_back(it == b_index.end() ? rec : pipeline::merge_records(rec, b[it->second], iou));
  }
  for (const auto& rec : b) {
    if (!seen.contains(rec.scene_graph.image_id)) merged.push_back(rec);
  }
  io::write_records(out, merged);
  return kOk;
}

int stats(const std::vector<std::string>& inputs, const std::string& out) {
  pipeline::StatsAccumulator acc;
  for (const auto& path : inputs) {
    pipeline::StatsAccumulator shard;
    for (const auto& r : io::read_records(path)) shard.add(r);
    acc.merge(shard);
  }
  const auto report = io::stats_to_json(pipeline::finalize(acc));
  if (out.empty() || out == "-") {
    std::cout << report.dump(2) << "\n";
  } else {
    io::write_json(out, report);
  }
  return kOk;
}

// Predictions come from a record file, or from a directory of raw model
// outputs named <image_id>.txt that are parsed with the region-token grammar.
std::vector<DatasetRecord> load_predictions(const fs::path& pred, const std::vector<DatasetRecord>& gt,
                                            stages::Context& ctx) {
  if (!fs::is_directory(pred)) return io::read_records(pred);
  std::vector<DatasetRecord> out;
  for (const auto& g : gt) {
    const auto& truth = g.scene_graph;
    const fs::path file = pred / (truth.image_id + ".txt");
    if (!fs::exists(file)) continue;
    DatasetRecord rec;
    try {
      auto parsed = sgtext::parse_scene_graph_text(io::read_text(file), truth.image_width, truth.image_height);
      for (const auto& d : parsed.diagnostics) ctx.diagnostics.push_back({"eval", truth.image_id, d});
      rec.scene_graph = std::move(parsed.graph);
    } catch (const sgtext::ParseError& e) {
      ctx.diagnostics.push_back({"eval", truth.image_id, Diagnostic{"unparseable_prediction", e.what(), 0}});
      rec.scene_graph.image_width = truth.image_width;
      rec.scene_graph.image_height = truth.image_height;
    }
    rec.scene_graph.image_id = truth.image_id;
    rec.source = "raw-text";
    out.push_back(std::move(rec));
  }
  return out;
}

int evaluate(const std::string& pred, const std::string& gt_path, std::size_t k, const std::string& objects,
             const std::string& predicates, const std::string& embeddings, const std::string& out,
             const Common& common) {
  if (k == 0) throw io::ConfigError("--k must be positive");
  eval::LabelSpace labels;
  try {
    labels.object_classes = eval::load_class_list(objects);
    labels.predicate_classes = eval::load_class_list(predicates);
  } catch (const std::exception& e) {
    throw io::ConfigError(e.what());
  }
  std::unique_ptr<eval::SimilarityProvider> provider;
  if (embeddings.empty()) {
    provider = std::make_unique<eval::LexicalTrigramProvider>();
  } else {
    const auto cfg = io::load_transport_config(embeddings);
    if (cfg.kind != "http") throw io::ConfigError("--embeddings needs an http transport config");
    eval::RemoteEmbeddingConfig rc;
    rc.endpoint = cfg.http.endpoint;
    rc.model = cfg.http.model;
    rc.timeout_seconds = cfg.http.timeout_seconds;
    if (cfg.http.path != teacher::HttpConfig{}.path) rc.path = cfg.http.path;
    if (!cfg.api_key_env.empty()) {
      const char* key = std::getenv(cfg.api_key_env.c_str());
      if (key == nullptr) throw io::ConfigError("environment variable " + cfg.api_key_env + " is not set");
      rc.api_key = key;
    }
    provider = std::make_unique<eval::RemoteEmbeddingProvider>(rc);
  }
  stages::Context ctx = make_context(common);
  const auto gt = io::read_records(gt_path);
  const auto predictions = load_predictions(pred, gt, ctx);
  const auto pairs = stages::pair_for_eval(predictions, gt, ctx);
  const auto score = eval::score_dataset(pairs, k, labels, *provider);
  const auto report = io::eval_to_json(score, k, provider->name());
  if (out.empty() || out == "-") {
    std::cout << report.dump(2) << "\n";
  } else {
    io::write_json(out, report);
  }
  write_diagnostics(common, ctx);
  return kOk;
}

void print_requests(const std::vector<teacher::ChatRequest>& requests, const std::vector<DatasetRecord>& records) {
  for (std::size_t i = 0; i < requests.size(); ++i) {
    std::cout << "=== " << records[i].scene_graph.image_id << " " << requests[i].digest() << "\n";
    if (i == 0 && !requests[i].system_prompt.empty()) std::cout << "--- system\n" << requests[i].system_prompt << "\n";
    std::cout << "--- user\n" << requests[i].user_prompt << "\n";
    for (const auto& ref : requests[i].image_refs) std::cout << "--- image " << ref << "\n";
  }
}

int report_failure(const char* kind, const std::exception& e, int code) {
  std::cerr << "svgtool: " << kind << ": " << e.what() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-graph dataset toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "svgtool 1.0");

  // refine-proposals
  std::vector<std::string> rp_in;
  std::string rp_out;
  double rp_iou = pipeline::kDefaultNmsIou;
  std::size_t rp_k = kDefaultProposalCount;
  auto* rp = app.add_subcommand("refine-proposals", "Union proposal sets, NMS, keep the K largest");
  rp->add_option("--in", rp_in, "Proposal files (JSONL)")->required()->check(CLI::ExistingFile);
  rp->add_option("--iou", rp_iou, "NMS IoU threshold")->capture_default_str();
  rp->add_option("--k", rp_k, "Survivors kept per image")->capture_default_str();
  rp->add_option("--out", rp_out, "Output proposal file")->required();

  // validate-regions
  std::string vr_graphs, vr_props, vr_out;
  double vr_iou = pipeline::kDefaultValidationIou;
  Common vr_common;
  auto* vr = app.add_subcommand("validate-regions", "Drop regions without a matching proposal");
  vr->add_option("--graphs", vr_graphs, "Record file")->required()->check(CLI::ExistingFile);
  vr->add_option("--proposals", vr_props, "Proposal file")->required()->check(CLI::ExistingFile);
  vr->add_option("--iou", vr_iou, "Keep regions with best IoU above this")->capture_default_str();
  vr->add_option("--out", vr_out, "Output record file")->required();
  add_common(vr, vr_common);

  // filter
  std::string fl_graphs, fl_rules, fl_judges, fl_scores, fl_out, fl_report;
  double fl_sim = filters::kDefaultSimilarityThreshold;
  Common fl_common;
  auto* fl = app.add_subcommand("filter", "Rule, judge and similarity relation filters");
  fl->add_option("--graphs", fl_graphs, "Record file")->required()->check(CLI::ExistingFile);
  fl->add_option("--rules", fl_rules, "Predicate rule map (default: built-in table)");
  fl->add_option("--judges", fl_judges, "Judges config; without it non-spatial relations pass through");
  fl->add_option("--sim-scores", fl_scores, "Precomputed similarity scores; enables the similarity filter");
  fl->add_option("--sim-threshold", fl_sim, "Similarity filter threshold")->capture_default_str();
  fl->add_option("--out", fl_out, "Output record file")->required();
  fl->add_option("--report", fl_report, "Filter report (JSON)")->required();
  add_common(fl, fl_common);

  // edit-apply
  std::string ea_graphs, ea_out;
  std::vector<std::string> ea_edits;
  Common ea_common;
  auto* ea = app.add_subcommand("edit-apply", "Apply editor responses to records");
  ea->add_option("--graphs", ea_graphs, "Record file")->required()->check(CLI::ExistingFile);
  ea->add_option("--edits", ea_edits, "Edit files (JSONL)")->required()->check(CLI::ExistingFile);
  ea->add_option("--out", ea_out, "Output record file")->required();
  add_common(ea, ea_common);

  // merge
  std::string mg_a, mg_b, mg_out;
  double mg_iou = pipeline::kDefaultMergeIou;
  auto* mg = app.add_subcommand("merge", "Merge two record files image by image");
  mg->add_option("--a", mg_a, "Primary record file")->required()->check(CLI::ExistingFile);
  mg->add_option("--b", mg_b, "Secondary record file")->required()->check(CLI::ExistingFile);
  mg->add_option("--iou", mg_iou, "Regions above this IoU are unified")->capture_default_str();
  mg->add_option("--out", mg_out, "Output record file")->required();

  // stats
  std::vector<std::string> st_graphs;
  std::string st_out;
  auto* st = app.add_subcommand("stats", "Dataset statistics");
  st->add_option("--graphs", st_graphs, "Record files (shards are combined)")->required()->check(CLI::ExistingFile);
  st->add_option("--out", st_out, "Report file (default: stdout)");

  // eval
  std::string ev_pred, ev_gt, ev_objects, ev_predicates, ev_embeddings, ev_out;
  std::size_t ev_k = eval::kDefaultK;
  Common ev_common;
  auto* ev = app.add_subcommand("eval", "Scene-graph detection recall");
  ev->add_option("--pred", ev_pred, "Record file, or directory of <image_id>.txt outputs")
      ->required()
      ->check(CLI::ExistingPath);
  ev->add_option("--gt", ev_gt, "Ground-truth record file")->required()->check(CLI::ExistingFile);
  ev->add_option("--k", ev_k, "Predictions considered per image")->capture_default_str();
  ev->add_option("--objects", ev_objects, "Object class list")->required();
  ev->add_option("--predicates", ev_predicates, "Predicate class list")->required();
  ev->add_option("--embeddings", ev_embeddings, "Remote embedding config (default: lexical trigrams)");
  ev->add_option("--out", ev_out, "Report file (default: stdout)");
  add_common(ev, ev_common);

  // annotate
  std::string an_graphs, an_transport, an_captions, an_out, an_responses;
  int an_subjects = teacher::kDefaultSubjectCount;
  Common an_common;
  auto* an = app.add_subcommand("annotate", "Dense relation annotation by a teacher model");
  an->add_option("--graphs", an_graphs, "Record file")->required()->check(CLI::ExistingFile);
  an->add_option("--transport", an_transport, "Transport config; without it prompts are printed");
  an->add_option("--captions", an_captions, "Captions file");
  an->add_option("--subjects", an_subjects, "Subjects requested per image")->capture_default_str();
  an->add_option("--out", an_out, "Output record file");
  an->add_option("--responses", an_responses, "Raw responses file");
  add_common(an, an_common);

  // edit-generate
  std::string eg_graphs, eg_transport, eg_captions, eg_out;
  Common eg_common;
  auto* eg = app.add_subcommand("edit-generate", "Ask an editor model for scene-graph edits");
  eg->add_option("--graphs", eg_graphs, "Record file")->required()->check(CLI::ExistingFile);
  eg->add_option("--transport", eg_transport, "Transport config; without it prompts are printed");
  eg->add_option("--captions", eg_captions, "Captions file (dense_caption)");
  eg->add_option("--out", eg_out, "Edits file, readable by edit-apply");
  add_common(eg, eg_common);

  // run
  std::string rn_config, rn_out;
  std::optional<std::size_t> rn_jobs;
  auto* rn = app.add_subcommand("run", "Run a declarative stage list");
  rn->add_option("--config", rn_config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  rn->add_option("--out-dir", rn_out, "Output directory")->required();
  rn->add_option("--jobs,-j", rn_jobs, "Worker threads (overrides the config)");

  // default-rules
  auto* dr = app.add_subcommand("default-rules", "Print the built-in predicate rule map");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*rp) return refine_proposals(rp_in, rp_iou, rp_k, rp_out);

    if (*vr) {
      auto ctx = make_context(vr_common);
      const auto proposals = io::proposals_by_image(io::read_proposals(vr_props));
      io::write_records(vr_out, stages::validate(io::read_records(vr_graphs), proposals, vr_iou, ctx));
      write_diagnostics(vr_common, ctx);
      return kOk;
    }

    if (*fl) {
      stages::FilterOptions options;
      if (!fl_rules.empty()) options.rules = filters::PredicateRuleMap::load(fl_rules);
      stages::JudgePanel judges;
      if (!fl_judges.empty()) {
        judges = io::load_judges(fl_judges);
        options.judges = &judges;
      }
      std::map<filters::SimilarityKey, double> scores;
      if (!fl_scores.empty()) {
        scores = io::read_similarity_scores(fl_scores);
        options.similarity = &scores;
      }
      options.similarity_threshold = fl_sim;
      auto ctx = make_context(fl_common);
      auto result = stages::filter(io::read_records(fl_graphs), options, ctx);
      io::write_records(fl_out, result.records);
      io::write_json(fl_report, io::filter_report_to_json(result.report));
      write_diagnostics(fl_common, ctx);
      return kOk;
    }

    if (*ea) {
      auto ctx = make_context(ea_common);
      io::write_records(ea_out, stages::apply_edits(io::read_records(ea_graphs), read_edit_files(ea_edits), ctx));
      write_diagnostics(ea_common, ctx);
      return kOk;
    }

    if (*mg) return merge_files(mg_a, mg_b, mg_iou, mg_out);
    if (*st) return stats(st_graphs, st_out);
    if (*ev) return evaluate(ev_pred, ev_gt, ev_k, ev_objects, ev_predicates, ev_embeddings, ev_out, ev_common);

    if (*an) {
      const auto records = io::read_records(an_graphs);
      const auto captions = an_captions.empty() ? std::map<std::string, io::ImageCaptions>{}
                                                : io::read_captions(an_captions);
      if (an_subjects < 1) throw io::ConfigError("--subjects must be positive");
      if (an_transport.empty()) {
        print_requests(stages::annotation_requests(records, captions, an_subjects), records);
        return kOk;
      }
      if (an_out.empty()) throw io::ConfigError("--out is required with --transport");
      const auto endpoint = io::make_endpoint(io::load_transport_config(an_transport));
      auto ctx = make_context(an_common);
      auto result = stages::annotate(records, captions, endpoint, an_subjects, ctx);
      io::write_records(an_out, result.records);
      if (!an_responses.empty()) io::write_text(an_responses, io::responses_to_text(result.responses));
      write_diagnostics(an_common, ctx);
      return kOk;
    }

    if (*eg) {
      const auto records = io::read_records(eg_graphs);
      const auto captions = eg_captions.empty() ? std::map<std::string, io::ImageCaptions>{}
                                                : io::read_captions(eg_captions);
      if (eg_transport.empty()) {
        print_requests(stages::edit_requests(records, captions), records);
        return kOk;
      }
      if (eg_out.empty()) throw io::ConfigError("--out is required with --transport");
      const auto endpoint = io::make_endpoint(io::load_transport_config(eg_transport));
      auto ctx = make_context(eg_common);
      io::write_text(eg_out, io::responses_to_text(stages::generate_edits(records, captions, endpoint, ctx)));
      write_diagnostics(eg_common, ctx);
      return kOk;
    }

    if (*rn) {
      const auto summary = stages::run(rn_config, rn_out, rn_jobs);
      for (const auto& p : summary.outputs) std::cout << p.string() << "\n";
      return kOk;
    }

    if (*dr) {
      std::cout << filters::PredicateRuleMap::defaults().to_json_text() << "\n";
      return kOk;
    }
  } catch (const filters::ConfigError& e) {
    return report_failure("config error", e, kConfigError);
  } catch (const filters::WiringError& e) {
    return report_failure("config error", e, kConfigError);
  } catch (const teacher::TransportError& e) {
    const bool config = e.kind == teacher::FailureKind::unauthorized || e.kind == teacher::FailureKind::bad_request;
    return report_failure("transport error", e, config ? kConfigError : kDataError);
  } catch (const std::exception& e) {
    return report_failure("data error", e, kDataError);
  }
  return kOk;
}
