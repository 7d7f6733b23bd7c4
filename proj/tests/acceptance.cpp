// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "support/eval_oracle.hpp"
#include "support/testing.hpp"
#include "svg/eval.hpp"
#include "svg/filters.hpp"
#include "svg/geometry.hpp"
#include "svg/io.hpp"
#include "svg/pipeline.hpp"
#include "svg/sgtext.hpp"
#include "svg/stages.hpp"
#include "svg/teacher.hpp"

using namespace svg;
namespace fs = std::filesystem;

namespace {

// Counts checks; only the first failure is kept for the report line.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (ok) return;
    ++failures_;
    if (first_.empty()) first_ = what;
  }
  void note(std::string text) { notes_ = std::move(text); }
  bool ok() const { return failures_ == 0; }
  std::string summary() const {
    std::ostringstream os;
    os << checks_ << " checks";
    if (!notes_.empty()) os << ", " << notes_;
    if (failures_ > 0) os << ", " << failures_ << " failed, first: " << first_;
    return os.str();
  }

 private:
  std::size_t checks_ = 0;
  std::size_t failures_ = 0;
  std::string first_;
  std::string notes_;
};

struct Criterion {
  const char* id;
  const char* title;
  double budget_seconds;  // 0: no runtime bound
  std::function<void(Check&)> body;
};

std::vector<std::string> nonblank_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::string published(const std::string& name) { return svgtest::read_file(svgtest::data_dir() / "published" / name); }

// ---------------------------------------------------------------------------

void grammar_fidelity(Check& c) {
  std::size_t lines = 0;

  const auto tokens = nonblank_lines(published("region_tokens.txt"));
  for (const auto& line : tokens) {
    std::size_t consumed = 0;
    const auto token = sgtext::parse_region_token(line, &consumed);
    c.expect(token && consumed == line.size(), "token line not fully consumed: " + line);
    if (token) c.expect(sgtext::parse_region_token(token->to_string()) == token, "token re-emission: " + line);
    ++lines;
  }

  // The two lines quoted as examples.
  const auto doc = sgtext::parse_document(
      "Objects:\nregion2: fence <|box_start|>(0,175),(1000,504)<|box_end|>\n"
      "Relations:\nregion4: region3 standing on, region7 beside\n");
  c.expect(doc.document.objects == std::vector<sgtext::ObjectLine>{{2, "fence", geometry::NormBBox{0, 175, 1000, 504}}},
           "fence object line");
  c.expect(doc.document.relations ==
               std::vector<sgtext::RelationLine>{{4, {{3, "standing on"}, {7, "beside"}}}},
           "region4 relation line");

  const std::string list = nonblank_lines(published("relation_list.txt")).at(0);
  std::vector<Diagnostic> diagnostics;
  const auto items = sgtext::parse_relation_items(list, 1, diagnostics);
  c.expect(diagnostics.empty() && items.size() == 5, "relation list items");
  const std::string wrapped = "Objects:\nRelations:\nregion4: " + list + "\n";
  c.expect(sgtext::emit_document(sgtext::parse_document(wrapped).document) == wrapped, "relation list re-emission");
  ++lines;

  for (const char* name : {"sg_detection.txt", "dense_sg.txt"}) {
    const std::string text = published(name);
    const auto parsed = sgtext::parse_document(text);
    c.expect(parsed.tally.rejected == 0, std::string(name) + " has rejected lines");
    c.expect(sgtext::emit_document(parsed.document) == text, std::string(name) + " is not byte-identical");
    lines += nonblank_lines(text).size();
  }
  const auto detection = sgtext::parse_scene_graph_text(published("sg_detection.txt"), 1000, 1000);
  c.expect(detection.graph.regions.size() == 7 && detection.graph.relations.size() == 6, "detection graph shape");

  const std::string classification = published("sg_classification.txt");
  const auto cls = sgtext::parse_scene_graph_text(classification, 640, 480);
  c.expect(sgtext::emit_scene_graph_text(cls.graph, false) == classification, "classification re-emission");
  lines += nonblank_lines(classification).size();
  c.note(std::to_string(lines) + " published lines");
}

// ---------------------------------------------------------------------------

void geometry_suite(Check& c) {
  svgtest::Rng rng(1001);
  std::uniform_real_distribution<double> coord(0, 1000), shift(-5000, 5000);
  auto box = [&] {
    const double x1 = coord(rng), x2 = coord(rng), y1 = coord(rng), y2 = coord(rng);
    return BBox{std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2)};
  };
  const int pairs = 20000;
  for (int i = 0; i < pairs; ++i) {
    const BBox a = box(), b = box();
    const double dx = shift(rng), dy = shift(rng);
    const BBox ta{a.x1 + dx, a.y1 + dy, a.x2 + dx, a.y2 + dy}, tb{b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy};
    const double v = geometry::iou_box(a, b);
    c.expect(std::abs(v - geometry::iou_box(b, a)) <= 1e-9, "IoU symmetry");
    c.expect(std::abs(geometry::iou_box(ta, tb) - v) <= 1e-9, "IoU translation invariance");
    if (a.width() > 0 && a.height() > 0) c.expect(std::abs(geometry::iou_box(a, a) - 1.0) <= 1e-9, "IoU identity");
  }

  // Every box on the 5-value grid {0..4}.
  std::vector<BBox> grid;
  for (int x1 = 0; x1 < 5; ++x1)
    for (int x2 = x1 + 1; x2 < 5; ++x2)
      for (int y1 = 0; y1 < 5; ++y1)
        for (int y2 = y1 + 1; y2 < 5; ++y2) grid.push_back(BBox{double(x1), double(y1), double(x2), double(y2)});
  const std::array thresholds{0.3, 0.5, 0.6};
  std::size_t cases = 0;
  auto nms_case = [&](const std::vector<BBox>& boxes, double thr, std::size_t k) {
    std::vector<geometry::Candidate> candidates;
    for (const auto& b : boxes) candidates.push_back({b, std::nullopt});
    c.expect(geometry::nms_by_area_indices(candidates, thr, k) == svgtest::nms_oracle(boxes, thr, k),
             "NMS differs from the greedy oracle");
    ++cases;
  };
  // All ordered sets of size up to 2, exhaustively.
  for (double thr : thresholds) {
    nms_case({}, thr, 8);
    for (const auto& a : grid) {
      nms_case({a}, thr, 8);
      for (const auto& b : grid) nms_case({a, b}, thr, 8);
    }
  }
  // Sampled sets of size 3..8 from the same grid.
  for (int i = 0; i < 20000; ++i) {
    const int n = svgtest::uniform(rng, 3, 8);
    std::vector<BBox> boxes;
    for (int j = 0; j < n; ++j) boxes.push_back(grid[std::size_t(svgtest::uniform(rng, 0, int(grid.size()) - 1))]);
    nms_case(boxes, thresholds[std::size_t(svgtest::uniform(rng, 0, 2))], std::size_t(svgtest::uniform(rng, 1, 8)));
  }
  c.note(std::to_string(pairs) + " box pairs, " + std::to_string(cases) + " NMS cases");
}

// ---------------------------------------------------------------------------

bool rule_oracle(filters::SpatialRule rule, svgtest::IntBox s, svgtest::IntBox o) {
  using filters::SpatialRule;
  switch (rule) {
    case SpatialRule::above: return svgtest::oracle_above(s, o);
    case SpatialRule::below: return svgtest::oracle_below(s, o);
    case SpatialRule::left: return svgtest::oracle_left(s, o);
    case SpatialRule::right: return svgtest::oracle_right(s, o);
    case SpatialRule::overlap: return svgtest::oracle_overlap(s, o);
    case SpatialRule::above_or_overlap: return svgtest::oracle_above(s, o) || svgtest::oracle_overlap(s, o);
    case SpatialRule::below_or_overlap: return svgtest::oracle_below(s, o) || svgtest::oracle_overlap(s, o);
  }
  return false;
}

void rule_filter_suite(Check& c) {
  using filters::SpatialRule;
  svgtest::Rng rng(1003);
  const auto map = filters::PredicateRuleMap::defaults();
  const std::vector<std::pair<std::string, SpatialRule>> entries(map.spatial().begin(), map.spatial().end());
  const int relations = 5000;
  for (int i = 0; i < relations; ++i) {
    const BBox sb = svgtest::random_box(rng, 1000, 1000), ob = svgtest::random_box(rng, 1000, 1000);
    const svgtest::IntBox s{int(sb.x1), int(sb.y1), int(sb.x2), int(sb.y2)};
    const svgtest::IntBox o{int(ob.x1), int(ob.y1), int(ob.x2), int(ob.y2)};
    const auto& [predicate, rule] = entries[std::size_t(svgtest::uniform(rng, 0, int(entries.size()) - 1))];
    SceneGraph g;
    g.image_id = "synthetic";
    g.image_width = g.image_height = 1000;
    g.regions = {{1, "a", sb, std::nullopt, std::nullopt}, {2, "b", ob, std::nullopt, std::nullopt}};
    g.relations = {{1, 2, predicate, std::nullopt}};
    const auto report = filters::rule_filter(g, map);
    c.expect((report.kept.size() == 1) == rule_oracle(rule, s, o), "rule_filter disagrees on '" + predicate + "'");
  }

  using geometry::NormBBox;
  auto flip_x = [](NormBBox b) { return NormBBox{1000 - b.x2, b.y1, 1000 - b.x1, b.y2}; };
  auto flip_y = [](NormBBox b) { return NormBBox{b.x1, 1000 - b.y2, b.x2, 1000 - b.y1}; };
  std::vector<NormBBox> grid;
  const int steps[] = {0, 200, 400, 600, 800, 1000};
  for (int x1 : steps)
    for (int x2 : steps)
      for (int y1 : steps)
        for (int y2 : steps)
          if (x1 < x2 && y1 < y2) grid.push_back({x1, y1, x2, y2});
  std::size_t pairs = 0;
  for (const auto& s : grid) {
    for (const auto& o : grid) {
      ++pairs;
      const bool above = filters::eval_rule(SpatialRule::above, s, o);
      const bool left = filters::eval_rule(SpatialRule::left, s, o);
      c.expect(above == filters::eval_rule(SpatialRule::below, flip_y(s), flip_y(o)), "above/below mirror");
      c.expect(above == filters::eval_rule(SpatialRule::below, o, s), "above/below swap");
      c.expect(left == filters::eval_rule(SpatialRule::right, flip_x(s), flip_x(o)), "left/right mirror");
      c.expect(left == filters::eval_rule(SpatialRule::right, o, s), "left/right swap");
    }
  }
  c.note(std::to_string(relations) + " relations, " + std::to_string(pairs) + " grid pairs");
}

// ---------------------------------------------------------------------------

void judge_truth_table(Check& c) {
  using filters::Answer;
  const Answer answers[] = {Answer::yes, Answer::no, Answer::abstain};
  const Relation rel{1, 2, "feeding", RelationCategory::interactional};
  for (auto a : answers) {
    for (auto b : answers) {
      std::map<RelationKey, std::vector<filters::JudgeVerdict>> verdicts;
      verdicts[RelationKey::of(rel)] = {{"j1", a, ""}, {"j2", b, ""}};
      const auto report = filters::judge_filter({{rel, "a feeding b"}}, verdicts);
      const bool removed = a == Answer::no || b == Answer::no;
      c.expect(report.removed.size() == (removed ? 1u : 0u) && report.kept.size() == (removed ? 0u : 1u),
               std::string("verdicts ") + std::string(to_string(a)) + "/" + std::string(to_string(b)));
    }
  }
  c.note("9 verdict pairs");
}

// ---------------------------------------------------------------------------

void pipeline_laws(Check& c) {
  svgtest::Rng rng(1005);
  const auto map = filters::PredicateRuleMap::defaults();
  const double thresholds[] = {0.0, 0.25, 0.5, 0.75, 0.95};
  const int graphs = 2000;
  for (int i = 0; i < graphs; ++i) {
    const SceneGraph raw = svgtest::random_graph(rng);
    const SceneGraph g = canonicalize(raw);
    c.expect(canonicalize(g) == g, "canonicalize idempotence");

    const auto first = filters::rule_filter(g, map);
    SceneGraph filtered = g;
    filtered.relations = first.kept;
    const auto second = filters::rule_filter(filtered, map);
    c.expect(second.kept == first.kept && second.removed.empty(), "rule_filter idempotence");

    c.expect(pipeline::merge_graphs(g, g) == g, "merge(a, a) == a");
    c.expect(pipeline::apply_edits(g, sgtext::EditSet{}).graph == g, "apply_edits(g, {}) == g");

    std::vector<geometry::Candidate> proposals;
    const int n = svgtest::uniform(rng, 0, 5);
    for (int j = 0; j < n; ++j) proposals.push_back({svgtest::random_box(rng, g.image_width, g.image_height), std::nullopt});
    for (const auto& r : g.regions) {
      if (svgtest::coin(rng)) proposals.push_back({BBox{r.bbox.x1, r.bbox.y1, r.bbox.x2 + 1, r.bbox.y2}, std::nullopt});
    }
    std::size_t previous = g.regions.size() + 1;
    for (double t : thresholds) {
      const auto kept = pipeline::validate_regions(g, proposals, t).graph.regions.size();
      c.expect(kept <= previous, "validate_regions monotone in threshold");
      previous = kept;
    }
  }
  c.note(std::to_string(graphs) + " graphs");
}

// ---------------------------------------------------------------------------

void evaluation_oracle(Check& c) {
  const eval::LexicalTrigramProvider provider;
  const auto fixtures = svgtest::eval_fixtures();
  c.expect(fixtures.size() >= 6, "fewer than six fixtures");
  bool saw_half = false, saw_near_miss = false;
  for (const auto& f : fixtures) {
    c.expect(f.pred.relations.size() <= 6 && f.gt.relations.size() <= 6, f.name + " too large");
    const auto got = eval::match_triplets(f.pred, f.gt, f.k, f.labels, provider);
    const auto oracle = svgtest::brute_force(f.pred, f.gt, f.k);
    c.expect(got.recall_at_k == oracle.recall, f.name + " recall differs from the oracle");
    c.expect(got.mean_recall_at_k == oracle.mean_recall, f.name + " mean recall differs from the oracle");
    c.expect(got.recall_at_k == f.recall && got.mean_recall_at_k == f.mean_recall, f.name + " hand-computed values");
    if (f.name == "two_triplets_half") saw_half = got.recall_at_k == 0.5;
    if (f.name == "iou_half_near_miss") saw_near_miss = got.matched == 0;
  }
  c.expect(saw_half, "two-triplet fixture R=0.5");
  c.expect(saw_near_miss, "IoU = 0.5 near miss");
  c.note(std::to_string(fixtures.size()) + " fixtures");
}

// ---------------------------------------------------------------------------

void stats_golden(Check& c) {
  const auto records = io::read_records(svgtest::data_dir() / "stats" / "corpus.jsonl");
  const auto golden = nlohmann::json::parse(svgtest::read_file(svgtest::data_dir() / "stats" / "golden.json"));
  const auto whole = pipeline::compute_stats(records);
  const auto got = nlohmann::json::parse(io::stats_to_json(whole).dump());
  for (const auto& [key, value] : golden.items()) {
    if (!got.contains(key)) {
      c.expect(false, "missing " + key);
    } else if (value.is_number_float()) {
      c.expect(std::abs(got[key].get<double>() - value.get<double>()) <= 1e-12, key);
    } else {
      c.expect(got[key] == value, key);
    }
  }
  const std::string whole_text = io::stats_to_json(whole).dump();
  std::size_t splits = 0;
  for (std::size_t cut1 = 0; cut1 <= records.size(); ++cut1) {
    for (std::size_t cut2 = cut1; cut2 <= records.size(); ++cut2) {
      pipeline::StatsAccumulator s1, s2, s3;
      for (std::size_t i = 0; i < records.size(); ++i) (i < cut1 ? s1 : i < cut2 ? s2 : s3).add(records[i]);
      s1.merge(s2);
      s1.merge(s3);
      const auto split = pipeline::finalize(s1);
      c.expect(split.images == whole.images && split.regions == whole.regions && split.relations == whole.relations &&
                   split.relations_by_category == whole.relations_by_category &&
                   split.objects_per_image == whole.objects_per_image &&
                   split.triplets_per_image == whole.triplets_per_image &&
                   split.predicates_per_region == whole.predicates_per_region &&
                   std::abs(split.predicates_per_region_image_mean - whole.predicates_per_region_image_mean) <= 1e-12,
               "shard split " + std::to_string(cut1) + "/" + std::to_string(cut2));
      ++splits;
    }
  }
  c.note(std::to_string(golden.size()) + " golden values, " + std::to_string(splits) + " shard splits");
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) out[fs::relative(entry.path(), root).generic_string()] = svgtest::read_file(entry.path());
  }
  return out;
}

void hermetic_end_to_end(Check& c) {
  const fs::path config = svgtest::data_dir() / "e2e" / "run.json";
  const nlohmann::json run = nlohmann::json::parse(svgtest::read_file(config));
  std::vector<std::string> stages;
  for (const auto& s : run["stages"]) stages.push_back(s["stage"]);
  c.expect(stages == std::vector<std::string>{"validate-regions", "annotate", "filter", "edit-generate", "edit-apply",
                                              "stats", "eval"},
           "stage list");
  // Every transport in the run must be a replay fixture.
  for (const char* name : {"teacher.json", "editor.json"}) {
    const auto t = nlohmann::json::parse(svgtest::read_file(svgtest::data_dir() / "e2e" / name));
    c.expect(t["kind"] == "replay", std::string(name) + " is not a replay transport");
  }
  const auto judges = nlohmann::json::parse(svgtest::read_file(svgtest::data_dir() / "e2e" / "judges.json"));
  for (const auto& j : judges["judges"]) c.expect(j["transport"]["kind"] == "replay", "judge is not a replay transport");

  svgtest::TempDir dir("acceptance-e2e");
  const auto a = stages::run(config, dir / "a", 1);
  const auto b = stages::run(config, dir / "b", 4);
  const auto tree_a = read_tree(dir / "a");
  const auto tree_b = read_tree(dir / "b");
  c.expect(tree_a == tree_b, "two runs differ");
  c.expect(tree_a == read_tree(svgtest::data_dir() / "e2e" / "expected"), "run differs from the committed outputs");
  c.expect(a.outputs.size() == 10, "unexpected output count");
  c.note(std::to_string(tree_a.size()) + " output files");
}

// ---------------------------------------------------------------------------

void threshold_defaults(Check& c) {
  c.expect(pipeline::kDefaultValidationIou == 0.5, "region validation IoU");
  c.expect(pipeline::kDefaultNmsIou == 0.6, "NMS IoU");
  c.expect(filters::kDefaultSimilarityThreshold == 0.3, "similarity threshold");
  c.expect(stages::FilterOptions{}.similarity_threshold == 0.3, "filter stage similarity threshold");
  c.expect(kMaxRelationsPerSubject == 20, "relation cap");
  c.expect(eval::kDefaultK == 20, "K");
  c.expect(eval::kMatchIou == 0.5, "match IoU");
  const teacher::ChatRequest request;
  c.expect(request.temperature == 0.2 && request.top_p == 1.0, "request sampling defaults");
  SceneGraph g;
  g.image_id = "x";
  g.image_width = g.image_height = 10;
  const auto relation_prompt = teacher::build_relation_prompt(g, {});
  c.expect(relation_prompt.temperature == 0.2 && relation_prompt.top_p == 1.0, "relation prompt sampling");
  const auto edit_prompt = teacher::build_edit_prompt(g, "");
  c.expect(edit_prompt.temperature == 0.2 && edit_prompt.top_p == 1.0, "edit prompt sampling");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"AC1", "grammar fidelity", 1.0, grammar_fidelity},
      {"AC2", "geometry suite", 30.0, geometry_suite},
      {"AC3", "rule filter vs geometric oracle", 0, rule_filter_suite},
      {"AC4", "judge combination truth table", 0, judge_truth_table},
      {"AC5", "pipeline laws", 0, pipeline_laws},
      {"AC6", "evaluation oracle", 0, evaluation_oracle},
      {"AC7", "stats golden and shard split", 0, stats_golden},
      {"AC8", "hermetic end-to-end", 60.0, hermetic_end_to_end},
      {"AC9", "threshold defaults", 0, threshold_defaults},
  };
  int failed = 0;
  for (const auto& criterion : criteria) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      criterion.body(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (criterion.budget_seconds > 0) {
      std::ostringstream budget;
      budget << "runtime " << seconds << " s over " << criterion.budget_seconds << " s";
      check.expect(seconds < criterion.budget_seconds, budget.str());
    }
    const bool ok = check.ok();
    failed += !ok;
    std::printf("%s %s: %s (%s, %.3f s)\n", ok ? "PASS" : "FAIL", criterion.id, criterion.title,
                check.summary().c_str(), seconds);
  }
  return failed == 0 ? 0 : 1;
}
