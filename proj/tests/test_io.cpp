#include <doctest.h>

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "support/testing.hpp"
#include "svg/io.hpp"

using namespace svg;
using nlohmann::json;

namespace {

DatasetRecord sample_record() {
  DatasetRecord r;
  r.source = "vg";
  r.provenance = {Stage::raw, Stage::validated};
  SceneGraph& g = r.scene_graph;
  g.image_id = "img1";
  g.image_width = 20;
  g.image_height = 10;
  Region a{0, "man", BBox{1, 1, 5, 9}, std::nullopt, 40};
  Region b{1, "dog", BBox{6, 2, 12, 8}, Mask::from_box(20, 10, BBox{6, 2, 12, 8}), std::nullopt};
  g.regions = {a, b};
  g.relations = {{0, 1, "walking", RelationCategory::interactional}, {1, 0, "near", std::nullopt}};
  return r;
}

int count_code(const std::vector<io::StageDiagnostic>& ds, std::string_view code) {
  int n = 0;
  for (const auto& d : ds) n += d.diagnostic.code == code;
  return n;
}

}  // namespace

TEST_SUITE("records") {
  TEST_CASE("json round trip keeps every field") {
    const auto r = sample_record();
    const auto j = io::record_to_json(r);
    CHECK(j["schema_version"] == 1);
    CHECK_FALSE(j["regions"][0].contains("mask"));
    CHECK_FALSE(j["relations"][1].contains("category"));
    CHECK(io::record_from_json(json::parse(j.dump())) == r);
  }

  TEST_CASE("file round trip is byte stable") {
    svgtest::TempDir dir("io-records");
    svgtest::Rng rng(7);
    std::vector<DatasetRecord> records;
    for (int i = 0; i < 25; ++i) {
      DatasetRecord r;
      r.scene_graph = svgtest::random_graph(rng);
      r.scene_graph.image_id = "g" + std::to_string(i);
      r.source = "vg";
      r.provenance = {Stage::raw};
      records.push_back(std::move(r));
    }
    io::write_records(dir / "a.jsonl", records);
    const auto back = io::read_records(dir / "a.jsonl");
    CHECK(back == records);
    CHECK(io::records_to_text(back) == svgtest::read_file(dir / "a.jsonl"));
  }

  TEST_CASE("schema version is enforced") {
    auto j = json::parse(io::record_to_json(sample_record()).dump());
    j.erase("schema_version");
    CHECK_THROWS_AS(io::record_from_json(j), io::DataError);
    j["schema_version"] = 2;
    CHECK_THROWS_AS(io::record_from_json(j), io::DataError);
  }

  TEST_CASE("bad lines name the file and line") {
    svgtest::TempDir dir("io-bad");
    const auto good = io::record_to_json(sample_record()).dump();
    svgtest::write_file(dir / "r.jsonl", good + "\n\n[1,2]\n");
    try {
      io::read_records(dir / "r.jsonl");
      FAIL("expected DataError");
    } catch (const io::DataError& e) {
      CHECK(std::string(e.what()).find("r.jsonl:3") != std::string::npos);
    }
    auto j = json::parse(good);
    j["relations"][0]["category"] = "weird";
    svgtest::write_file(dir / "c.jsonl", j.dump() + "\n");
    CHECK_THROWS_AS(io::read_records(dir / "c.jsonl"), io::DataError);
    j = json::parse(good);
    j["provenance"] = {"raw", "cooked"};
    svgtest::write_file(dir / "p.jsonl", j.dump() + "\n");
    CHECK_THROWS_AS(io::read_records(dir / "p.jsonl"), io::DataError);
    j = json::parse(good);
    j["regions"][1]["mask"]["counts"] = {1, 2};
    svgtest::write_file(dir / "m.jsonl", j.dump() + "\n");
    CHECK_THROWS_AS(io::read_records(dir / "m.jsonl"), io::DataError);
    CHECK_THROWS_AS(io::read_records(dir / "missing.jsonl"), io::DataError);
  }
}

TEST_SUITE("side inputs") {
  TEST_CASE("proposals group by image and flatten") {
    svgtest::TempDir dir("io-proposals");
    const std::vector<geometry::Candidate> a{{BBox{0, 0, 5, 5}, std::nullopt}};
    const std::vector<geometry::Candidate> b{{BBox{1, 1, 4, 4}, Mask::from_box(10, 10, BBox{1, 1, 4, 4})},
                                             {BBox{2, 2, 8, 8}, std::nullopt}};
    const std::string text = io::proposals_to_json("x", 10, 10, "sam_whole", a).dump() + "\n" +
                             io::proposals_to_json("y", 10, 10, "sam_whole", a).dump() + "\n" +
                             io::proposals_to_json("x", 10, 10, "sam_part", b).dump() + "\n";
    svgtest::write_file(dir / "p.jsonl", text);
    const auto images = io::read_proposals(dir / "p.jsonl");
    REQUIRE(images.size() == 2);
    CHECK(images[0].image_id == "x");
    CHECK(images[0].sets.size() == 2);
    const auto flat = io::proposals_by_image(images);
    CHECK(flat.at("x").size() == 3);
    CHECK(flat.at("x")[1].mask == b[0].mask);
    CHECK(flat.at("y").size() == 1);

    svgtest::write_file(dir / "bad.jsonl", io::proposals_to_json("x", 10, 10, "s", a).dump() + "\n" +
                                               io::proposals_to_json("x", 11, 10, "s", a).dump() + "\n");
    CHECK_THROWS_AS(io::read_proposals(dir / "bad.jsonl"), io::DataError);
  }

  TEST_CASE("edits accept raw responses and objects") {
    svgtest::TempDir dir("io-edits");
    svgtest::write_file(dir / "e.jsonl",
                        R"({"image_id":"a","response":"text"})" "\n"
                        R"({"image_id":"b","edits":{"remove":[]}})" "\n");
    const auto edits = io::read_edits(dir / "e.jsonl");
    REQUIRE(edits.size() == 2);
    CHECK(edits[0].text == "text");
    CHECK(json::parse(edits[1].text) == json::parse(R"({"remove":[]})"));
    svgtest::write_file(dir / "bad.jsonl", R"({"image_id":"a"})" "\n");
    CHECK_THROWS_AS(io::read_edits(dir / "bad.jsonl"), io::DataError);
  }

  TEST_CASE("captions sort region ids and default the dense caption") {
    svgtest::TempDir dir("io-captions");
    svgtest::write_file(dir / "c.jsonl",
                        R"({"image_id":"a","captions":["one.","two."],"region_captions":{"10":"x","2":"y"}})" "\n"
                        R"({"image_id":"b","dense_caption":"dense"})" "\n");
    const auto c = io::read_captions(dir / "c.jsonl");
    CHECK(c.at("a").dense_caption == "one. two.");
    CHECK(c.at("a").region_captions == std::vector<std::pair<int, std::string>>{{2, "y"}, {10, "x"}});
    CHECK(c.at("b").dense_caption == "dense");
    svgtest::write_file(dir / "dup.jsonl", R"({"image_id":"a"})" "\n" R"({"image_id":"a"})" "\n");
    CHECK_THROWS_AS(io::read_captions(dir / "dup.jsonl"), io::DataError);
    svgtest::write_file(dir / "key.jsonl", R"({"image_id":"a","region_captions":{"r1":"x"}})" "\n");
    CHECK_THROWS_AS(io::read_captions(dir / "key.jsonl"), io::DataError);
  }

  TEST_CASE("similarity scores key on phrase and crop") {
    svgtest::TempDir dir("io-scores");
    svgtest::write_file(dir / "s.jsonl", R"({"phrase":"man on horse","crop_ref":"i#crop=0,0,1,1","score":0.31})" "\n");
    const auto scores = io::read_similarity_scores(dir / "s.jsonl");
    CHECK(scores.at({"man on horse", "i#crop=0,0,1,1"}) == doctest::Approx(0.31));
  }
}

TEST_SUITE("transport config") {
  TEST_CASE("replay paths resolve against the config directory") {
    const auto c = io::transport_config_from_json(json::parse(R"({"kind":"replay","fixtures":"fx","max_in_flight":2})"),
                                                  "/base");
    CHECK(c.fixtures == std::filesystem::path("/base/fx"));
    CHECK(c.max_in_flight == 2);
    CHECK(c.max_attempts == 3);
  }

  TEST_CASE("invalid configs are config errors") {
    CHECK_THROWS_AS(io::transport_config_from_json(json::parse(R"({"kind":"carrier"})"), "."), io::ConfigError);
    CHECK_THROWS_AS(io::transport_config_from_json(json::parse(R"({"kind":"replay"})"), "."), io::ConfigError);
    CHECK_THROWS_AS(io::transport_config_from_json(json::parse(R"({"kind":"replay","fixtures":"f","max_attempts":0})"), "."),
                    io::ConfigError);
    CHECK_THROWS_AS(io::load_transport_config("/nonexistent/transport.json"), io::ConfigError);
  }

  TEST_CASE("an unset api key variable stops endpoint creation") {
    ::unsetenv("SVGKIT_TEST_UNSET_KEY");
    const auto c = io::transport_config_from_json(
        json::parse(R"({"kind":"http","endpoint":"http://127.0.0.1:1","api_key_env":"SVGKIT_TEST_UNSET_KEY"})"), ".");
    CHECK_THROWS_AS(io::make_endpoint(c), io::ConfigError);
    ::setenv("SVGKIT_TEST_UNSET_KEY", "secret", 1);
    CHECK_NOTHROW(io::make_endpoint(c));
    ::unsetenv("SVGKIT_TEST_UNSET_KEY");
  }

  TEST_CASE("replay endpoints need an existing directory") {
    io::TransportConfig c;
    c.kind = "replay";
    c.fixtures = "/nonexistent/fixtures";
    CHECK_THROWS_AS(io::make_endpoint(c), io::ConfigError);
  }

  TEST_CASE("judge panels") {
    svgtest::TempDir dir("io-judges");
    std::filesystem::create_directories(dir / "fx");
    svgtest::write_file(dir / "j.json",
                        R"({"judges":[{"name":"a","transport":{"kind":"replay","fixtures":"fx"}},)"
                        R"({"transport":{"kind":"replay","fixtures":"fx"}}]})");
    const auto judges = io::load_judges(dir / "j.json");
    REQUIRE(judges.size() == 2);
    CHECK(judges[0].first == "a");
    CHECK(judges[1].first == "judge1");
    svgtest::write_file(dir / "empty.json", R"({"judges":[]})");
    CHECK_THROWS_AS(io::load_judges(dir / "empty.json"), io::ConfigError);
  }
}

TEST_SUITE("reports") {
  TEST_CASE("filter report totals") {
    filters::FilterReport report;
    report.keep({0, 1, "on", RelationCategory::spatial});
    report.keep({0, 1, "holding", std::nullopt});
    report.remove({1, 0, "above", RelationCategory::spatial}, filters::RemovalReason::rule_violation);
    report.remove({1, 0, "likes", RelationCategory::emotional}, filters::RemovalReason::judge_rejection);
    const auto j = io::filter_report_to_json(report);
    CHECK(j["raw"] == 4);
    CHECK(j["filtered"] == 2);
    CHECK(j["removed"] == 2);
    CHECK(j["by_category"]["spatial"]["raw"] == 2);
    CHECK(j["by_category"]["spatial"]["filtered"] == 1);
    CHECK(j["by_category"]["uncategorized"]["raw"] == 1);
    CHECK(j["by_category"]["uncategorized"]["filtered"] == 1);
    CHECK(j["removed_by_reason"]["judge_rejection"] == 1);
  }

  TEST_CASE("diagnostics sidecar lines") {
    const std::vector<io::StageDiagnostic> ds{{"edit-apply", "a", Diagnostic{"x", "msg", 3}}};
    CHECK(io::diagnostics_to_text(ds) ==
          R"({"stage":"edit-apply","image_id":"a","code":"x","message":"msg","line":3})" "\n");
    CHECK(count_code(ds, "x") == 1);
  }
}
