#include "svg/io.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace svg::io {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Runs `fn(json, where)` on every non-blank line of a JSONL file.
template <typename Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(number);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DataError(where + ": not a JSON object");
    try {
      fn(j, where);
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw DataError(where + ": " + e.what());
    }
  }
}

BBox bbox_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("bbox must be an array of four numbers");
  return BBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

ordered_json bbox_to_json(const BBox& b) { return ordered_json::array({b.x1, b.y1, b.x2, b.y2}); }

Mask mask_from_json(const json& j) {
  return Mask(j.at("width").get<int>(), j.at("height").get<int>(),
              j.at("counts").get<std::vector<std::uint32_t>>());
}

ordered_json mask_to_json(const Mask& m) {
  ordered_json j;
  j["width"] = m.width();
  j["height"] = m.height();
  j["counts"] = m.runs();
  return j;
}

std::string category_key(const std::optional<RelationCategory>& c) {
  return c ? std::string(to_string(*c)) : "uncategorized";
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

json load_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError(path.string() + ": not a JSON object");
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Records

ordered_json record_to_json(const DatasetRecord& record) {
  const SceneGraph& g = record.scene_graph;
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["image_id"] = g.image_id;
  j["width"] = g.image_width;
  j["height"] = g.image_height;
  j["source"] = record.source;
  j["provenance"] = ordered_json::array();
  for (Stage s : record.provenance) j["provenance"].push_back(std::string(to_string(s)));
  j["regions"] = ordered_json::array();
  for (const auto& r : g.regions) {
    ordered_json rj;
    rj["id"] = r.id;
    rj["name"] = r.name;
    rj["bbox"] = bbox_to_json(r.bbox);
    if (r.mask) rj["mask"] = mask_to_json(*r.mask);
    if (r.depth) rj["depth"] = *r.depth;
    j["regions"].push_back(std::move(rj));
  }
  j["relations"] = ordered_json::array();
  for (const auto& rel : g.relations) {
    ordered_json relj;
    relj["subject"] = rel.subject_id;
    relj["predicate"] = rel.predicate;
    relj["object"] = rel.object_id;
    if (rel.category) relj["category"] = std::string(to_string(*rel.category));
    j["relations"].push_back(std::move(relj));
  }
  return j;
}

DatasetRecord record_from_json(const json& j) {
  if (!j.contains("schema_version")) throw DataError("record has no schema_version");
  const int version = j.at("schema_version").get<int>();
  if (version != kSchemaVersion) {
    throw DataError("unsupported schema_version " + std::to_string(version) + " (expected " +
                    std::to_string(kSchemaVersion) + ")");
  }
  DatasetRecord record;
  SceneGraph& g = record.scene_graph;
  g.image_id = j.at("image_id").get<std::string>();
  g.image_width = j.at("width").get<int>();
  g.image_height = j.at("height").get<int>();
  record.source = j.value("source", "");
  for (const auto& s : j.value("provenance", json::array())) {
    const auto stage = parse_stage(s.get<std::string>());
    if (!stage) throw DataError("unknown provenance stage '" + s.get<std::string>() + "'");
    record.provenance.push_back(*stage);
  }
  for (const auto& rj : j.at("regions")) {
    Region r;
    r.id = rj.at("id").get<int>();
    r.name = rj.at("name").get<std::string>();
    r.bbox = bbox_from_json(rj.at("bbox"));
    if (rj.contains("mask") && !rj["mask"].is_null()) r.mask = mask_from_json(rj["mask"]);
    if (rj.contains("depth") && !rj["depth"].is_null()) r.depth = rj["depth"].get<int>();
    g.regions.push_back(std::move(r));
  }
  for (const auto& relj : j.at("relations")) {
    Relation rel;
    rel.subject_id = relj.at("subject").get<int>();
    rel.object_id = relj.at("object").get<int>();
    rel.predicate = relj.at("predicate").get<std::string>();
    if (relj.contains("category") && !relj["category"].is_null()) {
      const auto text = relj["category"].get<std::string>();
      rel.category = parse_category(text);
      if (!rel.category) throw DataError("unknown relation category '" + text + "'");
    }
    g.relations.push_back(std::move(rel));
  }
  return record;
}

std::vector<DatasetRecord> read_records(const fs::path& path) {
  std::vector<DatasetRecord> records;
  for_each_line(path, [&](const json& j, const std::string& where) {
    try {
      records.push_back(record_from_json(j));
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  });
  return records;
}

std::string records_to_text(std::span<const DatasetRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

void write_records(const fs::path& path, std::span<const DatasetRecord> records) {
  write_text(path, records_to_text(records));
}

// ---------------------------------------------------------------------------
// Proposals

std::vector<ImageProposals> read_proposals(const fs::path& path) {
  std::vector<ImageProposals> images;
  std::map<std::string, std::size_t> index;
  for_each_line(path, [&](const json& j, const std::string& where) {
    const auto image_id = j.at("image_id").get<std::string>();
    const int width = j.at("width").get<int>();
    const int height = j.at("height").get<int>();
    auto [it, inserted] = index.emplace(image_id, images.size());
    if (inserted) {
      images.push_back(ImageProposals{image_id, width, height, {}});
    } else if (images[it->second].width != width || images[it->second].height != height) {
      throw DataError(where + ": image '" + image_id + "' changes size between proposal lines");
    }
    pipeline::ProposalSet set;
    set.source = pipeline::parse_proposal_source(j.value("source", "other"));
    for (const auto& pj : j.at("proposals")) {
      geometry::Candidate c;
      c.box = bbox_from_json(pj.at("bbox"));
      if (pj.contains("mask") && !pj["mask"].is_null()) c.mask = mask_from_json(pj["mask"]);
      set.proposals.push_back(std::move(c));
    }
    images[it->second].sets.push_back(std::move(set));
  });
  return images;
}

ordered_json proposals_to_json(const std::string& image_id, int width, int height, std::string_view source,
                               std::span<const geometry::Candidate> proposals) {
  ordered_json j;
  j["image_id"] = image_id;
  j["width"] = width;
  j["height"] = height;
  j["source"] = source;
  j["proposals"] = ordered_json::array();
  for (const auto& c : proposals) {
    ordered_json pj;
    pj["bbox"] = bbox_to_json(c.box);
    if (c.mask) pj["mask"] = mask_to_json(*c.mask);
    j["proposals"].push_back(std::move(pj));
  }
  return j;
}

std::map<std::string, std::vector<geometry::Candidate>> proposals_by_image(std::span<const ImageProposals> images) {
  std::map<std::string, std::vector<geometry::Candidate>> out;
  for (const auto& image : images) {
    auto& list = out[image.image_id];
    for (const auto& set : image.sets) list.insert(list.end(), set.proposals.begin(), set.proposals.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Edits, responses, captions, scores

std::vector<EditEntry> read_edits(const fs::path& path) {
  std::vector<EditEntry> entries;
  for_each_line(path, [&](const json& j, const std::string& where) {
    EditEntry e;
    e.image_id = j.at("image_id").get<std::string>();
    if (j.contains("response")) {
      e.text = j["response"].get<std::string>();
    } else if (j.contains("edits")) {
      e.text = j["edits"].dump();
    } else {
      throw DataError(where + ": edit line needs \"response\" or \"edits\"");
    }
    entries.push_back(std::move(e));
  });
  return entries;
}

std::string responses_to_text(std::span<const ResponseEntry> entries) {
  std::string out;
  for (const auto& e : entries) {
    ordered_json j;
    j["image_id"] = e.image_id;
    j["digest"] = e.digest;
    j["response"] = e.response;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::map<std::string, ImageCaptions> read_captions(const fs::path& path) {
  std::map<std::string, ImageCaptions> out;
  for_each_line(path, [&](const json& j, const std::string& where) {
    const auto image_id = j.at("image_id").get<std::string>();
    ImageCaptions c;
    c.captions = j.value("captions", std::vector<std::string>{});
    if (j.contains("region_captions")) {
      for (const auto& [key, value] : j["region_captions"].items()) {
        int id = 0;
        try {
          id = std::stoi(key);
        } catch (const std::exception&) {
          throw DataError(where + ": region caption key '" + key + "' is not a region id");
        }
        c.region_captions.emplace_back(id, value.get<std::string>());
      }
      std::sort(c.region_captions.begin(), c.region_captions.end());
    }
    if (j.contains("dense_caption")) {
      c.dense_caption = j["dense_caption"].get<std::string>();
    } else {
      for (const auto& s : c.captions) c.dense_caption += (c.dense_caption.empty() ? "" : " ") + s;
    }
    if (!out.emplace(image_id, std::move(c)).second) {
      throw DataError(where + ": duplicate captions for image '" + image_id + "'");
    }
  });
  return out;
}

std::map<filters::SimilarityKey, double> read_similarity_scores(const fs::path& path) {
  std::map<filters::SimilarityKey, double> out;
  for_each_line(path, [&](const json& j, const std::string&) {
    out[{j.at("phrase").get<std::string>(), j.at("crop_ref").get<std::string>()}] = j.at("score").get<double>();
  });
  return out;
}

// ---------------------------------------------------------------------------
// Transports

TransportConfig transport_config_from_json(const json& j, const fs::path& base_dir) {
  TransportConfig c;
  try {
    c.kind = j.at("kind").get<std::string>();
    if (c.kind == "replay") {
      c.fixtures = resolve(base_dir, j.at("fixtures").get<std::string>());
    } else if (c.kind == "http") {
      c.http.endpoint = j.at("endpoint").get<std::string>();
      c.http.path = j.value("path", c.http.path);
      c.http.model = j.value("model", "");
      c.http.timeout_seconds = j.value("timeout_seconds", c.http.timeout_seconds);
      c.api_key_env = j.value("api_key_env", "");
    } else {
      throw ConfigError("unknown transport kind '" + c.kind + "'");
    }
    c.max_attempts = j.value("max_attempts", c.max_attempts);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.seed = j.value("seed", c.seed);
    if (j.contains("cache_dir")) c.cache_dir = resolve(base_dir, j["cache_dir"].get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad transport config: ") + e.what());
  }
  if (c.max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
  if (c.max_in_flight < 1) throw ConfigError("max_in_flight must be at least 1");
  return c;
}

TransportConfig load_transport_config(const fs::path& path) {
  return transport_config_from_json(load_json_file(path), path.parent_path());
}

Endpoint make_endpoint(const TransportConfig& config) {
  Endpoint e;
  std::shared_ptr<teacher::Transport> base;
  if (config.kind == "replay") {
    if (!fs::is_directory(config.fixtures)) {
      throw ConfigError("replay fixture directory " + config.fixtures.string() + " does not exist");
    }
    base = std::make_shared<teacher::ReplayTransport>(config.fixtures);
  } else if (config.kind == "http") {
    teacher::HttpConfig http = config.http;
    if (!config.api_key_env.empty()) {
      const char* key = std::getenv(config.api_key_env.c_str());
      if (key == nullptr || *key == '\0') {
        throw ConfigError("environment variable " + config.api_key_env + " is not set");
      }
      http.api_key = key;
    }
    e.model = http.model;
    base = std::make_shared<teacher::HttpTransport>(std::move(http));
  } else {
    throw ConfigError("unknown transport kind '" + config.kind + "'");
  }
  if (config.cache_dir) base = std::make_shared<teacher::CachingTransport>(base, *config.cache_dir);
  e.transport = std::make_shared<teacher::BoundedTransport>(base, config.max_in_flight);
  e.retry.max_attempts = config.max_attempts;
  e.retry.seed = config.seed;
  return e;
}

std::vector<std::pair<std::string, Endpoint>> load_judges(const fs::path& path) {
  const json j = load_json_file(path);
  if (!j.contains("judges") || !j["judges"].is_array() || j["judges"].empty()) {
    throw ConfigError(path.string() + ": needs a non-empty \"judges\" list");
  }
  std::vector<std::pair<std::string, Endpoint>> judges;
  for (const auto& entry : j["judges"]) {
    if (!entry.is_object() || !entry.contains("transport")) {
      throw ConfigError(path.string() + ": each judge needs a \"transport\"");
    }
    const std::string name = entry.value("name", "judge" + std::to_string(judges.size()));
    judges.emplace_back(name, make_endpoint(transport_config_from_json(entry["transport"], path.parent_path())));
  }
  return judges;
}

// ---------------------------------------------------------------------------
// Reports

ordered_json filter_report_to_json(const filters::FilterReport& report) {
  ordered_json j;
  std::size_t input = 0;
  std::size_t kept = 0;
  ordered_json categories = ordered_json::object();
  for (const auto& [category, count] : report.counts) {
    categories[category_key(category)] = {{"raw", count.input}, {"filtered", count.kept}};
    input += count.input;
    kept += count.kept;
  }
  std::map<std::string, std::size_t> reasons;
  for (const auto& r : report.removed) ++reasons[std::string(to_string(r.reason))];
  j["raw"] = input;
  j["filtered"] = kept;
  j["removed"] = report.removed.size();
  j["by_category"] = std::move(categories);
  j["removed_by_reason"] = reasons;
  return j;
}

ordered_json stats_to_json(const pipeline::DatasetStats& stats) {
  ordered_json j;
  j["images"] = stats.images;
  j["regions"] = stats.regions;
  j["relations"] = stats.relations;
  j["objects_per_image"] = stats.objects_per_image;
  j["triplets_per_image"] = stats.triplets_per_image;
  j["predicates_per_region"] = stats.predicates_per_region;
  j["predicates_per_region_image_mean"] = stats.predicates_per_region_image_mean;
  j["relations_per_subject"] = stats.relations_per_subject;
  ordered_json categories = ordered_json::object();
  for (const auto& [category, count] : stats.relations_by_category) categories[category_key(category)] = count;
  j["relations_by_category"] = std::move(categories);
  return j;
}

ordered_json eval_to_json(const eval::DatasetScore& score, std::size_t k, std::string_view provider) {
  ordered_json j;
  j["k"] = k;
  j["similarity_provider"] = provider;
  j["recall"] = score.recall_at_k;
  j["mean_recall"] = score.mean_recall_at_k;
  j["per_image_mean_recall"] = score.per_image_mean_recall;
  j["matched"] = score.matched;
  j["total"] = score.total;
  j["mean_predicted_relations"] = score.mean_predicted_relations;
  ordered_json per = ordered_json::object();
  for (const auto& [label, pr] : score.per_predicate) {
    per[label] = {{"matched", pr.matched}, {"total", pr.total}, {"recall", pr.recall()}};
  }
  j["per_predicate"] = std::move(per);
  ordered_json images = ordered_json::array();
  for (const auto& image : score.images) {
    ordered_json ij;
    ij["image_id"] = image.image_id;
    ij["predicted_relations"] = image.predicted_relations;
    if (image.result) {
      ij["matched"] = image.result->matched;
      ij["total"] = image.result->total;
      ij["recall"] = image.result->recall_at_k;
      ij["mean_recall"] = image.result->mean_recall_at_k;
    } else {
      ij["skipped"] = "no ground-truth triplets";
    }
    images.push_back(std::move(ij));
  }
  j["images"] = std::move(images);
  return j;
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("cannot write " + path.string());
}

void write_json(const fs::path& path, const ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string diagnostics_to_text(std::span<const StageDiagnostic> diagnostics) {
  std::string out;
  for (const auto& d : diagnostics) {
    ordered_json j;
    j["stage"] = d.stage;
    j["image_id"] = d.image_id;
    j["code"] = d.diagnostic.code;
    j["message"] = d.diagnostic.message;
    j["line"] = d.diagnostic.line;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace svg::io
