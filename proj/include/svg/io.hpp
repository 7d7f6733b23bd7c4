#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "svg/core.hpp"
#include "svg/eval.hpp"
#include "svg/filters.hpp"
#include "svg/pipeline.hpp"
#include "svg/teacher.hpp"

// File formats shared by the CLI and the stage runner. Everything is JSON
// Lines except the rule map and the run config, which are single JSON files.
namespace svg::io {

inline constexpr int kSchemaVersion = 1;

// Malformed or inconsistent input data (exit code 1 in the CLI).
struct DataError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unusable configuration (exit code 2 in the CLI).
using ConfigError = filters::ConfigError;

// ---------------------------------------------------------------------------
// Records
//
// {"schema_version":1,"image_id":"...","width":W,"height":H,"source":"...",
//  "provenance":["raw",...],
//  "regions":[{"id":0,"name":"...","bbox":[x1,y1,x2,y2],
//              "mask":{"width":W,"height":H,"counts":[...]},"depth":D}],
//  "relations":[{"subject":0,"predicate":"...","object":1,"category":"spatial"}]}
//
// mask, depth and category are omitted when absent.

nlohmann::ordered_json record_to_json(const DatasetRecord& record);
DatasetRecord record_from_json(const nlohmann::json& j);

std::vector<DatasetRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, std::span<const DatasetRecord> records);
std::string records_to_text(std::span<const DatasetRecord> records);

// ---------------------------------------------------------------------------
// Proposals: one line per (image, source)
// {"image_id":"...","width":W,"height":H,"source":"sam_whole",
//  "proposals":[{"bbox":[...],"mask":{...}}]}

struct ImageProposals {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<pipeline::ProposalSet> sets;
};

// Lines for the same image are grouped; first appearance fixes the order.
std::vector<ImageProposals> read_proposals(const std::filesystem::path& path);
nlohmann::ordered_json proposals_to_json(const std::string& image_id, int width, int height,
                                         std::string_view source,
                                         std::span<const geometry::Candidate> proposals);
// Flattens every set of every image into a lookup by image id.
std::map<std::string, std::vector<geometry::Candidate>> proposals_by_image(
    std::span<const ImageProposals> images);

// ---------------------------------------------------------------------------
// Edits: {"image_id":"...","response":"<raw editor text>"} or
//        {"image_id":"...","edits":{...}}

struct EditEntry {
  std::string image_id;
  std::string text;  // raw response, or the dumped "edits" object
};

std::vector<EditEntry> read_edits(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Teacher responses written by annotate / edit-generate
// {"image_id":"...","digest":"<sha256>","response":"..."}

struct ResponseEntry {
  std::string image_id;
  std::string digest;
  std::string response;
};

std::string responses_to_text(std::span<const ResponseEntry> entries);

// ---------------------------------------------------------------------------
// Captions: {"image_id":"...","captions":["..."],"region_captions":{"3":"..."},
//            "dense_caption":"..."}

struct ImageCaptions {
  std::vector<std::string> captions;
  std::vector<std::pair<int, std::string>> region_captions;
  std::string dense_caption;  // defaults to the captions joined by spaces
};

std::map<std::string, ImageCaptions> read_captions(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Similarity scores: {"phrase":"...","crop_ref":"...","score":0.31}

std::map<filters::SimilarityKey, double> read_similarity_scores(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Transport config
//   {"kind":"replay","fixtures":"dir"}
//   {"kind":"http","endpoint":"https://host","path":"/v1/chat/completions",
//    "model":"...","api_key_env":"VAR","timeout_seconds":120}
// Common optional keys: "max_attempts", "max_in_flight", "cache_dir", "seed".
// Relative paths resolve against the config file's directory.

struct TransportConfig {
  std::string kind;
  std::filesystem::path fixtures;
  teacher::HttpConfig http;
  std::string api_key_env;
  int max_attempts = 3;
  int max_in_flight = 4;
  std::optional<std::filesystem::path> cache_dir;
  std::uint64_t seed = 0;
};

TransportConfig transport_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
TransportConfig load_transport_config(const std::filesystem::path& path);

// A transport ready for concurrent use, plus its retry policy and model.
struct Endpoint {
  std::shared_ptr<teacher::Transport> transport;
  teacher::RetryPolicy retry;
  std::string model;
};

// Throws ConfigError when the API key variable is named but unset.
Endpoint make_endpoint(const TransportConfig& config);

// Judges config: {"judges":[{"name":"judge-a","transport":{...}}, ...]}
std::vector<std::pair<std::string, Endpoint>> load_judges(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Reports

nlohmann::ordered_json filter_report_to_json(const filters::FilterReport& report);
nlohmann::ordered_json stats_to_json(const pipeline::DatasetStats& stats);
nlohmann::ordered_json eval_to_json(const eval::DatasetScore& score, std::size_t k, std::string_view provider);

// Writes `j` pretty-printed with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Diagnostics sidecar, one JSON object per line:
// {"stage":"edit-apply","image_id":"...","code":"...","message":"...","line":0}

struct StageDiagnostic {
  std::string stage;
  std::string image_id;
  Diagnostic diagnostic;
};

std::string diagnostics_to_text(std::span<const StageDiagnostic> diagnostics);

}  // namespace svg::io
