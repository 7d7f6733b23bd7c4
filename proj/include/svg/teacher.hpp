#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "svg/core.hpp"

namespace svg::teacher {

inline constexpr double kGenerationTemperature = 0.2;
inline constexpr double kGenerationTopP = 1.0;
inline constexpr double kJudgeTemperature = 0.0;
inline constexpr int kDefaultSubjectCount = 5;

struct ChatRequest {
  std::string model;  // empty: transport default
  std::string system_prompt;
  std::string user_prompt;
  std::vector<std::string> image_refs;
  double temperature = kGenerationTemperature;
  double top_p = kGenerationTopP;
  int max_tokens = 2048;

  // Throws std::invalid_argument when sampling parameters are out of range.
  void check() const;
  // Canonical JSON of every field; the basis of digest().
  std::string canonical() const;
  // Lower-case hex SHA-256 of canonical().
  std::string digest() const;
};

enum class FailureKind { transient, unauthorized, bad_request, missing_fixture };

struct TransportError : public std::runtime_error {
  TransportError(FailureKind kind, const std::string& message)
      : std::runtime_error(message), kind(kind) {}
  bool retryable() const { return kind == FailureKind::transient; }
  FailureKind kind;
};

// Implementations must be safe for concurrent send() calls.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string send(const ChatRequest& request) = 0;
};

// Serves `<dir>/<digest>.txt`; falls back to `<dir>/default.txt` when present.
class ReplayTransport : public Transport {
 public:
  explicit ReplayTransport(std::filesystem::path dir);
  std::string send(const ChatRequest& request) override;
  std::size_t calls() const;

  // Writes a response fixture for `request` and returns its path.
  static std::filesystem::path record(const std::filesystem::path& dir, const ChatRequest& request,
                                      std::string_view response);

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

struct HttpConfig {
  std::string endpoint;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key;   // sent as a bearer token when non-empty
  int timeout_seconds = 120;
};

// Chat-completions style client. Status 401/403 are unauthorized, other 4xx
// (except 408/429) are bad requests, and network failures, 408, 429 and 5xx
// are transient.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(HttpConfig config);
  std::string send(const ChatRequest& request) override;

  // Wire body for a request; exposed for tests.
  std::string request_body(const ChatRequest& request) const;
  // Pulls choices[0].message.content out of a response body.
  static std::string response_text(std::string_view body);

 private:
  HttpConfig config_;
};

// Response cache keyed by request digest. Hits never reach the inner transport.
class CachingTransport : public Transport {
 public:
  CachingTransport(std::shared_ptr<Transport> inner, std::filesystem::path dir);
  std::string send(const ChatRequest& request) override;
  std::size_t hits() const;
  std::size_t misses() const;

 private:
  std::shared_ptr<Transport> inner_;
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

// Caps concurrent in-flight sends to the inner transport.
class BoundedTransport : public Transport {
 public:
  BoundedTransport(std::shared_ptr<Transport> inner, std::ptrdiff_t max_in_flight);
  std::string send(const ChatRequest& request) override;

 private:
  std::shared_ptr<Transport> inner_;
  std::counting_semaphore<1024> slots_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{30'000};
  double jitter = 0.2;  // +/- fraction applied to each delay
  std::uint64_t seed = 0;
  // Injected for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct RetryExhausted : public std::runtime_error {
  RetryExhausted(const std::string& message, int attempts)
      : std::runtime_error(message), attempts(attempts) {}
  int attempts;
};

struct RetryResult {
  std::string text;
  int attempts = 0;
  std::vector<std::chrono::milliseconds> delays;
};

// Retries transient failures with exponential backoff and jitter. Other
// failures are rethrown immediately; exhaustion throws RetryExhausted.
RetryResult call_with_retry(Transport& transport, const ChatRequest& request, const RetryPolicy& policy);

// ---------------------------------------------------------------------------
// Prompt templates

extern const std::string_view kRelationSystemPrompt;
extern const std::string_view kEditSystemPrompt;
extern const std::string_view kJudgeQuestion;
extern const std::string_view kAnnotationFormat;

struct RelationPromptOptions {
  std::vector<std::pair<int, std::string>> region_captions;
  int subject_count = kDefaultSubjectCount;
};

ChatRequest build_relation_prompt(const SceneGraph& graph, const std::vector<std::string>& captions,
                                  const RelationPromptOptions& options = {});

// Image ref for a crop of `image_id`: "<image_id>#crop=x1,y1,x2,y2".
std::string crop_ref(std::string_view image_id, const BBox& box);

ChatRequest build_judge_prompt(const Region& subject, std::string_view predicate, const Region& object,
                               std::string_view image_id = "image");

// Object dictionary with normalized boxes and relations grouped by predicate.
std::string edit_scene_graph_json(const SceneGraph& graph);
ChatRequest build_edit_prompt(const SceneGraph& graph, std::string_view dense_caption);

}  // namespace svg::teacher
