#include "svg/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

namespace svg::teacher {

namespace fs = std::filesystem;

void ChatRequest::check() const {
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must be in (0, 1]");
  if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be positive");
}

std::string ChatRequest::canonical() const {
  nlohmann::ordered_json j = {{"model", model},
                              {"system_prompt", system_prompt},
                              {"user_prompt", user_prompt},
                              {"image_refs", image_refs},
                              {"temperature", temperature},
                              {"top_p", top_p},
                              {"max_tokens", max_tokens}};
  return j.dump();
}

std::string ChatRequest::digest() const {
  const std::string text = canonical();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[md[i] >> 4]);
    hex.push_back(kHex[md[i] & 0xf]);
  }
  return hex;
}

namespace {

std::optional<std::string> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  fs::create_directories(path.parent_path());
  std::ostringstream suffix;
  suffix << ".tmp" << std::hash<std::thread::id>{}(std::this_thread::get_id());
  const fs::path tmp = path.string() + suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

// ---------------------------------------------------------------------------

ReplayTransport::ReplayTransport(fs::path dir) : dir_(std::move(dir)) {}

std::string ReplayTransport::send(const ChatRequest& request) {
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  const std::string digest = request.digest();
  if (auto text = read_file(dir_ / (digest + ".txt"))) return *text;
  if (auto text = read_file(dir_ / "default.txt")) return *text;
  throw TransportError(FailureKind::missing_fixture,
                       "no replay fixture " + digest + ".txt in " + dir_.string());
}

std::size_t ReplayTransport::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

fs::path ReplayTransport::record(const fs::path& dir, const ChatRequest& request, std::string_view response) {
  const fs::path path = dir / (request.digest() + ".txt");
  write_file_atomic(path, response);
  return path;
}

// ---------------------------------------------------------------------------

CachingTransport::CachingTransport(std::shared_ptr<Transport> inner, fs::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {}

std::string CachingTransport::send(const ChatRequest& request) {
  const fs::path path = dir_ / (request.digest() + ".txt");
  if (auto text = read_file(path)) {
    std::lock_guard lock(mutex_);
    ++hits_;
    return *text;
  }
  std::string text = inner_->send(request);
  write_file_atomic(path, text);
  std::lock_guard lock(mutex_);
  ++misses_;
  return text;
}

std::size_t CachingTransport::hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}

std::size_t CachingTransport::misses() const {
  std::lock_guard lock(mutex_);
  return misses_;
}

// ---------------------------------------------------------------------------

BoundedTransport::BoundedTransport(std::shared_ptr<Transport> inner, std::ptrdiff_t max_in_flight)
    : inner_(std::move(inner)), slots_(std::clamp<std::ptrdiff_t>(max_in_flight, 1, 1024)) {}

std::string BoundedTransport::send(const ChatRequest& request) {
  slots_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{slots_};
  return inner_->send(request);
}

// ---------------------------------------------------------------------------

RetryResult call_with_retry(Transport& transport, const ChatRequest& request, const RetryPolicy& policy) {
  if (policy.max_attempts < 1) throw std::invalid_argument("retry policy needs at least one attempt");
  request.check();
  std::mt19937_64 rng(policy.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  RetryResult result;
  double base = static_cast<double>(policy.initial_backoff.count());
  std::string last_error;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    result.attempts = attempt;
    try {
      result.text = transport.send(request);
      return result;
    } catch (const TransportError& e) {
      if (!e.retryable()) throw;
      last_error = e.what();
    }
    if (attempt == policy.max_attempts) break;
    const double capped = std::min(base, static_cast<double>(policy.max_backoff.count()));
    const double jittered = std::max(0.0, capped * (1.0 + policy.jitter * unit(rng)));
    const std::chrono::milliseconds delay{static_cast<long long>(std::llround(jittered))};
    result.delays.push_back(delay);
    if (policy.sleep) {
      policy.sleep(delay);
    } else {
      std::this_thread::sleep_for(delay);
    }
    base *= policy.multiplier;
  }
  throw RetryExhausted("request failed after " + std::to_string(result.attempts) + " attempts: " + last_error,
                       result.attempts);
}

}  // namespace svg::teacher
