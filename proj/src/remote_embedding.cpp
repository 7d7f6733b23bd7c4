#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <nlohmann/json.hpp>

#include "svg/eval.hpp"

namespace svg::eval {

RemoteEmbeddingProvider::RemoteEmbeddingProvider(RemoteEmbeddingConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw std::invalid_argument("embedding provider needs an endpoint");
  if (config_.model.empty()) throw std::invalid_argument("embedding provider needs a model");
}

Embedding RemoteEmbeddingProvider::embed(std::string_view text) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(text); it != cache_.end()) return it->second;
  }
  httplib::Client client(config_.endpoint);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  const nlohmann::json body = {{"model", config_.model}, {"input", std::string(text)}};
  auto res = client.Post(config_.path, headers, body.dump(), "application/json");
  if (!res) throw std::runtime_error("embedding request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw std::runtime_error("embedding request returned HTTP " + std::to_string(res->status));

  const auto parsed = nlohmann::json::parse(res->body, nullptr, false);
  if (parsed.is_discarded()) throw std::runtime_error("embedding response is not JSON");
  std::vector<std::pair<std::uint64_t, double>> raw;
  try {
    const auto& vec = parsed.at("data").at(0).at("embedding");
    raw.reserve(vec.size());
    for (std::size_t i = 0; i < vec.size(); ++i) raw.emplace_back(i, vec[i].get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("unexpected embedding response: ") + e.what());
  }
  Embedding e = Embedding::normalized(std::move(raw));
  std::lock_guard lock(mutex_);
  return cache_.emplace(std::string(text), std::move(e)).first->second;
}

}  // namespace svg::eval
