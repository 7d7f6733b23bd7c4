#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <nlohmann/json.hpp>

#include "svg/teacher.hpp"

namespace svg::teacher {

using nlohmann::json;

HttpTransport::HttpTransport(HttpConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw std::invalid_argument("http transport needs an endpoint");
}

std::string HttpTransport::request_body(const ChatRequest& request) const {
  json messages = json::array();
  if (!request.system_prompt.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  }
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", request.user_prompt}});
  for (const auto& ref : request.image_refs) {
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", ref}}}});
  }
  messages.push_back({{"role", "user"}, {"content", std::move(content)}});
  json body = {{"model", request.model.empty() ? config_.model : request.model},
               {"messages", std::move(messages)},
               {"temperature", request.temperature},
               {"top_p", request.top_p},
               {"max_tokens", request.max_tokens}};
  return body.dump();
}

std::string HttpTransport::response_text(std::string_view body) {
  const json parsed = json::parse(body, nullptr, false);
  if (parsed.is_discarded()) throw TransportError(FailureKind::transient, "response body is not JSON");
  try {
    const json& content = parsed.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    // Content given as a list of parts.
    std::string text;
    for (const auto& part : content) {
      if (part.value("type", "") == "text") text += part.value("text", "");
    }
    return text;
  } catch (const json::exception& e) {
    throw TransportError(FailureKind::transient, std::string("unexpected response shape: ") + e.what());
  }
}

std::string HttpTransport::send(const ChatRequest& request) {
  httplib::Client client(config_.endpoint);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto res = client.Post(config_.path, headers, request_body(request), "application/json");
  if (!res) {
    throw TransportError(FailureKind::transient, "request to " + config_.endpoint + " failed: " +
                                                     httplib::to_string(res.error()));
  }
  const int status = res->status;
  if (status == 401 || status == 403) {
    throw TransportError(FailureKind::unauthorized, "endpoint rejected credentials (HTTP " +
                                                        std::to_string(status) + ")");
  }
  if (status == 408 || status == 429 || status >= 500) {
    throw TransportError(FailureKind::transient, "HTTP " + std::to_string(status));
  }
  if (status >= 400) {
    throw TransportError(FailureKind::bad_request, "HTTP " + std::to_string(status) + ": " + res->body);
  }
  return response_text(res->body);
}

}  // namespace svg::teacher
