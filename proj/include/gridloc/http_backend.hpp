#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "gridloc/error.hpp"
#include "gridloc/querier.hpp"

// OpenAI-compatible chat-completions client. One request per task: system
// and user messages plus the rendered grid image embedded as a base64 data
// URL. The exact request/response shape is documented in the README.

namespace gridloc {

namespace detail {

inline std::string base64_encode(std::string_view bytes) {
  static const char* alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= bytes.size()) {
    const std::uint32_t v = (static_cast<std::uint8_t>(bytes[i]) << 16) |
                            (static_cast<std::uint8_t>(bytes[i + 1]) << 8) |
                            static_cast<std::uint8_t>(bytes[i + 2]);
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out.push_back(alphabet[(v >> 6) & 63]);
    out.push_back(alphabet[v & 63]);
    i += 3;
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = static_cast<std::uint8_t>(bytes[i]) << 16;
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out.append("==");
  } else if (rest == 2) {
    const std::uint32_t v = (static_cast<std::uint8_t>(bytes[i]) << 16) |
                            (static_cast<std::uint8_t>(bytes[i + 1]) << 8);
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out.push_back(alphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // /v1/chat/completions
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error("endpoint must be a full URL: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

/// Builds the request body for one query; exposed separately so the wire
/// format can be tested without a live server.
inline nlohmann::json chat_request_body(const BackendConfig& cfg,
                                        const PromptBundle& bundle) {
  nlohmann::json user_content = nlohmann::json::array();
  user_content.push_back({{"type", "text"}, {"text", bundle.user_text}});
  user_content.push_back(
      {{"type", "image_url"},
       {"image_url",
        {{"url", "data:image/png;base64," +
                     detail::base64_encode(bundle.image_png)}}}});
  nlohmann::json body{
      {"model", cfg.model},
      {"messages",
       nlohmann::json::array(
           {{{"role", "system"}, {"content", bundle.system_text}},
            {{"role", "user"}, {"content", std::move(user_content)}}})},
  };
  // Pass-through knobs: the harness does not interpret them.
  if (cfg.temperature) body["temperature"] = *cfg.temperature;
  if (cfg.reasoning_effort) body["reasoning_effort"] = *cfg.reasoning_effort;
  return body;
}

class HttpChatBackend : public Backend {
 public:
  explicit HttpChatBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
    const auto url = detail::split_url(cfg_.endpoint);
    base_ = url.base;
    path_ = url.path;
    if (!cfg_.credential_env.empty()) {
      const char* key = std::getenv(cfg_.credential_env.c_str());
      if (key == nullptr || *key == '\0') {
        throw AuthError("credential env var not set: " + cfg_.credential_env);
      }
      api_key_ = key;
    }
  }

  BackendReply send(const PromptBundle& bundle, const TaskContext&) override {
    // a fresh client per request keeps concurrent sends independent
    httplib::Client client(base_);
    client.set_connection_timeout(static_cast<int>(cfg_.timeout_s), 0);
    client.set_read_timeout(static_cast<int>(cfg_.timeout_s), 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const auto res = client.Post(path_, headers,
                                 chat_request_body(cfg_, bundle).dump(),
                                 "application/json");
    if (!res) {
      return {BackendReply::Status::transient_error, "",
              "connection failed: " + httplib::to_string(res.error())};
    }
    if (res->status == 401 || res->status == 403) {
      return {BackendReply::Status::auth_error, "",
              "HTTP " + std::to_string(res->status)};
    }
    if (res->status == 408 || res->status == 429 || res->status >= 500) {
      return {BackendReply::Status::transient_error, "",
              "HTTP " + std::to_string(res->status)};
    }
    if (res->status != 200) {
      return {BackendReply::Status::permanent_error, "",
              "HTTP " + std::to_string(res->status) + ": " +
                  res->body.substr(0, 200)};
    }

    try {
      const auto doc = nlohmann::json::parse(res->body);
      const auto& content = doc.at("choices").at(0).at("message").at("content");
      if (content.is_string()) {
        return {BackendReply::Status::ok, content.get<std::string>()};
      }
      if (content.is_array()) {  // some providers return content parts
        std::string text;
        for (const auto& part : content) {
          if (part.contains("text")) text += part.at("text").get<std::string>();
        }
        return {BackendReply::Status::ok, text};
      }
      return {BackendReply::Status::permanent_error, "",
              "completion content is neither string nor parts"};
    } catch (const nlohmann::json::exception& e) {
      return {BackendReply::Status::permanent_error, "",
              std::string("malformed completion response: ") + e.what()};
    }
  }

 private:
  BackendConfig cfg_;
  std::string base_;
  std::string path_;
  std::string api_key_;
};

/// Constructs the backend named by the config (http or simulated).
inline std::unique_ptr<Backend> make_backend(const BackendConfig& cfg) {
  cfg.validate();
  if (cfg.kind == BackendKind::http_chat) {
    return std::make_unique<HttpChatBackend>(cfg);
  }
  return make_simulated_backend(cfg);
}

}  // namespace gridloc
