#pragma once

// HTTP client for OpenAI-compatible embedding endpoints. Requires linking
// with OpenSSL (target occmap_remote) for https endpoints.

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "occmap/embedding.hpp"

namespace occmap::embedding {

enum class AuthStyle { Bearer, ApiKeyHeader };

struct RemoteConfig {
  std::string endpoint;  // full URL, e.g. https://host/v1/embeddings
  std::string model;
  std::size_t dimension = 1536;
  std::size_t max_input_tokens = 8192;
  std::size_t max_batch_size = 16;
  AuthStyle auth = AuthStyle::Bearer;
  std::string api_key_env = "OCCMAP_API_KEY";
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{60};
};

using SleepFn = std::function<void(std::chrono::milliseconds)>;

class RemoteProvider final : public EmbeddingProvider {
 public:
  explicit RemoteProvider(RemoteConfig config, SleepFn sleep = nullptr)
      : config_(std::move(config)),
        sleep_(sleep ? std::move(sleep) : SleepFn([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
        tag_("remote:" + config_.model + "/d" + std::to_string(config_.dimension)) {
    const auto scheme = config_.endpoint.find("://");
    if (scheme == std::string::npos) {
      throw EmbeddingError(EmbeddingErrc::ProviderUnavailable, "endpoint must be an absolute URL: " + config_.endpoint);
    }
    const auto slash = config_.endpoint.find('/', scheme + 3);
    origin_ = config_.endpoint.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : config_.endpoint.substr(slash);
  }

  const std::string& tag() const override { return tag_; }
  std::size_t dimension() const override { return config_.dimension; }
  std::size_t max_input_tokens() const override { return config_.max_input_tokens; }
  std::size_t max_batch_size() const override { return config_.max_batch_size; }

  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (!key || !*key) {
      throw EmbeddingError(EmbeddingErrc::ProviderUnavailable,
                           "environment variable " + config_.api_key_env + " is not set");
    }
    nlohmann::json body;
    body["model"] = config_.model;
    body["input"] = nlohmann::json::array();
    for (const auto& t : texts) body["input"].push_back(t);
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (config_.auth == AuthStyle::Bearer) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    } else {
      headers.emplace("api-key", key);
    }

    std::string last_error;
    auto backoff = config_.initial_backoff;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
      httplib::Client client(origin_);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      client.set_write_timeout(config_.timeout);
      const auto res = client.Post(path_, headers, payload, "application/json");
      if (!res) {
        last_error = "connection error: " + httplib::to_string(res.error());
      } else if (res->status == 200) {
        return parse_response(res->body, texts.size());
      } else if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
      } else if (res->status == 413 || (res->status == 400 && looks_like_length_error(res->body))) {
        throw EmbeddingError(EmbeddingErrc::InputTooLong, "provider rejected input length: " + res->body);
      } else {
        throw EmbeddingError(EmbeddingErrc::ProviderUnavailable,
                             "HTTP " + std::to_string(res->status) + " from " + config_.endpoint + ": " + res->body);
      }
      if (attempt < config_.max_attempts) {
        sleep_(backoff);
        backoff *= 2;
      }
    }
    throw EmbeddingError(EmbeddingErrc::ProviderUnavailable, "giving up on " + config_.endpoint + " after " +
                                                                 std::to_string(config_.max_attempts) +
                                                                 " attempts: " + last_error);
  }

 private:
  static bool looks_like_length_error(const std::string& body) {
    const std::string lower = text::to_lower_ascii(body);
    return lower.find("context length") != std::string::npos || lower.find("context_length") != std::string::npos ||
           lower.find("too many tokens") != std::string::npos || lower.find("too long") != std::string::npos;
  }

  std::vector<EmbeddingVector> parse_response(const std::string& body, std::size_t expected) const {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw EmbeddingError(EmbeddingErrc::InvalidVector, std::string("unparseable provider response: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("data") || !doc["data"].is_array() || doc["data"].size() != expected) {
      throw EmbeddingError(EmbeddingErrc::InvalidVector, "provider response lacks one embedding per input");
    }
    std::vector<std::optional<EmbeddingVector>> slots(expected);
    std::size_t position = 0;
    for (const auto& item : doc["data"]) {
      const std::size_t index =
          item.contains("index") && item["index"].is_number_unsigned() ? item["index"].get<std::size_t>() : position;
      ++position;
      if (index >= expected || slots[index] || !item.contains("embedding") || !item["embedding"].is_array()) {
        throw EmbeddingError(EmbeddingErrc::InvalidVector, "malformed embedding entry in provider response");
      }
      std::vector<double> raw;
      raw.reserve(config_.dimension);
      for (const auto& x : item["embedding"]) {
        if (!x.is_number()) throw EmbeddingError(EmbeddingErrc::InvalidVector, "non-numeric embedding value");
        raw.push_back(x.get<double>());
      }
      if (raw.size() != config_.dimension) {
        throw EmbeddingError(EmbeddingErrc::InvalidVector, "provider returned dimension " + std::to_string(raw.size()) +
                                                               ", configured " + std::to_string(config_.dimension));
      }
      slots[index] = EmbeddingVector::normalized(std::span<const double>(raw), tag_);
    }
    std::vector<EmbeddingVector> out;
    out.reserve(expected);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
  }

  RemoteConfig config_;
  SleepFn sleep_;
  std::string tag_;
  std::string origin_;
  std::string path_;
};

}  // namespace occmap::embedding
