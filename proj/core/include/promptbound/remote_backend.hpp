// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "promptbound/lm_backend.hpp"

namespace promptbound {

/// How context and target are laid out in a scoring request.
enum class RequestShape {
  /// Raw continuation: prompt = context + target.
  Completion,
  /// prompt = chat_template(context) + target.
  ChatTemplate,
};

std::string_view to_string(RequestShape shape);
RequestShape parse_request_shape(std::string_view name);

struct RemoteConfig {
  /// Completions-style endpoint, e.g. https://host/v1/completions.
  std::string url;
  /// Name of the environment variable holding the bearer token. Empty: no auth.
  std::string api_key_env;
  std::string model;
  double timeout_seconds = 30.0;
  int max_in_flight = 4;
  int max_attempts = 4;
  double backoff_initial_seconds = 0.5;
  double backoff_multiplier = 2.0;
  RequestShape shape = RequestShape::Completion;
  /// `{context}` is replaced by the conditioning text.
  std::string chat_template = "<|system|>\n{context}\n<|assistant|>\n";
  /// Max tokens for generation requests.
  int max_tokens = 64;
  /// Append-only cache file; empty keeps the cache in memory.
  std::string cache_path;
  bool cache_enabled = true;

  static RemoteConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// Reads the credential named by config.api_key_env. Throws ConfigError when
/// the variable is named but unset, so misconfiguration fails before any
/// request is made.
std::optional<std::string> resolve_credential(const RemoteConfig& config);

/// Key-value store persisted as one JSON object per line. Later lines win.
class ResponseCache {
 public:
  explicit ResponseCache(std::string path = {});

  std::optional<nlohmann::json> get(const std::string& key) const;
  void put(const std::string& key, const nlohmann::json& value);
  std::size_t size() const;

 private:
  std::string path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, nlohmann::json> entries_;
};

/// Scores text through an HTTP(S) completions endpoint that can echo the
/// prompt with per-token log-probabilities.
class RemoteBackend final : public LanguageModelBackend {
 public:
  explicit RemoteBackend(RemoteConfig config);
  ~RemoteBackend() override;

  std::string id() const override { return "remote:" + config_.model; }
  bool supports_log_likelihood() const override { return true; }
  bool supports_generation() const override { return true; }

  LogLik conditional_log_likelihood(std::string_view context, std::string_view target) const override;
  std::string generate(std::string_view prompt) const override;

  const RemoteConfig& config() const noexcept { return config_; }
  /// Requests actually sent over the network (retries included).
  std::uint64_t network_calls() const noexcept { return network_calls_.load(); }

  /// Parses an echo-with-logprobs response; tokens starting at or after
  /// `prefix_bytes` are summed. Exposed for fixture replay.
  static LogLik sum_target_logprobs(const nlohmann::json& response, std::size_t prefix_bytes,
                                    const std::string& backend_id);

 private:
  nlohmann::json post_with_retry(const nlohmann::json& body) const;
  std::string scoring_prefix(std::string_view context) const;

  RemoteConfig config_;
  std::optional<std::string> credential_;
  std::unique_ptr<ResponseCache> cache_;
  mutable std::atomic<std::uint64_t> network_calls_{0};
  mutable std::mutex slots_mutex_;
  mutable std::condition_variable slots_cv_;
  mutable int in_flight_ = 0;
};

}  // namespace promptbound
