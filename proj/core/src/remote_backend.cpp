// SPDX-License-Identifier: Apache-2.0
#include "promptbound/remote_backend.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "promptbound/error.hpp"
#include "promptbound/hash.hpp"

namespace promptbound {
namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("remote url must include a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

class SlotGuard {
 public:
  SlotGuard(std::mutex& m, std::condition_variable& cv, int& in_flight, int limit)
      : mutex_(m), cv_(cv), in_flight_(in_flight) {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return in_flight_ < limit; });
    ++in_flight_;
  }
  ~SlotGuard() {
    {
      std::lock_guard lock(mutex_);
      --in_flight_;
    }
    cv_.notify_one();
  }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::mutex& mutex_;
  std::condition_variable& cv_;
  int& in_flight_;
};

}  // namespace

std::string_view to_string(RequestShape shape) {
  return shape == RequestShape::Completion ? "completion" : "chat_template";
}

RequestShape parse_request_shape(std::string_view name) {
  if (name == "completion") return RequestShape::Completion;
  if (name == "chat_template" || name == "chat") return RequestShape::ChatTemplate;
  throw ConfigError("unknown request shape '" + std::string(name) + "'");
}

RemoteConfig RemoteConfig::from_json(const nlohmann::json& doc) {
  RemoteConfig c;
  c.url = doc.at("url").get<std::string>();
  c.api_key_env = doc.value("api_key_env", c.api_key_env);
  c.model = doc.value("model", c.model);
  c.timeout_seconds = doc.value("timeout_seconds", c.timeout_seconds);
  c.max_in_flight = doc.value("max_in_flight", c.max_in_flight);
  c.max_attempts = doc.value("max_attempts", c.max_attempts);
  c.backoff_initial_seconds = doc.value("backoff_initial_seconds", c.backoff_initial_seconds);
  c.backoff_multiplier = doc.value("backoff_multiplier", c.backoff_multiplier);
  c.shape = parse_request_shape(doc.value("request_shape", std::string(to_string(c.shape))));
  c.chat_template = doc.value("chat_template", c.chat_template);
  c.max_tokens = doc.value("max_tokens", c.max_tokens);
  c.cache_path = doc.value("cache_path", c.cache_path);
  c.cache_enabled = doc.value("cache_enabled", c.cache_enabled);
  if (c.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (c.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  return c;
}

nlohmann::json RemoteConfig::to_json() const {
  return {{"url", url},
          {"api_key_env", api_key_env},
          {"model", model},
          {"timeout_seconds", timeout_seconds},
          {"max_in_flight", max_in_flight},
          {"max_attempts", max_attempts},
          {"backoff_initial_seconds", backoff_initial_seconds},
          {"backoff_multiplier", backoff_multiplier},
          {"request_shape", std::string(to_string(shape))},
          {"chat_template", chat_template},
          {"max_tokens", max_tokens},
          {"cache_path", cache_path},
          {"cache_enabled", cache_enabled}};
}

std::optional<std::string> resolve_credential(const RemoteConfig& config) {
  if (config.api_key_env.empty()) return std::nullopt;
  const char* value = std::getenv(config.api_key_env.c_str());
  if (value == nullptr || *value == '\0') {
    throw ConfigError("environment variable " + config.api_key_env +
                      " is not set; it must hold the API credential for " + config.url);
  }
  return std::string(value);
}

ResponseCache::ResponseCache(std::string path) : path_(std::move(path)) {
  if (path_.empty()) return;
  std::ifstream in(path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // A torn final line from an interrupted run is skipped.
    auto entry = nlohmann::json::parse(line, nullptr, false);
    if (entry.is_discarded() || !entry.contains("key") || !entry.contains("value")) continue;
    entries_[entry["key"].get<std::string>()] = entry["value"];
  }
}

std::optional<nlohmann::json> ResponseCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return std::optional<nlohmann::json>(std::in_place, it->second);
}

void ResponseCache::put(const std::string& key, const nlohmann::json& value) {
  std::lock_guard lock(mutex_);
  entries_[key] = value;
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  out << nlohmann::json{{"key", key}, {"value", value}}.dump() << '\n';
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

RemoteBackend::RemoteBackend(RemoteConfig config)
    : config_(std::move(config)), credential_(resolve_credential(config_)) {
  parse_url(config_.url);
  if (config_.cache_enabled) cache_ = std::make_unique<ResponseCache>(config_.cache_path);
}

RemoteBackend::~RemoteBackend() = default;

std::string RemoteBackend::scoring_prefix(std::string_view context) const {
  if (config_.shape == RequestShape::Completion) return std::string(context);
  std::string prefix = config_.chat_template;
  const std::string placeholder = "{context}";
  const auto pos = prefix.find(placeholder);
  if (pos != std::string::npos) prefix.replace(pos, placeholder.size(), context);
  return prefix;
}

nlohmann::json RemoteBackend::post_with_retry(const nlohmann::json& body) const {
  const auto url = parse_url(config_.url);
  const std::string payload = body.dump();
  httplib::Headers headers;
  if (credential_) headers.emplace("Authorization", "Bearer " + *credential_);

  SlotGuard slot(slots_mutex_, slots_cv_, in_flight_, config_.max_in_flight);
  double backoff = config_.backoff_initial_seconds;
  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    httplib::Client client(url.origin);
    const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    ++network_calls_;
    auto result = client.Post(url.path, headers, payload, "application/json");
    if (result && result->status == 200) {
      auto doc = nlohmann::json::parse(result->body, nullptr, false);
      if (doc.is_discarded()) throw std::runtime_error("remote backend returned invalid JSON");
      return doc;
    }
    if (result && !retryable_status(result->status)) {
      throw std::runtime_error("remote backend returned HTTP " + std::to_string(result->status) + ": " +
                               result->body.substr(0, 200));
    }
    last_error = result ? "HTTP " + std::to_string(result->status)
                        : "transport error: " + httplib::to_string(result.error());
    if (attempt < config_.max_attempts) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= config_.backoff_multiplier;
    }
  }
  throw RetryableError("remote request to " + config_.url + " failed: " + last_error, config_.max_attempts);
}

LogLik RemoteBackend::sum_target_logprobs(const nlohmann::json& response, std::size_t prefix_bytes,
                                          const std::string& backend_id) {
  const auto* logprobs = [&]() -> const nlohmann::json* {
    if (!response.contains("choices") || response["choices"].empty()) return nullptr;
    const auto& choice = response["choices"][0];
    if (!choice.contains("logprobs") || choice["logprobs"].is_null()) return nullptr;
    return &choice["logprobs"];
  }();
  if (logprobs == nullptr || !logprobs->contains("token_logprobs") || !logprobs->contains("text_offset")) {
    throw UnsupportedCapability("response carries no per-token log-probabilities");
  }
  const auto& values = (*logprobs)["token_logprobs"];
  const auto& offsets = (*logprobs)["text_offset"];
  if (values.size() != offsets.size()) throw UnsupportedCapability("logprob and offset arrays differ in length");

  LogLik out{0.0, 0, backend_id};
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (offsets[i].get<std::size_t>() < prefix_bytes) continue;
    if (values[i].is_null()) {
      throw UnsupportedCapability("no log-probability for target token " + std::to_string(i));
    }
    out.value += values[i].get<double>();
    ++out.token_count;
  }
  return out;
}

LogLik RemoteBackend::conditional_log_likelihood(std::string_view context, std::string_view target) const {
  const std::string prefix = scoring_prefix(context);
  const std::string key =
      sha256_hex(nlohmann::json::array({"score", config_.model, to_string(config_.shape), prefix, target}).dump());
  if (cache_) {
    if (auto hit = cache_->get(key)) {
      return {hit->at("value").get<double>(), hit->at("token_count").get<std::int64_t>(), id()};
    }
  }
  const nlohmann::json body = {{"model", config_.model},      {"prompt", prefix + std::string(target)},
                               {"max_tokens", 0},             {"echo", true},
                               {"logprobs", 0},               {"temperature", 0}};
  const LogLik out = sum_target_logprobs(post_with_retry(body), prefix.size(), id());
  if (cache_) cache_->put(key, {{"value", out.value}, {"token_count", out.token_count}});
  return out;
}

std::string RemoteBackend::generate(std::string_view prompt) const {
  const std::string key = sha256_hex(nlohmann::json::array({"generate", config_.model, prompt}).dump());
  if (cache_) {
    if (auto hit = cache_->get(key)) return hit->get<std::string>();
  }
  const nlohmann::json body = {{"model", config_.model},
                               {"prompt", prompt},
                               {"max_tokens", config_.max_tokens},
                               {"temperature", 0}};
  const auto response = post_with_retry(body);
  if (!response.contains("choices") || response["choices"].empty() || !response["choices"][0].contains("text")) {
    throw UnsupportedCapability("generation response has no choices[0].text");
  }
  std::string text = response["choices"][0]["text"].get<std::string>();
  if (cache_) cache_->put(key, text);
  return text;
}

}  // namespace promptbound
