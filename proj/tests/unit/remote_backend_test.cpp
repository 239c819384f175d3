// SPDX-License-Identifier: Apache-2.0
#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "promptbound/error.hpp"
#include "promptbound/remote_backend.hpp"

using namespace promptbound;

namespace {

// Fake completions endpoint: one token per byte of the prompt, each worth
// -0.1 nats except the first, which has no log-probability.
class FakeServer {
 public:
  FakeServer() {
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++requests_;
      last_body_ = nlohmann::json::parse(req.body);
      last_auth_ = req.get_header_value("Authorization");
      if (n <= fail_first_.load()) {
        res.status = 503;
        res.set_content("busy", "text/plain");
        return;
      }
      if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
      const auto body = last_body_;
      nlohmann::json choice;
      if (body.value("echo", false)) {
        const std::string prompt = body["prompt"].get<std::string>();
        nlohmann::json values = nlohmann::json::array();
        nlohmann::json offsets = nlohmann::json::array();
        for (std::size_t i = 0; i < prompt.size(); ++i) {
          values.push_back(i == 0 ? nlohmann::json(nullptr) : nlohmann::json(-0.1));
          offsets.push_back(i);
        }
        choice = {{"text", prompt}, {"logprobs", {{"token_logprobs", values}, {"text_offset", offsets}}}};
      } else {
        choice = {{"text", " Yes"}, {"logprobs", nullptr}};
      }
      res.set_content(nlohmann::json{{"choices", {choice}}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/completions"; }
  int requests() const { return requests_.load(); }
  void fail_first(int n) { fail_first_ = n; }
  void delay_ms(int ms) { delay_ms_ = ms; }
  nlohmann::json last_body() const { return last_body_; }
  std::string last_auth() const { return last_auth_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  std::atomic<int> fail_first_{0};
  int delay_ms_ = 0;
  nlohmann::json last_body_;
  std::string last_auth_;
};

RemoteConfig config_for(const FakeServer& s) {
  RemoteConfig c;
  c.url = s.url();
  c.model = "fake";
  c.timeout_seconds = 5.0;
  c.backoff_initial_seconds = 0.01;
  c.max_attempts = 3;
  return c;
}

std::filesystem::path temp_file(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST(RemoteBackend, SumsTargetTokenLogprobs) {
  FakeServer server;
  RemoteBackend backend(config_for(server));
  const LogLik ll = backend.conditional_log_likelihood("ctx: ", "abcd");
  EXPECT_NEAR(ll.value, -0.4, 1e-12);
  EXPECT_EQ(ll.token_count, 4);
  EXPECT_EQ(ll.backend_id, "remote:fake");
  const auto body = server.last_body();
  EXPECT_EQ(body["prompt"], "ctx: abcd");
  EXPECT_EQ(body["echo"], true);
  EXPECT_EQ(body["max_tokens"], 0);
}

TEST(RemoteBackend, CacheHitMakesNoNetworkCall) {
  FakeServer server;
  RemoteBackend backend(config_for(server));
  const LogLik a = backend.conditional_log_likelihood("c", "target");
  EXPECT_EQ(backend.network_calls(), 1u);
  const LogLik b = backend.conditional_log_likelihood("c", "target");
  EXPECT_EQ(backend.network_calls(), 1u);
  EXPECT_EQ(server.requests(), 1);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.token_count, b.token_count);
}

TEST(RemoteBackend, CachingDoesNotChangeValues) {
  FakeServer server;
  auto off = config_for(server);
  off.cache_enabled = false;
  RemoteBackend uncached(off);
  RemoteBackend cached(config_for(server));
  for (const char* t : {"one", "two words", "three"}) {
    EXPECT_EQ(uncached.conditional_log_likelihood("p", t).value, cached.conditional_log_likelihood("p", t).value);
    EXPECT_EQ(uncached.conditional_log_likelihood("p", t).value, cached.conditional_log_likelihood("p", t).value);
  }
  EXPECT_EQ(uncached.network_calls(), 6u);
  EXPECT_EQ(cached.network_calls(), 3u);
}

TEST(RemoteBackend, PersistedCacheReplaysWithoutServer) {
  const auto path = temp_file("promptbound_remote_cache.jsonl");
  double value = 0.0;
  std::string text;
  std::string url;
  {
    FakeServer server;
    auto c = config_for(server);
    c.cache_path = path.string();
    RemoteBackend backend(c);
    value = backend.conditional_log_likelihood("ctx", "xyz").value;
    text = backend.generate("Is it?");
    url = c.url;
  }
  RemoteConfig c;
  c.url = url;
  c.model = "fake";
  c.cache_path = path.string();
  c.max_attempts = 1;
  RemoteBackend replay(c);
  EXPECT_EQ(replay.conditional_log_likelihood("ctx", "xyz").value, value);
  EXPECT_EQ(replay.generate("Is it?"), text);
  EXPECT_EQ(replay.network_calls(), 0u);
  std::filesystem::remove(path);
}

TEST(ResponseCache, SkipsTornLinesAndLaterLinesWin) {
  const auto path = temp_file("promptbound_cache_torn.jsonl");
  {
    std::ofstream out(path);
    out << R"({"key":"a","value":1})" << '\n'
        << R"({"key":"a","value":2})" << '\n'
        << R"({"key":"b","val)";
  }
  ResponseCache cache(path.string());
  EXPECT_EQ(cache.size(), 1u);
  EXPECT_EQ(*cache.get("a"), 2);
  EXPECT_FALSE(cache.get("b").has_value());
  std::filesystem::remove(path);
}

TEST(RemoteBackend, RetriesTransientStatusThenSucceeds) {
  FakeServer server;
  server.fail_first(2);
  RemoteBackend backend(config_for(server));
  EXPECT_NEAR(backend.conditional_log_likelihood("c", "ab").value, -0.2, 1e-12);
  EXPECT_EQ(backend.network_calls(), 3u);
}

TEST(RemoteBackend, ExhaustedRetriesRaiseRetryableError) {
  FakeServer server;
  server.fail_first(100);
  RemoteBackend backend(config_for(server));
  try {
    backend.conditional_log_likelihood("c", "ab");
    FAIL() << "expected RetryableError";
  } catch (const RetryableError& e) {
    EXPECT_EQ(e.attempts(), 3);
    EXPECT_NE(std::string(e.what()).find("HTTP 503"), std::string::npos);
  }
  EXPECT_EQ(server.requests(), 3);
}

TEST(RemoteBackend, TimeoutIsRetryable) {
  FakeServer server;
  server.delay_ms(600);
  auto c = config_for(server);
  c.timeout_seconds = 0.1;
  c.max_attempts = 2;
  RemoteBackend backend(c);
  EXPECT_THROW(backend.generate("slow"), RetryableError);
}

TEST(RemoteBackend, MissingCredentialFailsBeforeAnyRequest) {
  FakeServer server;
  auto c = config_for(server);
  c.api_key_env = "PROMPTBOUND_TEST_UNSET_KEY";
  ::unsetenv("PROMPTBOUND_TEST_UNSET_KEY");
  EXPECT_THROW(RemoteBackend{c}, ConfigError);
  EXPECT_EQ(server.requests(), 0);
}

TEST(RemoteBackend, CredentialIsSentAsBearerToken) {
  FakeServer server;
  auto c = config_for(server);
  c.api_key_env = "PROMPTBOUND_TEST_KEY";
  ::setenv("PROMPTBOUND_TEST_KEY", "sk-test", 1);
  RemoteBackend backend(c);
  backend.generate("hello");
  EXPECT_EQ(server.last_auth(), "Bearer sk-test");
  ::unsetenv("PROMPTBOUND_TEST_KEY");
  // The token never appears in the serialized config.
  EXPECT_EQ(c.to_json().dump().find("sk-test"), std::string::npos);
}

TEST(RemoteBackend, ChatTemplateWrapsContext) {
  FakeServer server;
  auto c = config_for(server);
  c.shape = RequestShape::ChatTemplate;
  c.chat_template = "[sys]{context}[/sys]";
  RemoteBackend backend(c);
  const LogLik ll = backend.conditional_log_likelihood("meta", "xy");
  EXPECT_EQ(server.last_body()["prompt"], "[sys]meta[/sys]xy");
  EXPECT_EQ(ll.token_count, 2);
}

TEST(RemoteBackend, GenerationReturnsText) {
  FakeServer server;
  RemoteBackend backend(config_for(server));
  EXPECT_EQ(backend.generate("Is this hateful?"), " Yes");
  EXPECT_EQ(server.last_body()["max_tokens"], 64);
}

TEST(RemoteConfig, JsonRoundTripAndValidation) {
  RemoteConfig c;
  c.url = "https://example.invalid/v1/completions";
  c.api_key_env = "MY_KEY";
  c.shape = RequestShape::ChatTemplate;
  EXPECT_EQ(RemoteConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_THROW(RemoteConfig::from_json({{"url", "x"}, {"max_attempts", 0}}), ConfigError);
  EXPECT_THROW(parse_request_shape("bogus"), ConfigError);
  c.url = "no-scheme";
  EXPECT_THROW(RemoteBackend{c}, ConfigError);
}

TEST(RemoteBackend, RecordedResponseFixture) {
  std::ifstream in(std::string(PROMPTBOUND_FIXTURE_DIR) + "/recorded_completion.json");
  ASSERT_TRUE(in.good());
  const auto doc = nlohmann::json::parse(in);
  // Prefix "Classify:" is 9 bytes; the target tokens start at offset 9.
  const LogLik ll = RemoteBackend::sum_target_logprobs(doc, 9, "recorded");
  EXPECT_NEAR(ll.value, -1.25 + -0.5 + -2.0, 1e-12);
  EXPECT_EQ(ll.token_count, 3);
  const nlohmann::json no_logprobs = {{"choices", {{{"text", "x"}, {"logprobs", nullptr}}}}};
  EXPECT_THROW(RemoteBackend::sum_target_logprobs(no_logprobs, 0, "r"), UnsupportedCapability);
}
