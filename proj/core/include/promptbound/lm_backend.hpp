// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

namespace promptbound {

/// Conditioning text that defines a prior over prompts.
struct PriorSpec {
  std::string meta_prompt;
  std::string backend_id;
  /// Display name for reports ("empty", "informative", "optimized", ...).
  std::string label;
};

struct LogLik {
  /// Nats; <= 0 for normalized models.
  double value = 0.0;
  std::int64_t token_count = 0;
  std::string backend_id;
};

/// Abstract scorer/generator. Implementations must be safe to call from
/// several threads at once.
class LanguageModelBackend {
 public:
  virtual ~LanguageModelBackend() = default;

  virtual std::string id() const = 0;

  virtual bool supports_log_likelihood() const { return false; }
  virtual bool supports_generation() const { return false; }

  /// Sum of log P(token | context, preceding target tokens) over `target`.
  /// Throws UnsupportedCapability unless overridden.
  virtual LogLik conditional_log_likelihood(std::string_view context, std::string_view target) const;

  /// Greedy completion of `prompt`. Throws UnsupportedCapability unless overridden.
  virtual std::string generate(std::string_view prompt) const;
};

/// Entry point shared by all backends; validates the target first.
LogLik conditional_log_likelihood(const LanguageModelBackend& backend, std::string_view context,
                                  std::string_view target);

/// Fixed-table backend for tests and recorded fixtures.
class StubBackend final : public LanguageModelBackend {
 public:
  using ScoreFn = std::function<double(std::string_view context, std::string_view target)>;
  using GenerateFn = std::function<std::string(std::string_view prompt)>;

  explicit StubBackend(std::string id = "stub") : id_(std::move(id)) {}

  StubBackend& set_log_likelihood(std::string context, std::string target, double value);
  StubBackend& set_score_fn(ScoreFn fn);
  StubBackend& set_generation(std::string prompt, std::string output);
  StubBackend& set_generate_fn(GenerateFn fn);

  std::string id() const override { return id_; }
  bool supports_log_likelihood() const override { return !scores_.empty() || score_fn_ != nullptr; }
  bool supports_generation() const override { return !generations_.empty() || generate_fn_ != nullptr; }
  LogLik conditional_log_likelihood(std::string_view context, std::string_view target) const override;
  std::string generate(std::string_view prompt) const override;

 private:
  std::string id_;
  std::map<std::pair<std::string, std::string>, double, std::less<>> scores_;
  std::map<std::string, std::string, std::less<>> generations_;
  ScoreFn score_fn_;
  GenerateFn generate_fn_;
};

}  // namespace promptbound
