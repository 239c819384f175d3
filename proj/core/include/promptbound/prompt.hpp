// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "promptbound/lm_backend.hpp"

namespace promptbound {

/// Immutable prompt candidate. The id is derived from the text, so equal
/// texts always share an id.
class Prompt {
 public:
  explicit Prompt(std::string text, std::string origin = "seed", std::string parent_id = {});

  const std::string& id() const noexcept { return id_; }
  const std::string& text() const noexcept { return text_; }
  /// How the prompt was produced: "seed", an edit name, "llm_critic", ...
  const std::string& origin() const noexcept { return origin_; }
  const std::string& parent_id() const noexcept { return parent_id_; }

  const std::optional<LogLik>& log_lik() const noexcept { return log_lik_; }
  Prompt with_log_lik(LogLik value) const;

  friend bool operator==(const Prompt& a, const Prompt& b) { return a.text_ == b.text_; }

 private:
  std::string id_;
  std::string text_;
  std::string origin_;
  std::string parent_id_;
  std::optional<LogLik> log_lik_;
};

std::string prompt_id_for(const std::string& text);

}  // namespace promptbound
