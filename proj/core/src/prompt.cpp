// SPDX-License-Identifier: Apache-2.0
#include "promptbound/prompt.hpp"

#include "promptbound/hash.hpp"

namespace promptbound {

std::string prompt_id_for(const std::string& text) { return "p" + hex64(fnv1a64(text)); }

Prompt::Prompt(std::string text, std::string origin, std::string parent_id)
    : id_(prompt_id_for(text)), text_(std::move(text)), origin_(std::move(origin)), parent_id_(std::move(parent_id)) {}

Prompt Prompt::with_log_lik(LogLik value) const {
  Prompt copy = *this;
  copy.log_lik_ = std::move(value);
  return copy;
}

}  // namespace promptbound
