// SPDX-License-Identifier: Apache-2.0
#include "promptbound/lm_backend.hpp"

#include "promptbound/error.hpp"

namespace promptbound {

LogLik LanguageModelBackend::conditional_log_likelihood(std::string_view, std::string_view) const {
  throw UnsupportedCapability("backend '" + id() + "' does not expose log-probabilities");
}

std::string LanguageModelBackend::generate(std::string_view) const {
  throw UnsupportedCapability("backend '" + id() + "' does not support generation");
}

LogLik conditional_log_likelihood(const LanguageModelBackend& backend, std::string_view context,
                                  std::string_view target) {
  if (target.empty()) throw InvalidArgument("target text must be non-empty");
  if (!backend.supports_log_likelihood()) {
    throw UnsupportedCapability("backend '" + backend.id() + "' does not expose log-probabilities");
  }
  return backend.conditional_log_likelihood(context, target);
}

StubBackend& StubBackend::set_log_likelihood(std::string context, std::string target, double value) {
  scores_[{std::move(context), std::move(target)}] = value;
  return *this;
}

StubBackend& StubBackend::set_score_fn(ScoreFn fn) {
  score_fn_ = std::move(fn);
  return *this;
}

StubBackend& StubBackend::set_generation(std::string prompt, std::string output) {
  generations_[std::move(prompt)] = std::move(output);
  return *this;
}

StubBackend& StubBackend::set_generate_fn(GenerateFn fn) {
  generate_fn_ = std::move(fn);
  return *this;
}

LogLik StubBackend::conditional_log_likelihood(std::string_view context, std::string_view target) const {
  auto it = scores_.find(std::pair<std::string, std::string>(context, target));
  if (it != scores_.end()) return {it->second, 1, id_};
  if (score_fn_) return {score_fn_(context, target), 1, id_};
  throw InvalidArgument("stub backend has no entry for target '" + std::string(target) + "'");
}

std::string StubBackend::generate(std::string_view prompt) const {
  auto it = generations_.find(prompt);
  if (it != generations_.end()) return it->second;
  if (generate_fn_) return generate_fn_(prompt);
  if (generations_.empty()) throw UnsupportedCapability("stub backend '" + id_ + "' has no scripted generations");
  throw InvalidArgument("stub backend has no scripted output for this prompt");
}

}  // namespace promptbound
