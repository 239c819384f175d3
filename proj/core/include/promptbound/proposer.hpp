// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptbound/dataset.hpp"
#include "promptbound/evaluator.hpp"
#include "promptbound/lm_backend.hpp"
#include "promptbound/prompt.hpp"

namespace promptbound {

/// A failed prediction handed to the proposer as feedback.
struct FailureExample {
  std::string text;
  Label label = Label::Negative;
  std::string model_output;
};

class EditProposer {
 public:
  virtual ~EditProposer() = default;
  virtual std::string name() const = 0;
  /// Up to `width` rewrites of `source`. Never returns `source` itself or
  /// duplicates; may return fewer than `width` (possibly none).
  virtual std::vector<Prompt> propose(const Prompt& source, std::span<const FailureExample> failures,
                                      std::size_t width, std::uint64_t seed) const = 0;
};

/// Word-level substitutions, clause insertion/deletion, answer-format suffix
/// toggles.
struct MutationTable {
  std::map<std::string, std::vector<std::string>> synonyms;
  std::vector<std::string> clauses;
  std::vector<std::string> suffixes;

  bool empty() const { return synonyms.empty() && clauses.empty() && suffixes.empty(); }

  static MutationTable from_json(const nlohmann::json& doc);
  static MutationTable load(const std::string& path);
  nlohmann::json to_json() const;

  /// Edits for task prompts of a binary hate-speech style classifier.
  static MutationTable default_task_table();
  /// Sentences for building meta-prompts (priors).
  static MutationTable default_meta_table();
};

/// Deterministic templated edits. All single-edit neighbours of the source are
/// enumerated, deduplicated, and `width` of them are drawn with the seed.
class OfflineMutationProposer final : public EditProposer {
 public:
  explicit OfflineMutationProposer(MutationTable table);

  std::string name() const override { return "offline_mutation"; }
  std::vector<Prompt> propose(const Prompt& source, std::span<const FailureExample> failures, std::size_t width,
                              std::uint64_t seed) const override;

  /// Every distinct single-edit neighbour, in a fixed order.
  std::vector<Prompt> neighbours(const Prompt& source) const;

 private:
  MutationTable table_;
};

/// Asks a generation backend to critique the prompt against its failures and
/// return rewrites, each wrapped in <START> ... <END>.
class LlmCriticProposer final : public EditProposer {
 public:
  explicit LlmCriticProposer(std::shared_ptr<const LanguageModelBackend> backend, std::size_t max_failures = 4);

  std::string name() const override { return "llm_critic"; }
  std::vector<Prompt> propose(const Prompt& source, std::span<const FailureExample> failures, std::size_t width,
                              std::uint64_t seed) const override;

  static std::string build_request(const Prompt& source, std::span<const FailureExample> failures,
                                   std::size_t width, std::size_t max_failures);
  static std::vector<std::string> parse_rewrites(std::string_view response);

 private:
  std::shared_ptr<const LanguageModelBackend> backend_;
  std::size_t max_failures_;
};

}  // namespace promptbound
