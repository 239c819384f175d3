// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptbound/lm_backend.hpp"

namespace promptbound {

/// Splits UTF-8 text into one string per code point. Throws InvalidArgument
/// on malformed input.
std::vector<std::string> split_utf8(std::string_view text);

/// Printable ASCII (0x20..0x7e) plus newline and tab.
std::vector<std::string> printable_ascii_alphabet();

/// Character-level Markov model with add-alpha smoothing and an explicit
/// end-of-text outcome, so it is a proper distribution over finite strings.
///
/// `order` is the number of preceding symbols used as context. Near the start
/// of a text the context is simply shorter; there is no begin marker.
class NgramModel {
 public:
  static constexpr int kFormatVersion = 1;

  NgramModel(int order, std::vector<std::string> alphabet, double alpha);

  int order() const noexcept { return order_; }
  const std::vector<std::string>& alphabet() const noexcept { return alphabet_; }
  double alpha() const noexcept { return alpha_; }
  /// Alphabet size plus one for end-of-text.
  std::size_t outcome_count() const noexcept { return alphabet_.size() + 1; }
  std::size_t end_of_text() const noexcept { return alphabet_.size(); }

  std::optional<std::size_t> symbol_index(std::string_view symbol) const;

  /// Counts one text (terminated by end-of-text). Throws InvalidArgument
  /// naming the first symbol outside the alphabet.
  void add_text(std::string_view text);

  std::uint64_t count(std::string_view context_key, std::size_t outcome) const;
  std::uint64_t context_total(std::string_view context_key) const;

  /// P(outcome | context_key) with add-alpha smoothing. `context_key` is the
  /// concatenation of at most `order` preceding symbols.
  double probability(std::string_view context_key, std::size_t outcome) const;

  /// log P(target, end-of-text | context). Context symbols outside the
  /// alphabet are allowed (they only select unseen contexts); target symbols
  /// must be in the alphabet.
  LogLik score(std::string_view context, std::string_view target) const;

  nlohmann::json to_json() const;
  static NgramModel from_json(const nlohmann::json& doc);
  std::string serialize() const;
  static NgramModel deserialize(std::string_view text);
  static NgramModel load(const std::string& path);
  void save(const std::string& path) const;

 private:
  int order_;
  std::vector<std::string> alphabet_;
  std::map<std::string, std::size_t, std::less<>> index_;
  double alpha_;
  std::map<std::string, std::vector<std::uint64_t>, std::less<>> counts_;
  std::map<std::string, std::uint64_t, std::less<>> totals_;
};

NgramModel train_ngram(std::span<const std::string> corpus, int order, std::vector<std::string> alphabet,
                       double smoothing_alpha = 1.0);

class NgramBackend final : public LanguageModelBackend {
 public:
  explicit NgramBackend(std::shared_ptr<const NgramModel> model, std::string id = "ngram");

  std::string id() const override { return id_; }
  bool supports_log_likelihood() const override { return true; }
  LogLik conditional_log_likelihood(std::string_view context, std::string_view target) const override;

  const NgramModel& model() const noexcept { return *model_; }

 private:
  std::shared_ptr<const NgramModel> model_;
  std::string id_;
};

}  // namespace promptbound
