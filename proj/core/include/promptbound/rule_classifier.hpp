// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptbound/dataset.hpp"
#include "promptbound/lm_backend.hpp"

namespace promptbound {

/// Deterministic offline stand-in for a classifying LLM.
///
/// A prompt gets a skill in [0, 1]: base_skill plus the weight of every
/// keyword it contains, minus length_penalty per character beyond
/// free_length. Each example text hashes to a difficulty in [0, 1); the
/// answer is correct iff difficulty < skill. Prompts lacking every
/// format_hints entry answer in free text (unparseable) on the fraction
/// `unparseable_rate` of examples. Error sets are nested in skill, so a more
/// skilled prompt never does worse on any example.
class RuleClassifier final : public LanguageModelBackend {
 public:
  struct Rules {
    double base_skill = 0.5;
    std::map<std::string, double> keyword_weights;
    double length_penalty = 0.0;
    std::size_t free_length = 80;
    std::vector<std::string> format_hints;
    double unparseable_rate = 0.0;
    std::string query_template = "{prompt}\n\nText: {text}\nAnswer:";

    static Rules from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
  };

  RuleClassifier(Rules rules, const LabeledDataset& truth, std::string id = "rule_classifier");

  std::string id() const override { return id_; }
  bool supports_generation() const override { return true; }
  std::string generate(std::string_view query) const override;

  double skill(std::string_view prompt) const;
  static double difficulty(std::string_view text);

 private:
  Rules rules_;
  std::map<std::string, Label, std::less<>> labels_;
  std::string id_;
};

}  // namespace promptbound
