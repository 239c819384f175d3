// SPDX-License-Identifier: Apache-2.0
#include "promptbound/rule_classifier.hpp"

#include <algorithm>
#include <cctype>

#include "promptbound/error.hpp"
#include "promptbound/hash.hpp"

namespace promptbound {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

double unit_hash(std::string_view salt, std::string_view text) {
  std::string key(salt);
  key.append(text);
  return static_cast<double>(fnv1a64(key) >> 11) * 0x1.0p-53;
}

}  // namespace

RuleClassifier::Rules RuleClassifier::Rules::from_json(const nlohmann::json& doc) {
  Rules r;
  r.base_skill = doc.value("base_skill", r.base_skill);
  r.keyword_weights = doc.value("keyword_weights", r.keyword_weights);
  r.length_penalty = doc.value("length_penalty", r.length_penalty);
  r.free_length = doc.value("free_length", r.free_length);
  r.format_hints = doc.value("format_hints", r.format_hints);
  r.unparseable_rate = doc.value("unparseable_rate", r.unparseable_rate);
  r.query_template = doc.value("query_template", r.query_template);
  return r;
}

nlohmann::json RuleClassifier::Rules::to_json() const {
  return {{"base_skill", base_skill},         {"keyword_weights", keyword_weights},
          {"length_penalty", length_penalty}, {"free_length", free_length},
          {"format_hints", format_hints},     {"unparseable_rate", unparseable_rate},
          {"query_template", query_template}};
}

RuleClassifier::RuleClassifier(Rules rules, const LabeledDataset& truth, std::string id)
    : rules_(std::move(rules)), id_(std::move(id)) {
  for (const auto& ex : truth.examples()) labels_.emplace(ex.text, ex.label);
}

double RuleClassifier::difficulty(std::string_view text) { return unit_hash("difficulty:", text); }

double RuleClassifier::skill(std::string_view prompt) const {
  const std::string p = lower(prompt);
  double s = rules_.base_skill;
  for (const auto& [keyword, weight] : rules_.keyword_weights) {
    if (p.find(lower(keyword)) != std::string::npos) s += weight;
  }
  if (prompt.size() > rules_.free_length) {
    s -= rules_.length_penalty * static_cast<double>(prompt.size() - rules_.free_length);
  }
  return std::clamp(s, 0.0, 1.0);
}

std::string RuleClassifier::generate(std::string_view query) const {
  // Recover prompt and text from the query template.
  const std::string& tmpl = rules_.query_template;
  const auto p_pos = tmpl.find("{prompt}");
  const auto t_pos = tmpl.find("{text}");
  if (p_pos == std::string::npos || t_pos == std::string::npos || t_pos < p_pos) {
    throw ConfigError("rule classifier template needs {prompt} before {text}");
  }
  const std::string before_prompt = tmpl.substr(0, p_pos);
  const std::string between = tmpl.substr(p_pos + 8, t_pos - p_pos - 8);
  const std::string after_text = tmpl.substr(t_pos + 6);
  if (query.substr(0, before_prompt.size()) != before_prompt) {
    throw InvalidArgument("query does not match the rule classifier template");
  }
  const auto mid = query.rfind(between);
  if (mid == std::string_view::npos || mid < before_prompt.size() || query.size() < after_text.size() ||
      query.substr(query.size() - after_text.size()) != after_text || mid + between.size() > query.size() - after_text.size()) {
    throw InvalidArgument("query does not match the rule classifier template");
  }
  const auto prompt = query.substr(before_prompt.size(), mid - before_prompt.size());
  const auto text = query.substr(mid + between.size(), query.size() - after_text.size() - mid - between.size());

  auto it = labels_.find(text);
  if (it == labels_.end()) throw InvalidArgument("rule classifier has no label for this example");

  const std::string p = lower(prompt);
  const bool has_hint = rules_.format_hints.empty() ||
                        std::any_of(rules_.format_hints.begin(), rules_.format_hints.end(),
                                    [&](const std::string& h) { return p.find(lower(h)) != std::string::npos; });
  if (!has_hint && unit_hash("format:", text) < rules_.unparseable_rate) {
    return "It is hard to say without more context.";
  }
  const bool correct = difficulty(text) < skill(prompt);
  const bool says_yes = (it->second == Label::Positive) == correct;
  return says_yes ? "Yes" : "No";
}

}  // namespace promptbound
