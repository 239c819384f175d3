// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace promptbound {

enum class Label { Positive, Negative };

std::string_view to_string(Label label);

struct LabeledExample {
  std::string id;
  std::string text;
  Label label = Label::Negative;
};

enum class DataFormat { Csv, Jsonl };

DataFormat parse_data_format(std::string_view name);

/// Which columns/keys hold the text, label and (optionally) id, and which
/// raw label values mean positive/negative. Matching is case-insensitive
/// after trimming whitespace.
struct FieldMap {
  std::string text = "text";
  std::string label = "label";
  std::optional<std::string> id;
  std::vector<std::string> positive = {"yes", "1", "true"};
  std::vector<std::string> negative = {"no", "0", "false"};

  static FieldMap from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// Ordered, immutable collection of labeled examples with unique ids.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  explicit LabeledDataset(std::vector<LabeledExample> examples);

  std::size_t size() const noexcept { return examples_.size(); }
  bool empty() const noexcept { return examples_.empty(); }
  const LabeledExample& operator[](std::size_t i) const { return examples_[i]; }
  std::span<const LabeledExample> examples() const noexcept { return examples_; }
  std::optional<std::size_t> index_of(std::string_view id) const;
  std::size_t count(Label label) const;

  /// Examples at the given positions, in the given order.
  LabeledDataset subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<LabeledExample> examples_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// RFC-4180 style CSV: comma separated, double-quoted fields may contain
/// commas, newlines and doubled quotes.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

LabeledDataset parse_dataset(std::string_view contents, DataFormat format, const FieldMap& field_map);
LabeledDataset load_dataset(const std::string& path, DataFormat format, const FieldMap& field_map);

enum class EvalPolicy {
  /// Empirical risk measured on all of S, prior subset included.
  FullSample,
  /// Empirical risk measured on S \ J only.
  ExcludePriorSubset,
};

std::string_view to_string(EvalPolicy policy);
EvalPolicy parse_eval_policy(std::string_view name);

/// The prior subset J of a sample S, drawn uniformly without replacement.
struct SplitPlan {
  std::size_t n = 0;
  /// Positions of J within the dataset, in draw order.
  std::vector<std::size_t> prior_indices;
  std::vector<std::string> prior_ids;
  EvalPolicy eval_policy = EvalPolicy::FullSample;
  std::uint64_t seed = 0;

  std::size_t m_prior() const noexcept { return prior_indices.size(); }
  /// Positions used for empirical risk under eval_policy, in dataset order.
  std::vector<std::size_t> eval_indices() const;
};

SplitPlan make_split(const LabeledDataset& dataset, std::size_t m_prior, std::uint64_t seed,
                     EvalPolicy eval_policy = EvalPolicy::FullSample);

}  // namespace promptbound
