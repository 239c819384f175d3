// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptbound/dataset.hpp"
#include "promptbound/lm_backend.hpp"
#include "promptbound/prompt.hpp"

namespace promptbound {

enum class ParsedAnswer { Positive, Negative, Unparseable };

std::string_view to_string(ParsedAnswer answer);

struct EvalRecord {
  std::string prompt_id;
  std::string example_id;
  std::string raw_output;
  ParsedAnswer parsed = ParsedAnswer::Unparseable;
  /// 0 iff parsed matches the label; unparseable output always costs 1.
  int loss = 1;
  /// Non-empty when the backend failed and the record was filled in.
  std::string error;
};

nlohmann::json to_json(const EvalRecord& record);
EvalRecord eval_record_from_json(const nlohmann::json& doc);

/// Case-insensitive match of the output's first word against answer aliases.
struct AnswerParser {
  std::vector<std::string> positive = {"yes"};
  std::vector<std::string> negative = {"no"};

  ParsedAnswer parse(std::string_view output) const;
};

inline constexpr std::string_view kDefaultQueryTemplate = "{prompt}\n\nText: {text}\nAnswer:";

struct ClassifyOptions {
  /// `{prompt}` and `{text}` placeholders.
  std::string query_template{kDefaultQueryTemplate};
  AnswerParser parser;
};

std::string compose_query(std::string_view query_template, std::string_view prompt, std::string_view text);

EvalRecord classify(const LanguageModelBackend& backend, const Prompt& prompt, const LabeledExample& example,
                    const ClassifyOptions& options = {});

double empirical_risk(std::span<const EvalRecord> records);

struct CandidateStats {
  std::string prompt_id;
  std::size_t n_evaluated = 0;
  std::size_t errors = 0;
  double emp_risk = 0.0;
  std::vector<std::string> eval_example_ids;
  /// Allocation rounds this candidate took part in.
  std::size_t rounds = 0;
};

nlohmann::json to_json(const CandidateStats& stats);
CandidateStats candidate_stats_from_json(const nlohmann::json& doc);

enum class AllocationPolicy { SuccessiveHalving, Ucb };

std::string_view to_string(AllocationPolicy policy);
AllocationPolicy parse_allocation_policy(std::string_view name);

struct AllocationConfig {
  AllocationPolicy policy = AllocationPolicy::SuccessiveHalving;
  /// New examples per candidate per round.
  std::size_t batch = 8;
  std::size_t halving_factor = 2;
  double ucb_exploration = 1.0;
  /// Concurrent classification queries within a round.
  std::size_t workers = 1;

  nlohmann::json to_json() const;
  static AllocationConfig from_json(const nlohmann::json& doc);
};

struct AllocationResult {
  std::vector<CandidateStats> stats;
  /// records[i] belongs to candidates[i], in evaluation order.
  std::vector<std::vector<EvalRecord>> records;
  std::size_t queries_used = 0;
};

/// Secondary ranking key for candidates with equal empirical risk; lower wins.
/// Typically the candidate's bound. Remaining ties go to the shorter prompt,
/// then the lexicographically smaller one.
using TieBreakFn = std::function<double(const Prompt&, const CandidateStats&)>;

/// True when `a` ranks strictly ahead of `b`.
bool ranks_before(const Prompt& a, const CandidateStats& sa, const Prompt& b, const CandidateStats& sb,
                  const TieBreakFn& tie_break);

/// Spends at most `budget` classification queries across candidates so that
/// lower-risk candidates accumulate more evaluations. All candidates walk the
/// eval view in the same seeded order, so no example is scored twice for one
/// prompt and comparisons within a round are on identical examples.
AllocationResult allocate_and_evaluate(const LanguageModelBackend& classifier, std::span<const Prompt> candidates,
                                       const LabeledDataset& eval_view, std::size_t budget,
                                       const AllocationConfig& config, std::uint64_t seed,
                                       const ClassifyOptions& options = {}, const TieBreakFn& tie_break = {});

}  // namespace promptbound
