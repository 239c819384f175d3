// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptbound/bounds.hpp"
#include "promptbound/dataset.hpp"
#include "promptbound/evaluator.hpp"
#include "promptbound/lm_backend.hpp"
#include "promptbound/prompt.hpp"
#include "promptbound/proposer.hpp"
#include "promptbound/runlog.hpp"

namespace promptbound {

enum class ObjectiveKind { Bound, Accuracy };

std::string_view to_string(ObjectiveKind kind);
ObjectiveKind parse_objective_kind(std::string_view name);

struct Objective {
  ObjectiveKind kind = ObjectiveKind::Bound;
  BoundFamily family = BoundFamily::TolstikhinSeldin;
  double delta = kDefaultDelta;
  double sigma = kDefaultSigma;
  double eta = kDefaultEta;
  /// Size of the uniform posterior; 1 means a point mass on the candidate.
  std::size_t k = 1;
  PriorSpec prior;

  nlohmann::json to_json() const;
  static Objective from_json(const nlohmann::json& doc);
};

/// Sample-size bookkeeping the Theorem1 family needs.
struct SampleContext {
  std::size_t m_prior = 0;
  EvalPolicy eval_policy = EvalPolicy::FullSample;
};

/// One prompt of a (uniform) posterior.
struct PosteriorMember {
  double log_lik = 0.0;
  double emp_risk = 0.0;
  std::size_t n_evaluated = 0;
};

struct ObjectiveScore {
  /// Minimized by the search: the bound, or emp_risk for accuracy objectives.
  double value = 0.0;
  double emp_risk = 0.0;
  /// Present whenever the bound could be computed, for either kind.
  std::optional<BoundValue> bound;
  std::string note;
};

/// Builds the BoundInputs for a uniform posterior over `members`: KL from the
/// members' log-likelihoods, emp_risk their mean, m the smallest sample.
BoundInputs posterior_bound_inputs(std::span<const PosteriorMember> members, const Objective& objective,
                                   const SampleContext& context);

ObjectiveScore score_objective(std::span<const PosteriorMember> members, const Objective& objective,
                               const SampleContext& context = {});

/// Scores a single candidate; its log-likelihood under objective.prior is
/// computed with `scorer` unless already cached on the prompt.
ObjectiveScore score_objective(const Prompt& candidate, const CandidateStats& stats, const Objective& objective,
                               const LanguageModelBackend& scorer, const SampleContext& context = {});

struct OptimizerConfig {
  std::size_t steps = 200;
  std::size_t budget_per_step = 160;
  std::size_t width = 4;
  std::uint64_t seed = 0;
  AllocationConfig allocation;
  ClassifyOptions classify;
  /// Stop after this many consecutive stagnant steps; 0 disables.
  std::size_t early_stop_stagnant = 0;

  nlohmann::json to_json() const;
  static OptimizerConfig from_json(const nlohmann::json& doc);
};

struct OptimizeInputs {
  const LabeledDataset& dataset;
  const SplitPlan& split;
  const LanguageModelBackend& classifier;
  const LanguageModelBackend& scorer;
  const EditProposer& proposer;
  Prompt seed_prompt;
  /// Held-out examples for the final test error; may be empty.
  const LabeledDataset* test_set = nullptr;
};

/// Propose/evaluate/select loop. Backend failures close the log with a
/// failure marker instead of throwing. `config_snapshot` is embedded in the
/// header; `sink` receives each JSONL line as it is produced.
RunLog optimize(const OptimizeInputs& inputs, const Objective& objective, const OptimizerConfig& config,
                const nlohmann::json& config_snapshot = nlohmann::json::object(), const RunLogSink& sink = {});

struct PriorSearchConfig {
  std::size_t steps = 20;
  std::size_t width = 4;
  std::uint64_t seed = 0;
  std::string seed_meta_prompt;

  nlohmann::json to_json() const;
  static PriorSearchConfig from_json(const nlohmann::json& doc);
};

struct PriorSearchStep {
  std::size_t step = 0;
  std::vector<std::pair<std::string, double>> candidates;  // meta-prompt, mean log-lik
  std::string incumbent;
  double best_so_far = 0.0;
  bool improved = false;
};

struct PriorSearchResult {
  PriorSpec prior;
  double mean_log_lik = 0.0;
  double seed_mean_log_lik = 0.0;
  std::vector<PriorSearchStep> steps;

  nlohmann::json to_json() const;
};

/// Mean log-likelihood of `targets` given `meta_prompt`.
double mean_target_log_lik(std::span<const Prompt> targets, std::string_view meta_prompt,
                           const LanguageModelBackend& scorer);

/// Hill-climbs meta-prompt space to maximize the mean log-likelihood of the
/// target prompts. Never returns a meta-prompt worse than the seed.
PriorSearchResult optimize_prior(std::span<const Prompt> targets, const EditProposer& proposer,
                                 const LanguageModelBackend& scorer, const PriorSearchConfig& config);

}  // namespace promptbound
