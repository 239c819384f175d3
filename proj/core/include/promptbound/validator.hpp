// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptbound/bounds.hpp"

namespace promptbound {

/// Finite classification task whose population risk is exactly computable.
/// Universe points carry a weight and a deterministic label; each hypothesis
/// is a fixed prediction per point.
struct SyntheticTask {
  static constexpr std::size_t kMaxHypotheses = 10000;
  static constexpr std::size_t kMaxUniverse = 1000;

  std::vector<double> weights;
  std::vector<std::uint8_t> labels;
  std::vector<std::vector<std::uint8_t>> predictions;
  std::vector<std::string> names;

  std::size_t universe_size() const noexcept { return weights.size(); }
  std::size_t hypothesis_count() const noexcept { return predictions.size(); }

  /// 0-1 loss of hypothesis `h` on universe point `x`.
  std::uint8_t loss(std::size_t h, std::size_t x) const { return predictions[h][x] != labels[x] ? 1 : 0; }

  /// Throws InvalidArgument on inconsistent sizes, limits or weights.
  void validate() const;

  /// Random task: weights from a Dirichlet(1)-like draw, random labels, and
  /// hypotheses whose disagreement rates spread over [min_error, max_error].
  static SyntheticTask random(std::size_t universe, std::size_t hypotheses, std::uint64_t seed,
                              double min_error = 0.05, double max_error = 0.5);
};

double true_risk(const SyntheticTask& task, std::size_t hypothesis);

/// Mean empirical risk over every sample in universe^m, weighted by its
/// probability. Exponential in m; intended for tiny universes.
double enumerated_expected_empirical_risk(const SyntheticTask& task, std::size_t hypothesis, std::size_t m);

/// Uniform log-prior over the task's hypotheses.
std::vector<double> uniform_log_prior(const SyntheticTask& task);

struct CoverageOptions {
  double sigma = kDefaultSigma;
  double eta = kDefaultEta;
  /// |J| for Theorem1 trials; must be < m.
  std::size_t m_prior = 10;
  /// Sharpness of the J-fitted half of the Theorem1 prior.
  double prior_beta = 4.0;
  std::size_t workers = 1;
  bool keep_samples = true;
};

struct TrialRecord {
  std::size_t trial = 0;
  std::size_t selected = 0;
  double emp_risk = 0.0;
  double true_risk = 0.0;
  double bound = 0.0;
  double kl = 0.0;
  bool violated = false;
  std::vector<std::size_t> sample;
  std::vector<std::size_t> prior_subset;  // positions in `sample`; Theorem1 only
};

struct CoverageReport {
  BoundFamily family = BoundFamily::McAllester;
  double delta = kDefaultDelta;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::size_t violations = 0;
  double coverage = 0.0;
  double mean_slack = 0.0;
  /// Theorem1 only: Monte-Carlo mean |R - R_S| against the closed-form gap
  /// evaluated at the mean KL of the selected hypotheses.
  std::optional<double> mean_abs_gap;
  std::optional<double> mean_kl;
  std::optional<double> expected_gap_bound;
  std::vector<TrialRecord> records;

  /// 1 - delta - 3 sigma of the binomial count.
  double coverage_threshold() const;
  bool meets_threshold() const { return coverage >= coverage_threshold(); }

  nlohmann::json to_json() const;
  std::string to_text() const;
  /// One row per trial: trial,selected,emp_risk,true_risk,bound,kl,violated.
  std::string to_csv() const;
};

/// Runs `trials` independent draws of S ~ D^m. Each trial selects the
/// hypothesis minimizing the bound on S and checks it against the exact
/// population risk. Theorem1 trials draw J inside S and build a prior that
/// mixes `log_priors` with a softmax over errors on J.
CoverageReport coverage_trial_suite(const SyntheticTask& task, BoundFamily family, std::span<const double> log_priors,
                                    std::size_t m, double delta, std::size_t trials, std::uint64_t seed,
                                    const CoverageOptions& options = {});

/// Text table over several reports.
std::string coverage_table(std::span<const CoverageReport> reports);

}  // namespace promptbound
