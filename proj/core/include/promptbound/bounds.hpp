// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace promptbound {

inline constexpr double kDefaultDelta = 0.1;
/// A loss bounded in [0, 1] is 1/2-subgaussian (Hoeffding's lemma).
inline constexpr double kDefaultSigma = 0.5;
/// Markov level used to turn the expected gap into a high-probability bound.
inline constexpr double kDefaultEta = 0.5;

/// KL divergence in nats.
struct KlNats {
  double value = 0.0;
  /// Set when the log-probabilities were mutually inconsistent (value < 0).
  bool negative_input_warning = false;

  static KlNats from_log_likelihood(double log_lik);
};

enum class BoundFamily { McAllester, TolstikhinSeldin, Theorem1 };

std::string_view to_string(BoundFamily family);
/// Accepts "mcallester", "ts", "tolstikhin-seldin", "tolstikhin_seldin", "theorem1".
BoundFamily parse_bound_family(std::string_view name);

struct BoundInputs {
  double emp_risk = 0.0;
  KlNats kl{};
  /// Number of examples the empirical risk was measured on.
  std::int64_t m = 1;
  /// Total sample size (Theorem1 only).
  std::int64_t n = 1;
  /// Size of the prior subset J (Theorem1 only), m_prior < n.
  std::int64_t m_prior = 0;
  double delta = kDefaultDelta;
  double sigma = kDefaultSigma;
  double eta = kDefaultEta;
};

/// Result of a bound evaluation. `bound` is never clipped to 1, so vacuous
/// values stay visible.
struct BoundValue {
  double bound = 0.0;
  BoundFamily family = BoundFamily::McAllester;
  BoundInputs inputs{};
  /// bound - emp_risk.
  double gap_term = 0.0;
  /// True when produced by n_adjusted_bound (comparison only).
  bool n_adjusted = false;
};

/// KL(Q || P) for Q uniform over k prompts with the given log prior
/// probabilities: -log(k) - mean(log_priors).
KlNats kl_uniform_posterior(std::span<const double> log_priors);

/// emp_risk + sqrt((KL + log(m/delta)) / (2m)).
BoundValue mcallester_bound(const BoundInputs& inputs);

/// emp_risk + sqrt(2 emp_risk C) + 2C with C = (KL + log(2 sqrt(m)/delta)) / m.
BoundValue tolstikhin_seldin_bound(const BoundInputs& inputs);

/// sqrt(2 sigma^2 / (n - m_prior) * KL): bound on E|R - R_hat| for a prior
/// built from a size-m_prior subset of an n-sample.
double theorem1_expected_gap(double sigma, std::int64_t n, std::int64_t m_prior, const KlNats& kl);

/// emp_risk + theorem1_expected_gap / eta. Holds with probability >= 1 - eta
/// by Markov's inequality.
BoundValue theorem1_bound(const BoundInputs& inputs);

BoundValue compute_bound(BoundFamily family, const BoundInputs& inputs);

/// Recomputes `family` with the sample size (m, or n for Theorem1) replaced by
/// n_max while holding emp_risk fixed. Used to compare candidates evaluated on
/// different numbers of examples.
BoundValue n_adjusted_bound(const BoundInputs& inputs, std::int64_t n_max, BoundFamily family);

}  // namespace promptbound
