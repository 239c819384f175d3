// SPDX-License-Identifier: Apache-2.0
#include "promptbound/bounds.hpp"

#include <cmath>
#include <string>

#include "promptbound/error.hpp"

namespace promptbound {
namespace {

// Formatted messages are built only on failure, see the inline throws below.
void require(bool ok, const char* message) {
  if (!ok) throw InvalidArgument(message);
}

void check_common(const BoundInputs& in) {
  if (!(std::isfinite(in.emp_risk) && in.emp_risk >= 0.0 && in.emp_risk <= 1.0)) {
    throw InvalidArgument("emp_risk must lie in [0, 1], got " + std::to_string(in.emp_risk));
  }
  if (!(std::isfinite(in.delta) && in.delta > 0.0 && in.delta < 1.0)) {
    throw InvalidArgument("delta must lie in (0, 1), got " + std::to_string(in.delta));
  }
  require(std::isfinite(in.kl.value), "kl must be finite");
}

void check_sample_size(const BoundInputs& in) {
  if (in.m < 1) throw InvalidArgument("m must be positive, got " + std::to_string(in.m));
}

BoundValue make_value(BoundFamily family, const BoundInputs& in, double gap) {
  BoundValue out;
  out.family = family;
  out.inputs = in;
  out.gap_term = gap;
  out.bound = in.emp_risk + gap;
  return out;
}

}  // namespace

KlNats KlNats::from_log_likelihood(double log_lik) {
  const double log_priors[] = {log_lik};
  return kl_uniform_posterior(log_priors);
}

std::string_view to_string(BoundFamily family) {
  switch (family) {
    case BoundFamily::McAllester:
      return "mcallester";
    case BoundFamily::TolstikhinSeldin:
      return "ts";
    case BoundFamily::Theorem1:
      return "theorem1";
  }
  return "unknown";
}

BoundFamily parse_bound_family(std::string_view name) {
  if (name == "mcallester") return BoundFamily::McAllester;
  if (name == "ts" || name == "tolstikhin-seldin" || name == "tolstikhin_seldin") {
    return BoundFamily::TolstikhinSeldin;
  }
  if (name == "theorem1" || name == "data-dependent") return BoundFamily::Theorem1;
  throw InvalidArgument("unknown bound family '" + std::string(name) + "'");
}

KlNats kl_uniform_posterior(std::span<const double> log_priors) {
  require(!log_priors.empty(), "kl_uniform_posterior needs at least one log prior");
  // Neumaier summation; inputs span many orders of magnitude in practice.
  double sum = 0.0;
  double carry = 0.0;
  for (double lp : log_priors) {
    if (!std::isfinite(lp)) throw InvalidArgument("log prior must be finite, got " + std::to_string(lp));
    const double t = sum + lp;
    if (std::fabs(sum) >= std::fabs(lp)) {
      carry += (sum - t) + lp;
    } else {
      carry += (lp - t) + sum;
    }
    sum = t;
  }
  const double k = static_cast<double>(log_priors.size());
  KlNats out;
  out.value = -std::log(k) - (sum + carry) / k;
  out.negative_input_warning = out.value < 0.0;
  return out;
}

BoundValue mcallester_bound(const BoundInputs& in) {
  check_common(in);
  check_sample_size(in);
  const double m = static_cast<double>(in.m);
  const double radicand = (in.kl.value + std::log(m / in.delta)) / (2.0 * m);
  require(radicand >= 0.0, "negative radicand: kl too negative for log(m/delta)");
  return make_value(BoundFamily::McAllester, in, std::sqrt(radicand));
}

BoundValue tolstikhin_seldin_bound(const BoundInputs& in) {
  check_common(in);
  check_sample_size(in);
  const double m = static_cast<double>(in.m);
  const double complexity = (in.kl.value + std::log(2.0 * std::sqrt(m) / in.delta)) / m;
  require(complexity >= 0.0, "negative radicand: kl too negative for log(2 sqrt(m)/delta)");
  const double gap = std::sqrt(2.0 * in.emp_risk * complexity) + 2.0 * complexity;
  return make_value(BoundFamily::TolstikhinSeldin, in, gap);
}

double theorem1_expected_gap(double sigma, std::int64_t n, std::int64_t m_prior, const KlNats& kl) {
  require(std::isfinite(sigma) && sigma > 0.0, "sigma must be positive");
  require(m_prior >= 0, "m_prior must be nonnegative");
  if (n <= m_prior) {
    throw InvalidArgument("n must exceed m_prior (n=" + std::to_string(n) + ", m_prior=" + std::to_string(m_prior) +
                          ")");
  }
  require(std::isfinite(kl.value) && kl.value >= 0.0, "theorem1 requires kl >= 0");
  return std::sqrt(2.0 * sigma * sigma / static_cast<double>(n - m_prior) * kl.value);
}

BoundValue theorem1_bound(const BoundInputs& in) {
  check_common(in);
  require(std::isfinite(in.eta) && in.eta > 0.0 && in.eta < 1.0, "eta must lie in (0, 1)");
  const double gap = theorem1_expected_gap(in.sigma, in.n, in.m_prior, in.kl) / in.eta;
  return make_value(BoundFamily::Theorem1, in, gap);
}

BoundValue compute_bound(BoundFamily family, const BoundInputs& inputs) {
  switch (family) {
    case BoundFamily::McAllester:
      return mcallester_bound(inputs);
    case BoundFamily::TolstikhinSeldin:
      return tolstikhin_seldin_bound(inputs);
    case BoundFamily::Theorem1:
      return theorem1_bound(inputs);
  }
  throw InvalidArgument("unknown bound family");
}

BoundValue n_adjusted_bound(const BoundInputs& inputs, std::int64_t n_max, BoundFamily family) {
  require(n_max >= 1, "n_max must be positive");
  BoundInputs adjusted = inputs;
  if (family == BoundFamily::Theorem1) {
    require(n_max >= inputs.n, "n_max must be at least the original n");
    adjusted.n = n_max;
  } else {
    require(n_max >= inputs.m, "n_max must be at least the original m");
    adjusted.m = n_max;
  }
  BoundValue out = compute_bound(family, adjusted);
  out.n_adjusted = true;
  return out;
}

}  // namespace promptbound
