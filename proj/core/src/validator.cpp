// SPDX-License-Identifier: Apache-2.0
#include "promptbound/validator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "promptbound/error.hpp"
#include "promptbound/parallel.hpp"
#include "promptbound/random.hpp"

namespace promptbound {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidArgument(message);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// log(sum(exp(v))) without overflow.
double log_sum_exp(std::span<const double> v) {
  const double hi = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

}  // namespace

void SyntheticTask::validate() const {
  require(!weights.empty(), "synthetic task has an empty universe");
  require(weights.size() <= kMaxUniverse, "synthetic universe exceeds 1000 points");
  require(labels.size() == weights.size(), "labels and weights differ in size");
  require(!predictions.empty(), "synthetic task has no hypotheses");
  require(predictions.size() <= kMaxHypotheses, "synthetic task exceeds 10000 hypotheses");
  require(names.empty() || names.size() == predictions.size(), "names and hypotheses differ in size");
  double total = 0.0;
  for (double w : weights) {
    require(std::isfinite(w) && w >= 0.0, "universe weights must be finite and non-negative");
    total += w;
  }
  require(std::abs(total - 1.0) <= 1e-9, "universe weights must sum to 1");
  for (const auto& p : predictions) require(p.size() == weights.size(), "hypothesis does not cover the universe");
}

SyntheticTask SyntheticTask::random(std::size_t universe, std::size_t hypotheses, std::uint64_t seed,
                                    double min_error, double max_error) {
  require(universe >= 1 && hypotheses >= 1, "synthetic task needs a universe and hypotheses");
  require(0.0 <= min_error && min_error <= max_error && max_error <= 1.0, "error range must lie in [0,1]");
  Rng rng(mix_seed(seed, 0));
  SyntheticTask task;
  double total = 0.0;
  for (std::size_t x = 0; x < universe; ++x) {
    const double w = -std::log(1.0 - uniform_unit(rng));
    task.weights.push_back(w);
    total += w;
    task.labels.push_back(static_cast<std::uint8_t>(uniform_index(rng, 2)));
  }
  for (double& w : task.weights) w /= total;
  for (std::size_t h = 0; h < hypotheses; ++h) {
    const double rate =
        hypotheses == 1 ? min_error
                        : min_error + (max_error - min_error) * static_cast<double>(h) / static_cast<double>(hypotheses - 1);
    std::vector<std::uint8_t> pred(task.labels);
    for (std::size_t x = 0; x < universe; ++x) {
      if (uniform_unit(rng) < rate) pred[x] ^= 1;
    }
    task.predictions.push_back(std::move(pred));
    char name[16];
    std::snprintf(name, sizeof name, "h%03zu", h);
    task.names.emplace_back(name);
  }
  task.validate();
  return task;
}

double true_risk(const SyntheticTask& task, std::size_t hypothesis) {
  require(hypothesis < task.hypothesis_count(), "hypothesis index out of range");
  double r = 0.0;
  for (std::size_t x = 0; x < task.universe_size(); ++x) r += task.weights[x] * task.loss(hypothesis, x);
  return r;
}

double enumerated_expected_empirical_risk(const SyntheticTask& task, std::size_t hypothesis, std::size_t m) {
  require(hypothesis < task.hypothesis_count(), "hypothesis index out of range");
  require(m >= 1, "sample size must be >= 1");
  const std::size_t u = task.universe_size();
  std::vector<std::size_t> digits(m, 0);
  double expectation = 0.0;
  while (true) {
    double p = 1.0;
    std::size_t losses = 0;
    for (std::size_t x : digits) {
      p *= task.weights[x];
      losses += task.loss(hypothesis, x);
    }
    expectation += p * static_cast<double>(losses) / static_cast<double>(m);
    std::size_t i = 0;
    while (i < m && ++digits[i] == u) digits[i++] = 0;
    if (i == m) break;
  }
  return expectation;
}

std::vector<double> uniform_log_prior(const SyntheticTask& task) {
  return std::vector<double>(task.hypothesis_count(), -std::log(static_cast<double>(task.hypothesis_count())));
}

double CoverageReport::coverage_threshold() const {
  if (trials == 0) return 1.0 - delta;
  return 1.0 - delta - 3.0 * std::sqrt(delta * (1.0 - delta) / static_cast<double>(trials));
}

CoverageReport coverage_trial_suite(const SyntheticTask& task, BoundFamily family, std::span<const double> log_priors,
                                    std::size_t m, double delta, std::size_t trials, std::uint64_t seed,
                                    const CoverageOptions& options) {
  task.validate();
  require(trials >= 1, "trials must be >= 1");
  require(m >= 1, "sample size must be >= 1");
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
  require(log_priors.size() == task.hypothesis_count(), "one log-prior per hypothesis is required");
  for (double lp : log_priors) require(!std::isnan(lp) && lp <= 0.0, "log-priors must be <= 0");
  const double mass = std::exp(log_sum_exp(log_priors));
  require(mass <= 1.0 + 1e-9, "prior mass exceeds 1");
  const bool theorem1 = family == BoundFamily::Theorem1;
  if (theorem1) require(options.m_prior < m, "prior subset must be smaller than the sample");

  const std::size_t hyps = task.hypothesis_count();
  std::vector<double> risks(hyps);
  for (std::size_t h = 0; h < hyps; ++h) risks[h] = true_risk(task, h);
  std::vector<double> cdf(task.universe_size());
  std::partial_sum(task.weights.begin(), task.weights.end(), cdf.begin());

  std::vector<TrialRecord> records(trials);
  std::vector<double> abs_gaps(trials, 0.0);
  parallel_for(trials, options.workers, [&](std::size_t t) {
    Rng rng(mix_seed(seed, t));
    TrialRecord rec;
    rec.trial = t;
    rec.sample.resize(m);
    for (auto& x : rec.sample) {
      const double u = uniform_unit(rng) * cdf.back();
      x = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      x = std::min(x, cdf.size() - 1);
    }

    std::vector<double> prior(log_priors.begin(), log_priors.end());
    if (theorem1 && options.m_prior > 0) {
      rec.prior_subset = sample_without_replacement(m, options.m_prior, rng);
      std::sort(rec.prior_subset.begin(), rec.prior_subset.end());
      std::vector<double> fit(hyps);
      for (std::size_t h = 0; h < hyps; ++h) {
        std::size_t errors = 0;
        for (std::size_t j : rec.prior_subset) errors += task.loss(h, rec.sample[j]);
        fit[h] = -options.prior_beta * static_cast<double>(errors);
      }
      const double norm = log_sum_exp(fit);
      for (std::size_t h = 0; h < hyps; ++h) {
        const double a = std::log(0.5) + log_priors[h];
        const double b = std::log(0.5) + fit[h] - norm;
        const double pair[2] = {a, b};
        prior[h] = log_sum_exp(pair);
      }
    }

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t h = 0; h < hyps; ++h) {
      if (!std::isfinite(prior[h])) continue;
      std::size_t losses = 0;
      for (std::size_t x : rec.sample) losses += task.loss(h, x);
      BoundInputs in;
      in.emp_risk = static_cast<double>(losses) / static_cast<double>(m);
      in.kl = KlNats{-prior[h], false};
      in.m = static_cast<std::int64_t>(m);
      in.n = static_cast<std::int64_t>(m);
      in.m_prior = theorem1 ? static_cast<std::int64_t>(options.m_prior) : 0;
      in.delta = delta;
      in.sigma = options.sigma;
      in.eta = options.eta;
      const double b = compute_bound(family, in).bound;
      if (b < best) {
        best = b;
        rec.selected = h;
        rec.emp_risk = in.emp_risk;
        rec.kl = in.kl.value;
      }
    }
    rec.bound = best;
    rec.true_risk = risks[rec.selected];
    rec.violated = rec.true_risk > rec.bound;
    abs_gaps[t] = std::abs(rec.true_risk - rec.emp_risk);
    if (!options.keep_samples) {
      rec.sample.clear();
      rec.prior_subset.clear();
    }
    records[t] = std::move(rec);
  });

  CoverageReport report;
  report.family = family;
  report.delta = delta;
  report.m = m;
  report.seed = seed;
  report.trials = trials;
  double slack = 0.0;
  double kl_sum = 0.0;
  for (const auto& r : records) {
    report.violations += r.violated ? 1 : 0;
    slack += r.bound - r.true_risk;
    kl_sum += r.kl;
  }
  report.coverage = 1.0 - static_cast<double>(report.violations) / static_cast<double>(trials);
  report.mean_slack = slack / static_cast<double>(trials);
  if (theorem1) {
    report.mean_abs_gap = std::accumulate(abs_gaps.begin(), abs_gaps.end(), 0.0) / static_cast<double>(trials);
    report.mean_kl = kl_sum / static_cast<double>(trials);
    report.expected_gap_bound = theorem1_expected_gap(options.sigma, static_cast<std::int64_t>(m),
                                                      static_cast<std::int64_t>(options.m_prior),
                                                      KlNats{*report.mean_kl, false});
  }
  report.records = std::move(records);
  return report;
}

nlohmann::json CoverageReport::to_json() const {
  nlohmann::json trials_json = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json j = {{"trial", r.trial},         {"selected", r.selected}, {"emp_risk", r.emp_risk},
                        {"true_risk", r.true_risk}, {"bound", r.bound},       {"kl", r.kl},
                        {"violated", r.violated}};
    if (!r.sample.empty()) j["sample"] = r.sample;
    if (!r.prior_subset.empty()) j["prior_subset"] = r.prior_subset;
    trials_json.push_back(std::move(j));
  }
  nlohmann::json out = {{"family", std::string(to_string(family))},
                        {"delta", delta},
                        {"m", m},
                        {"seed", seed},
                        {"trials", trials},
                        {"violations", violations},
                        {"coverage", coverage},
                        {"coverage_threshold", coverage_threshold()},
                        {"mean_slack", mean_slack},
                        {"records", std::move(trials_json)}};
  if (mean_abs_gap) {
    out["mean_abs_gap"] = *mean_abs_gap;
    out["mean_kl"] = *mean_kl;
    out["expected_gap_bound"] = *expected_gap_bound;
  }
  return out;
}

std::string CoverageReport::to_text() const {
  const CoverageReport* self = this;
  return coverage_table(std::span(self, 1));
}

std::string CoverageReport::to_csv() const {
  std::ostringstream out;
  out << "trial,selected,emp_risk,true_risk,bound,kl,violated\n";
  for (const auto& r : records) {
    out << r.trial << ',' << r.selected << ',' << fixed(r.emp_risk, 6) << ',' << fixed(r.true_risk, 6) << ','
        << fixed(r.bound, 6) << ',' << fixed(r.kl, 6) << ',' << (r.violated ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string coverage_table(std::span<const CoverageReport> reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %6s %5s %7s %10s %9s %9s %10s %s\n", "family", "delta", "m", "trials",
                "violations", "coverage", "threshold", "mean_slack", "gap (mean |R-R_S| / bound)");
  out << line;
  for (const auto& r : reports) {
    std::string gap = "-";
    if (r.mean_abs_gap) gap = fixed(*r.mean_abs_gap, 4) + " / " + fixed(*r.expected_gap_bound, 4);
    std::snprintf(line, sizeof line, "%-10s %6.3f %5zu %7zu %10zu %9.4f %9.4f %10.4f %s\n",
                  std::string(to_string(r.family)).c_str(), r.delta, r.m, r.trials, r.violations, r.coverage,
                  r.coverage_threshold(), r.mean_slack, gap.c_str());
    out << line;
  }
  return out.str();
}

}  // namespace promptbound
