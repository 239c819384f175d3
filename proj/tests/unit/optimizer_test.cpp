// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fixture_backends.hpp"
#include "oracle.hpp"
#include "promptbound/error.hpp"
#include "promptbound/optimizer.hpp"

using namespace promptbound;

namespace {

// Proposer over a fixed graph: each text maps to its children.
class GraphProposer final : public EditProposer {
 public:
  explicit GraphProposer(std::map<std::string, std::vector<std::string>> edges) : edges_(std::move(edges)) {}
  std::string name() const override { return "graph"; }
  std::vector<Prompt> propose(const Prompt& source, std::span<const FailureExample>, std::size_t width,
                              std::uint64_t) const override {
    std::vector<Prompt> out;
    auto it = edges_.find(source.text());
    if (it == edges_.end()) return out;
    for (const auto& t : it->second) {
      if (out.size() == width) break;
      out.emplace_back(t, "graph", source.id());
    }
    return out;
  }

 private:
  std::map<std::string, std::vector<std::string>> edges_;
};

StubBackend length_scorer() {
  StubBackend s("length_scorer");
  s.set_score_fn([](std::string_view, std::string_view target) { return -0.05 * static_cast<double>(target.size()); });
  return s;
}

struct Fixture {
  LabeledDataset data = fixtures::indexed_dataset(200);
  SplitPlan split = make_split(data, 0, 1);
  std::shared_ptr<StubBackend> classifier = fixtures::nested_risk_classifier(
      {{"seed", 0.5}, {"a", 0.4}, {"b", 0.45}, {"aa", 0.2}, {"ab", 0.3}, {"aaa", 0.1}}, 200);
  StubBackend scorer = length_scorer();
  GraphProposer proposer{{{"seed", {"a", "b"}}, {"a", {"aa", "ab"}}, {"aa", {"aaa"}}}};

  OptimizeInputs inputs() const { return {data, split, *classifier, scorer, proposer, Prompt("seed"), nullptr}; }
};

OptimizerConfig small_config(std::size_t steps) {
  OptimizerConfig c;
  c.steps = steps;
  c.budget_per_step = 400;
  c.width = 4;
  c.seed = 7;
  return c;
}

Objective ts_objective() {
  Objective o;
  o.family = BoundFamily::TolstikhinSeldin;
  return o;
}

}  // namespace

TEST(ScoreObjective, SingleMemberMatchesOracle) {
  Objective o;
  o.family = BoundFamily::McAllester;
  const PosteriorMember m{-7.0, 0.131, 160};
  const auto s = score_objective(std::span(&m, 1), o);
  ASSERT_TRUE(s.bound.has_value());
  EXPECT_NEAR(s.value, 0.34296814993817373, 1e-13);
  EXPECT_LT(oracle::rel_error(s.value, oracle::mcallester(0.131, 7.0, 160, 0.1)), 1e-12);
}

TEST(ScoreObjective, UniformPosteriorOverTwoPrompts) {
  Objective o;
  o.family = BoundFamily::McAllester;
  o.k = 2;
  const std::vector<PosteriorMember> members{{-7.0, 0.131, 160}, {-5.0, 0.131, 160}};
  const auto s = score_objective(members, o);
  EXPECT_NEAR(s.value, 0.33009648828887533, 1e-13);
  EXPECT_NEAR(s.bound->inputs.kl.value, 6.0 - std::log(2.0), 1e-12);
  EXPECT_LT(s.value, 0.34296814993817373);
}

TEST(ScoreObjective, PosteriorUsesMeanRiskAndSmallestSample) {
  Objective o;
  const std::vector<PosteriorMember> members{{-3.0, 0.1, 100}, {-4.0, 0.3, 60}};
  const BoundInputs in = posterior_bound_inputs(members, o, {});
  EXPECT_DOUBLE_EQ(in.emp_risk, 0.2);
  EXPECT_EQ(in.m, 60);
}

TEST(ScoreObjective, AccuracyKindMinimizesRiskButKeepsBound) {
  Objective o;
  o.kind = ObjectiveKind::Accuracy;
  const PosteriorMember m{-40.0, 0.25, 80};
  const auto s = score_objective(std::span(&m, 1), o);
  EXPECT_DOUBLE_EQ(s.value, 0.25);
  ASSERT_TRUE(s.bound.has_value());
  EXPECT_GT(s.bound->bound, 0.25);
}

TEST(ScoreObjective, Theorem1SampleSizeFollowsEvalPolicy) {
  Objective o;
  o.family = BoundFamily::Theorem1;
  const PosteriorMember m{-5.0, 0.2, 90};
  const auto full = posterior_bound_inputs(std::span(&m, 1), o, {10, EvalPolicy::FullSample});
  EXPECT_EQ(full.n, 90);
  const auto excl = posterior_bound_inputs(std::span(&m, 1), o, {10, EvalPolicy::ExcludePriorSubset});
  EXPECT_EQ(excl.n, 100);
  const auto s = score_objective(std::span(&m, 1), o, {10, EvalPolicy::ExcludePriorSubset});
  EXPECT_LT(oracle::rel_error(s.value, oracle::theorem1(0.2, 0.5, 100, 10, 5.0, 0.5)), 1e-12);
}

TEST(ScoreObjective, RejectsUnevaluatedCandidate) {
  Objective o;
  const PosteriorMember m{-5.0, 0.0, 0};
  EXPECT_THROW(score_objective(std::span(&m, 1), o), InvalidArgument);
  EXPECT_THROW(score_objective(std::span<const PosteriorMember>{}, o), InvalidArgument);
}

TEST(ScoreObjective, CandidateOverloadScoresUnderPrior) {
  StubBackend scorer;
  scorer.set_log_likelihood("meta", "Is it?", -6.0);
  Objective o;
  o.family = BoundFamily::McAllester;
  o.prior.meta_prompt = "meta";
  CandidateStats stats;
  stats.n_evaluated = 100;
  stats.emp_risk = 0.2;
  const auto s = score_objective(Prompt("Is it?"), stats, o, scorer);
  EXPECT_LT(oracle::rel_error(s.value, oracle::mcallester(0.2, 6.0, 100, 0.1)), 1e-12);
  // A cached log-likelihood is used without touching the scorer.
  StubBackend empty;
  const auto cached = score_objective(Prompt("Is it?").with_log_lik({-6.0, 3, "x"}), stats, o, empty);
  EXPECT_EQ(cached.value, s.value);
}

TEST(ObjectiveJson, RoundTripAndDefaults) {
  Objective o;
  o.kind = ObjectiveKind::Accuracy;
  o.family = BoundFamily::Theorem1;
  o.k = 3;
  o.prior = {"meta", "ngram", "informative"};
  const Objective back = Objective::from_json(o.to_json());
  EXPECT_EQ(back.to_json(), o.to_json());
  EXPECT_EQ(Objective::from_json(nlohmann::json::object()).prior.label, "empty");
  EXPECT_THROW(Objective::from_json({{"k", 0}}), InvalidArgument);
}

TEST(Optimize, ZeroStepsEvaluatesOnlySeed) {
  Fixture f;
  const RunLog log = optimize(f.inputs(), ts_objective(), small_config(0));
  ASSERT_EQ(log.steps.size(), 1u);
  ASSERT_TRUE(log.final.has_value());
  EXPECT_EQ(log.final->status, "completed");
  EXPECT_EQ(log.final->best_id, Prompt("seed").id());
  EXPECT_EQ(log.steps[0].candidates.size(), 1u);
  EXPECT_EQ(log.steps[0].candidates[0].stats.n_evaluated, 200u);
}

TEST(Optimize, BestSoFarIsMonotoneAndFindsBestPrompt) {
  Fixture f;
  const RunLog log = optimize(f.inputs(), ts_objective(), small_config(6));
  ASSERT_EQ(log.final->status, "completed");
  const auto trace = best_so_far_trace(log);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]);
  EXPECT_EQ(log.final->best_id, Prompt("aaa").id());
  EXPECT_TRUE(replay_bounds(log).empty());
}

TEST(Optimize, ExhaustedGraphYieldsStagnantSteps) {
  Fixture f;
  const RunLog log = optimize(f.inputs(), ts_objective(), small_config(8));
  ASSERT_EQ(log.steps.size(), 9u);
  EXPECT_TRUE(log.steps.back().no_proposals);
  EXPECT_TRUE(log.steps.back().stagnant);
  EXPECT_EQ(log.steps.back().incumbent_id, Prompt("aaa").id());
}

TEST(Optimize, EarlyStopAfterStagnantSteps) {
  Fixture f;
  auto config = small_config(50);
  config.early_stop_stagnant = 2;
  const RunLog log = optimize(f.inputs(), ts_objective(), config);
  EXPECT_LT(log.steps.size(), 51u);
  EXPECT_TRUE(log.steps[log.steps.size() - 1].stagnant);
  EXPECT_TRUE(log.steps[log.steps.size() - 2].stagnant);
}

TEST(Optimize, EmptyProposerGivesNoProposalSteps) {
  Fixture f;
  const GraphProposer none({});
  OptimizeInputs in{f.data, f.split, *f.classifier, f.scorer, none, Prompt("seed"), nullptr};
  const RunLog log = optimize(in, ts_objective(), small_config(3));
  ASSERT_EQ(log.steps.size(), 4u);
  for (std::size_t s = 1; s < 4; ++s) {
    EXPECT_TRUE(log.steps[s].no_proposals);
    EXPECT_TRUE(log.steps[s].candidates.empty());
  }
  EXPECT_EQ(log.final->best_id, Prompt("seed").id());
}

TEST(Optimize, DeterministicForFixedSeed) {
  Fixture f;
  const std::string a = optimize(f.inputs(), ts_objective(), small_config(5)).to_jsonl();
  const std::string b = optimize(f.inputs(), ts_objective(), small_config(5)).to_jsonl();
  EXPECT_EQ(a, b);
}

TEST(Optimize, SinkReceivesEveryLine) {
  Fixture f;
  std::vector<nlohmann::json> lines;
  const RunLog log =
      optimize(f.inputs(), ts_objective(), small_config(2), {{"name", "t"}}, [&](const auto& l) { lines.push_back(l); });
  EXPECT_EQ(lines, log.lines());
  EXPECT_EQ(log.config["run"]["name"], "t");
  EXPECT_EQ(log.run_id.rfind("run-", 0), 0u);
}

TEST(Optimize, TestErrorReportedForSeedAndBest) {
  Fixture f;
  const LabeledDataset test = fixtures::indexed_dataset(200);
  OptimizeInputs in = f.inputs();
  in.test_set = &test;
  const RunLog log = optimize(in, ts_objective(), small_config(6));
  ASSERT_TRUE(log.final->seed_test_error.has_value());
  EXPECT_DOUBLE_EQ(*log.final->seed_test_error, 0.5);
  EXPECT_DOUBLE_EQ(*log.final->best_test_error, 0.1);
  EXPECT_EQ(log.final->test_size, 200u);
}

TEST(Optimize, HardBackendFailureClosesLogWithMarker) {
  Fixture f;
  StubBackend scorer("failing");
  scorer.set_score_fn([](std::string_view, std::string_view target) -> double {
    if (target == "b") throw std::runtime_error("scorer crashed");
    return -1.0;
  });
  OptimizeInputs in{f.data, f.split, *f.classifier, scorer, f.proposer, Prompt("seed"), nullptr};
  std::vector<nlohmann::json> lines;
  const RunLog log = optimize(in, ts_objective(), small_config(4), {}, [&](const auto& l) { lines.push_back(l); });
  ASSERT_TRUE(log.final.has_value());
  EXPECT_EQ(log.final->status, "failed");
  EXPECT_NE(log.final->error.find("scorer crashed"), std::string::npos);
  EXPECT_EQ(lines.back()["type"], "final");
  EXPECT_EQ(lines.back()["status"], "failed");
}

TEST(Optimize, AccuracyObjectivePrefersLowestRisk) {
  Fixture f;
  Objective o;
  o.kind = ObjectiveKind::Accuracy;
  const RunLog log = optimize(f.inputs(), o, small_config(6));
  EXPECT_EQ(log.final->best_id, Prompt("aaa").id());
  for (const auto& s : log.steps) {
    for (const auto& c : s.candidates) EXPECT_DOUBLE_EQ(c.objective, c.stats.emp_risk);
  }
}

TEST(Optimize, UniformPosteriorObjectiveIsReplayable) {
  Fixture f;
  Objective o = ts_objective();
  o.k = 2;
  const RunLog log = optimize(f.inputs(), o, small_config(4));
  EXPECT_EQ(log.final->status, "completed");
  EXPECT_TRUE(replay_bounds(log).empty());
}

TEST(OptimizePrior, StepsZeroReturnsSeed) {
  const std::vector<Prompt> targets{Prompt("target")};
  const OfflineMutationProposer proposer(MutationTable::default_meta_table());
  StubBackend scorer;
  scorer.set_score_fn([](std::string_view, std::string_view) { return -2.0; });
  PriorSearchConfig c;
  c.steps = 0;
  c.seed_meta_prompt = "start";
  const auto r = optimize_prior(targets, proposer, scorer, c);
  EXPECT_EQ(r.prior.meta_prompt, "start");
  EXPECT_EQ(r.prior.label, "optimized");
  EXPECT_DOUBLE_EQ(r.mean_log_lik, -2.0);
}

TEST(OptimizePrior, NeverWorseThanSeedAndMovesTowardTargets) {
  // log-lik = -|len(context) - len(target)|: meta-prompts approaching the
  // target length score higher.
  StubBackend scorer("length");
  scorer.set_score_fn([](std::string_view context, std::string_view target) {
    return -std::abs(static_cast<double>(context.size()) - static_cast<double>(target.size()));
  });
  const std::vector<Prompt> targets{Prompt(std::string(120, 'x')), Prompt(std::string(140, 'y'))};
  const OfflineMutationProposer proposer(MutationTable::default_meta_table());
  PriorSearchConfig c;
  c.steps = 10;
  c.seed = 3;
  const auto r = optimize_prior(targets, proposer, scorer, c);
  EXPECT_GE(r.mean_log_lik, r.seed_mean_log_lik);
  EXPECT_GT(r.mean_log_lik, r.seed_mean_log_lik);
  EXPECT_DOUBLE_EQ(r.mean_log_lik, mean_target_log_lik(targets, r.prior.meta_prompt, scorer));
  double prev = r.seed_mean_log_lik;
  for (const auto& s : r.steps) {
    EXPECT_GE(s.best_so_far, prev);
    prev = s.best_so_far;
  }
  EXPECT_EQ(r.to_json()["steps"].size(), 10u);
}
