// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "promptbound/error.hpp"
#include "promptbound/report.hpp"

using namespace promptbound;

namespace {

const std::string kFixtures = PROMPTBOUND_FIXTURE_DIR;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Set PROMPTBOUND_UPDATE_GOLDEN=1 to rewrite the golden files.
bool update_golden() { return std::getenv("PROMPTBOUND_UPDATE_GOLDEN") != nullptr; }

CandidateEntry candidate(const std::string& id, double log_lik, std::size_t n, std::size_t errors, BoundFamily family) {
  CandidateEntry c;
  c.prompt_id = id;
  c.text = "prompt " + id;
  c.log_lik = {log_lik, 5, "stub"};
  c.stats.prompt_id = id;
  c.stats.n_evaluated = n;
  c.stats.errors = errors;
  c.stats.emp_risk = static_cast<double>(errors) / static_cast<double>(n);
  BoundInputs in;
  in.emp_risk = c.stats.emp_risk;
  in.kl = KlNats::from_log_likelihood(log_lik);
  in.m = static_cast<std::int64_t>(n);
  in.n = in.m;
  c.bound = compute_bound(family, in);
  c.objective = c.bound->bound;
  return c;
}

RunLog run(const std::string& kind, const std::string& prior, std::vector<CandidateEntry> cands,
           std::optional<double> seed_test, std::optional<double> best_test) {
  RunLog log;
  log.run_id = "run-" + kind + "-" + prior;
  log.config = {{"objective", {{"kind", kind}, {"k", 1}, {"prior", {{"label", prior}}}}}};
  StepEntry s0;
  s0.candidates.push_back(cands.front());
  s0.selected_id = s0.incumbent_id = cands.front().prompt_id;
  s0.best_so_far = cands.front().objective;
  log.steps.push_back(s0);
  StepEntry s1;
  s1.step = 1;
  for (std::size_t i = 1; i < cands.size(); ++i) s1.candidates.push_back(cands[i]);
  s1.selected_id = s1.incumbent_id = cands.back().prompt_id;
  log.steps.push_back(s1);
  FinalEntry f;
  f.seed_id = cands.front().prompt_id;
  f.best_id = cands.back().prompt_id;
  f.seed_test_error = seed_test;
  f.best_test_error = best_test;
  f.test_size = 100;
  log.final = f;
  return log;
}

std::vector<RunLog> sample_runs() {
  const auto fam = BoundFamily::TolstikhinSeldin;
  return {run("bound", "empty", {candidate("seed", -9.5, 300, 150, fam), candidate("best", -20.0, 120, 30, fam)}, 0.49,
              0.21),
          run("bound", "optimized", {candidate("seed", -8.0, 300, 150, fam), candidate("best2", -14.0, 96, 26, fam)},
              0.49, 0.25),
          run("accuracy", "empty", {candidate("seed", -9.5, 300, 150, fam), candidate("acc", -60.0, 300, 45, fam)},
              0.49, 0.16)};
}

}  // namespace

TEST(Report, ColumnsAndRows) {
  const auto runs = sample_runs();
  const Report report = build_report(runs);
  ASSERT_EQ(report.rows.size(), 5u);
  EXPECT_EQ(report.rows[0].method, "handcrafted");
  EXPECT_EQ(report.rows[0].prior, "empty");
  EXPECT_EQ(report.rows[1].method, "optimized");
  EXPECT_EQ(report.rows[2].method, "handcrafted");
  EXPECT_EQ(report.rows[2].prior, "optimized");
  EXPECT_EQ(report.rows[3].method, "optimized");
  EXPECT_EQ(report.rows[4].method, "optimized (acc)");
  EXPECT_EQ(report.n_max, 300);
  const std::string text = report.to_text();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "| Prompting Method | Prior     | Train Error | Log-lik. | Test Error | Bound | Bound (n-adj) |");
  EXPECT_EQ(report.to_json()["columns"].size(), 7u);
}

TEST(Report, NAdjustedColumnUsesLargestSample) {
  const auto runs = sample_runs();
  const Report report = build_report(runs);
  for (const auto& row : report.rows) {
    ASSERT_TRUE(row.bound_n_adjusted.has_value());
    EXPECT_EQ(row.bound_n_adjusted->inputs.m, 300);
    EXPECT_EQ(row.bound_n_adjusted->inputs.emp_risk, row.train_error);
    EXPECT_LE(row.bound_n_adjusted->bound, row.bound->bound);
  }
  EXPECT_DOUBLE_EQ(report.rows[0].bound_n_adjusted->bound, report.rows[0].bound->bound);
}

TEST(Report, MissingPiecesAreErrors) {
  auto runs = sample_runs();
  runs[0].final.reset();
  EXPECT_THROW(build_report(std::span(runs.data(), 1)), InvalidArgument);
  runs = sample_runs();
  runs[0].final->best_id = "nowhere";
  EXPECT_THROW(build_report(std::span(runs.data(), 1)), InvalidArgument);
}

TEST(Report, GoldenTextIsByteStable) {
  const std::string log_path = kFixtures + "/sample_runlog.jsonl";
  const std::string report_path = kFixtures + "/sample_report.txt";
  if (update_golden()) {
    std::ofstream(log_path, std::ios::binary) << sample_runs()[0].to_jsonl();
    const auto runs = sample_runs();
    std::ofstream(report_path, std::ios::binary) << build_report(runs).to_text();
  }
  const std::string golden_log = read_file(log_path);
  ASSERT_FALSE(golden_log.empty());
  const std::vector<RunLog> from_file{RunLog::from_jsonl(golden_log)};
  EXPECT_EQ(from_file[0].to_jsonl(), golden_log);
  const auto runs = sample_runs();
  const std::string text = build_report(runs).to_text();
  EXPECT_EQ(text, read_file(report_path));
  EXPECT_EQ(build_report(runs).to_text(), text);
}
