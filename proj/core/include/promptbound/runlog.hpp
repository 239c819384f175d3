// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptbound/bounds.hpp"
#include "promptbound/evaluator.hpp"
#include "promptbound/lm_backend.hpp"

namespace promptbound {

nlohmann::json to_json(const KlNats& kl);
nlohmann::json to_json(const BoundInputs& inputs);
nlohmann::json to_json(const BoundValue& value);
nlohmann::json to_json(const LogLik& value);
KlNats kl_from_json(const nlohmann::json& doc);
BoundInputs bound_inputs_from_json(const nlohmann::json& doc);
BoundValue bound_value_from_json(const nlohmann::json& doc);
LogLik log_lik_from_json(const nlohmann::json& doc);

/// One scored candidate within a step.
struct CandidateEntry {
  std::string prompt_id;
  std::string text;
  std::string origin;
  std::string parent_id;
  LogLik log_lik;
  CandidateStats stats;
  std::optional<BoundValue> bound;
  /// Value the search minimizes; +inf when the candidate could not be scored.
  double objective = 0.0;
  std::string note;
};

struct StepEntry {
  std::size_t step = 0;
  std::string source_id;
  std::vector<CandidateEntry> candidates;
  std::vector<EvalRecord> records;
  /// Best candidate of this step (empty when there were none).
  std::string selected_id;
  std::string incumbent_id;
  double best_so_far = 0.0;
  bool improved = false;
  /// No improvement this step (includes steps with no novel proposals).
  bool stagnant = false;
  bool no_proposals = false;
};

struct FinalEntry {
  std::string status = "completed";
  std::string error;
  std::string seed_id;
  std::string best_id;
  std::optional<double> seed_test_error;
  std::optional<double> best_test_error;
  std::size_t test_size = 0;
};

/// Append-only record of an optimization run. Serialized as JSONL with one
/// header line, one line per EvalRecord, one line per step and a final line.
struct RunLog {
  std::string run_id;
  nlohmann::json config;
  std::vector<StepEntry> steps;
  std::optional<FinalEntry> final;

  const CandidateEntry* find_candidate(const std::string& prompt_id) const;

  std::vector<nlohmann::json> lines() const;
  std::string to_jsonl() const;
  static RunLog from_jsonl(std::string_view text);
  static RunLog load(const std::string& path);
  void save(const std::string& path) const;
};

nlohmann::json header_line(const RunLog& log);
nlohmann::json step_line(const StepEntry& step);
nlohmann::json eval_line(std::size_t step, const EvalRecord& record);
nlohmann::json final_line(const FinalEntry& final);

using RunLogSink = std::function<void(const nlohmann::json& line)>;

struct ReplayMismatch {
  std::size_t step = 0;
  std::string prompt_id;
  std::string reason;
};

/// Recomputes every logged BoundValue from its logged inputs and checks it is
/// bit-identical; for single-prompt posteriors also checks the inputs agree
/// with the logged log-likelihood and stats.
std::vector<ReplayMismatch> replay_bounds(const RunLog& log);

/// Best-so-far objective after each step, from the log alone.
std::vector<double> best_so_far_trace(const RunLog& log);

}  // namespace promptbound
