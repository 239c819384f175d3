// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptbound/bounds.hpp"
#include "promptbound/runlog.hpp"

namespace promptbound {

struct ReportRow {
  std::string method;
  std::string prior;
  std::string prompt_id;
  double train_error = 0.0;
  double log_lik = 0.0;
  std::optional<double> test_error;
  std::optional<BoundValue> bound;
  std::optional<BoundValue> bound_n_adjusted;
};

struct Report {
  static constexpr const char* kColumns[] = {"Prompting Method", "Prior", "Train Error", "Log-lik.",
                                             "Test Error", "Bound", "Bound (n-adj)"};

  std::vector<ReportRow> rows;
  /// Largest sample size across rows; the n-adjusted column uses it.
  std::int64_t n_max = 0;

  /// Pipe-separated table with 3-decimal numbers; byte-stable for fixed input.
  std::string to_text() const;
  nlohmann::json to_json() const;
};

/// One "handcrafted" row for each run's seed prompt (deduplicated across runs)
/// and one row for each run's best prompt when it differs from the seed.
Report build_report(std::span<const RunLog> logs);

}  // namespace promptbound
