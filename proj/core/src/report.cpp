// SPDX-License-Identifier: Apache-2.0
#include "promptbound/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "promptbound/error.hpp"

namespace promptbound {
namespace {

std::string fmt3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt3(*v) : "-"; }

std::string prior_label(const RunLog& log) {
  const auto& obj = log.config.value("objective", nlohmann::json::object());
  const auto prior = obj.value("prior", nlohmann::json::object());
  const std::string label = prior.value("label", std::string{});
  if (!label.empty()) return label;
  return prior.value("meta_prompt", std::string{}).empty() ? "empty" : "custom";
}

bool accuracy_objective(const RunLog& log) {
  const auto& obj = log.config.value("objective", nlohmann::json::object());
  return obj.value("kind", std::string("bound")) == "accuracy";
}

std::int64_t sample_size(const BoundValue& b) {
  return b.family == BoundFamily::Theorem1 ? b.inputs.n : b.inputs.m;
}

ReportRow make_row(const CandidateEntry& c, std::string method, std::string prior, std::optional<double> test) {
  ReportRow row;
  row.method = std::move(method);
  row.prior = std::move(prior);
  row.prompt_id = c.prompt_id;
  row.train_error = c.stats.emp_risk;
  row.log_lik = c.log_lik.value;
  row.test_error = test;
  row.bound = c.bound;
  return row;
}

}  // namespace

Report build_report(std::span<const RunLog> logs) {
  Report report;
  for (const auto& log : logs) {
    if (!log.final) throw InvalidArgument("run log " + log.run_id + " has no final entry");
    const std::string prior = prior_label(log);
    const CandidateEntry* seed = log.find_candidate(log.final->seed_id);
    if (seed == nullptr) throw InvalidArgument("run log " + log.run_id + " does not contain its seed prompt");
    const bool seen = std::any_of(report.rows.begin(), report.rows.end(), [&](const ReportRow& r) {
      return r.method == "handcrafted" && r.prompt_id == seed->prompt_id && r.prior == prior;
    });
    if (!seen) report.rows.push_back(make_row(*seed, "handcrafted", prior, log.final->seed_test_error));
    if (!log.final->best_id.empty() && log.final->best_id != log.final->seed_id) {
      const CandidateEntry* best = log.find_candidate(log.final->best_id);
      if (best == nullptr) throw InvalidArgument("run log " + log.run_id + " does not contain its best prompt");
      report.rows.push_back(make_row(*best, accuracy_objective(log) ? "optimized (acc)" : "optimized", prior,
                                     log.final->best_test_error));
    }
  }
  for (const auto& row : report.rows) {
    if (row.bound) report.n_max = std::max(report.n_max, sample_size(*row.bound));
  }
  for (auto& row : report.rows) {
    if (row.bound) row.bound_n_adjusted = n_adjusted_bound(row.bound->inputs, report.n_max, row.bound->family);
  }
  return report;
}

std::string Report::to_text() const {
  std::vector<std::vector<std::string>> cells;
  cells.emplace_back(std::begin(kColumns), std::end(kColumns));
  for (const auto& r : rows) {
    cells.push_back({r.method, r.prior, fmt3(r.train_error), fmt3(r.log_lik), fmt_opt(r.test_error),
                     r.bound ? fmt3(r.bound->bound) : "-",
                     r.bound_n_adjusted ? fmt3(r.bound_n_adjusted->bound) : "-"});
  }
  std::vector<std::size_t> widths(cells[0].size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) widths[i] = std::max(widths[i], line[i].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& line) {
    out << '|';
    for (std::size_t i = 0; i < line.size(); ++i) {
      out << ' ' << line[i] << std::string(widths[i] - line[i].size(), ' ') << " |";
    }
    out << '\n';
  };
  emit(cells[0]);
  out << '|';
  for (std::size_t w : widths) out << std::string(w + 2, '-') << '|';
  out << '\n';
  for (std::size_t i = 1; i < cells.size(); ++i) emit(cells[i]);
  return out.str();
}

nlohmann::json Report::to_json() const {
  nlohmann::json out_rows = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j = {{"method", r.method},
                        {"prior", r.prior},
                        {"prompt_id", r.prompt_id},
                        {"train_error", r.train_error},
                        {"log_lik", r.log_lik}};
    j["test_error"] = r.test_error ? nlohmann::json(*r.test_error) : nlohmann::json(nullptr);
    j["bound"] = r.bound ? promptbound::to_json(*r.bound) : nlohmann::json(nullptr);
    j["bound_n_adjusted"] = r.bound_n_adjusted ? promptbound::to_json(*r.bound_n_adjusted) : nlohmann::json(nullptr);
    out_rows.push_back(std::move(j));
  }
  return {{"columns", std::vector<std::string>(std::begin(kColumns), std::end(kColumns))},
          {"n_max", n_max},
          {"rows", std::move(out_rows)}};
}

}  // namespace promptbound
