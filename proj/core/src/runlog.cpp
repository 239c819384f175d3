// SPDX-License-Identifier: Apache-2.0
#include "promptbound/runlog.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "promptbound/error.hpp"

namespace promptbound {
namespace {

// JSON has no infinity; unscorable objectives are stored as null.
nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double number_or_inf(const nlohmann::json& v) {
  return v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
}

nlohmann::json to_json(const CandidateEntry& c) {
  nlohmann::json doc = {{"prompt_id", c.prompt_id},
                        {"text", c.text},
                        {"origin", c.origin},
                        {"parent_id", c.parent_id},
                        {"log_lik", to_json(c.log_lik)},
                        {"stats", to_json(c.stats)},
                        {"objective", finite_or_null(c.objective)}};
  doc["bound"] = c.bound ? to_json(*c.bound) : nlohmann::json(nullptr);
  if (!c.note.empty()) doc["note"] = c.note;
  return doc;
}

CandidateEntry candidate_from_json(const nlohmann::json& doc) {
  CandidateEntry c;
  c.prompt_id = doc.at("prompt_id").get<std::string>();
  c.text = doc.at("text").get<std::string>();
  c.origin = doc.value("origin", std::string{});
  c.parent_id = doc.value("parent_id", std::string{});
  c.log_lik = log_lik_from_json(doc.at("log_lik"));
  c.stats = candidate_stats_from_json(doc.at("stats"));
  c.objective = number_or_inf(doc.at("objective"));
  if (!doc.at("bound").is_null()) c.bound = bound_value_from_json(doc.at("bound"));
  c.note = doc.value("note", std::string{});
  return c;
}

}  // namespace

nlohmann::json to_json(const KlNats& kl) {
  return {{"value", kl.value}, {"negative_input_warning", kl.negative_input_warning}};
}

nlohmann::json to_json(const BoundInputs& in) {
  return {{"emp_risk", in.emp_risk}, {"kl", to_json(in.kl)}, {"m", in.m},          {"n", in.n},
          {"m_prior", in.m_prior},   {"delta", in.delta},    {"sigma", in.sigma}, {"eta", in.eta}};
}

nlohmann::json to_json(const BoundValue& v) {
  return {{"bound", v.bound},
          {"family", std::string(to_string(v.family))},
          {"inputs", to_json(v.inputs)},
          {"gap_term", v.gap_term},
          {"n_adjusted", v.n_adjusted}};
}

nlohmann::json to_json(const LogLik& v) {
  return {{"value", v.value}, {"token_count", v.token_count}, {"backend_id", v.backend_id}};
}

KlNats kl_from_json(const nlohmann::json& doc) {
  return {doc.at("value").get<double>(), doc.value("negative_input_warning", false)};
}

BoundInputs bound_inputs_from_json(const nlohmann::json& doc) {
  BoundInputs in;
  in.emp_risk = doc.at("emp_risk").get<double>();
  in.kl = kl_from_json(doc.at("kl"));
  in.m = doc.at("m").get<std::int64_t>();
  in.n = doc.at("n").get<std::int64_t>();
  in.m_prior = doc.at("m_prior").get<std::int64_t>();
  in.delta = doc.at("delta").get<double>();
  in.sigma = doc.at("sigma").get<double>();
  in.eta = doc.at("eta").get<double>();
  return in;
}

BoundValue bound_value_from_json(const nlohmann::json& doc) {
  BoundValue v;
  v.bound = doc.at("bound").get<double>();
  v.family = parse_bound_family(doc.at("family").get<std::string>());
  v.inputs = bound_inputs_from_json(doc.at("inputs"));
  v.gap_term = doc.at("gap_term").get<double>();
  v.n_adjusted = doc.value("n_adjusted", false);
  return v;
}

LogLik log_lik_from_json(const nlohmann::json& doc) {
  return {doc.at("value").get<double>(), doc.value("token_count", std::int64_t{0}),
          doc.value("backend_id", std::string{})};
}

const CandidateEntry* RunLog::find_candidate(const std::string& prompt_id) const {
  for (const auto& step : steps) {
    for (const auto& c : step.candidates) {
      if (c.prompt_id == prompt_id) return &c;
    }
  }
  return nullptr;
}

nlohmann::json header_line(const RunLog& log) {
  return {{"type", "header"}, {"run_id", log.run_id}, {"config", log.config}};
}

nlohmann::json eval_line(std::size_t step, const EvalRecord& record) {
  return {{"type", "eval"}, {"step", step}, {"record", to_json(record)}};
}

nlohmann::json step_line(const StepEntry& s) {
  nlohmann::json candidates = nlohmann::json::array();
  for (const auto& c : s.candidates) candidates.push_back(to_json(c));
  return {{"type", "step"},
          {"step", s.step},
          {"source_id", s.source_id},
          {"candidates", std::move(candidates)},
          {"selected_id", s.selected_id},
          {"incumbent_id", s.incumbent_id},
          {"best_so_far", finite_or_null(s.best_so_far)},
          {"improved", s.improved},
          {"stagnant", s.stagnant},
          {"no_proposals", s.no_proposals}};
}

nlohmann::json final_line(const FinalEntry& f) {
  nlohmann::json doc = {{"type", "final"},    {"status", f.status},   {"seed_id", f.seed_id},
                        {"best_id", f.best_id}, {"test_size", f.test_size}};
  doc["seed_test_error"] = f.seed_test_error ? nlohmann::json(*f.seed_test_error) : nlohmann::json(nullptr);
  doc["best_test_error"] = f.best_test_error ? nlohmann::json(*f.best_test_error) : nlohmann::json(nullptr);
  if (!f.error.empty()) doc["error"] = f.error;
  return doc;
}

std::vector<nlohmann::json> RunLog::lines() const {
  std::vector<nlohmann::json> out;
  out.push_back(header_line(*this));
  for (const auto& s : steps) {
    for (const auto& r : s.records) out.push_back(eval_line(s.step, r));
    out.push_back(step_line(s));
  }
  if (final) out.push_back(final_line(*final));
  return out;
}

std::string RunLog::to_jsonl() const {
  std::string out;
  for (const auto& line : lines()) {
    out += line.dump();
    out += '\n';
  }
  return out;
}

RunLog RunLog::from_jsonl(std::string_view text) {
  RunLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<EvalRecord> pending;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded()) throw InvalidArgument("runlog line " + std::to_string(line_no) + " is not JSON");
    const auto type = doc.value("type", std::string{});
    if (type == "header") {
      log.run_id = doc.value("run_id", std::string{});
      log.config = doc.value("config", nlohmann::json::object());
    } else if (type == "eval") {
      pending.push_back(eval_record_from_json(doc.at("record")));
    } else if (type == "step") {
      StepEntry s;
      s.step = doc.at("step").get<std::size_t>();
      s.source_id = doc.value("source_id", std::string{});
      for (const auto& c : doc.at("candidates")) s.candidates.push_back(candidate_from_json(c));
      s.records = std::move(pending);
      pending.clear();
      s.selected_id = doc.value("selected_id", std::string{});
      s.incumbent_id = doc.value("incumbent_id", std::string{});
      s.best_so_far = number_or_inf(doc.at("best_so_far"));
      s.improved = doc.value("improved", false);
      s.stagnant = doc.value("stagnant", false);
      s.no_proposals = doc.value("no_proposals", false);
      log.steps.push_back(std::move(s));
    } else if (type == "final") {
      FinalEntry f;
      f.status = doc.value("status", std::string{"completed"});
      f.error = doc.value("error", std::string{});
      f.seed_id = doc.value("seed_id", std::string{});
      f.best_id = doc.value("best_id", std::string{});
      f.test_size = doc.value("test_size", std::size_t{0});
      if (!doc["seed_test_error"].is_null()) f.seed_test_error = doc["seed_test_error"].get<double>();
      if (!doc["best_test_error"].is_null()) f.best_test_error = doc["best_test_error"].get<double>();
      log.final = std::move(f);
    } else {
      throw InvalidArgument("runlog line " + std::to_string(line_no) + " has unknown type '" + type + "'");
    }
  }
  return log;
}

RunLog RunLog::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open runlog '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_jsonl(buffer.str());
}

void RunLog::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write runlog '" + path + "'");
  out << to_jsonl();
}

std::vector<ReplayMismatch> replay_bounds(const RunLog& log) {
  std::vector<ReplayMismatch> out;
  for (const auto& step : log.steps) {
    for (const auto& c : step.candidates) {
      if (!c.bound) continue;
      const BoundValue& logged = *c.bound;
      BoundValue again;
      try {
        again = compute_bound(logged.family, logged.inputs);
      } catch (const std::exception& e) {
        out.push_back({step.step, c.prompt_id, std::string("recompute failed: ") + e.what()});
        continue;
      }
      if (again.bound != logged.bound || again.gap_term != logged.gap_term) {
        out.push_back({step.step, c.prompt_id, "bound differs from recomputation"});
      }
      const auto k = log.config.contains("objective") ? log.config["objective"].value("k", 1) : 1;
      if (k == 1) {
        if (logged.inputs.kl.value != KlNats::from_log_likelihood(c.log_lik.value).value) {
          out.push_back({step.step, c.prompt_id, "kl does not match logged log-likelihood"});
        }
        if (logged.inputs.emp_risk != c.stats.emp_risk ||
            logged.inputs.m != static_cast<std::int64_t>(c.stats.n_evaluated)) {
          out.push_back({step.step, c.prompt_id, "emp_risk/m do not match logged stats"});
        }
      }
    }
  }
  return out;
}

std::vector<double> best_so_far_trace(const RunLog& log) {
  std::vector<double> out;
  out.reserve(log.steps.size());
  for (const auto& s : log.steps) out.push_back(s.best_so_far);
  return out;
}

}  // namespace promptbound
