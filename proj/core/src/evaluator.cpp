// SPDX-License-Identifier: Apache-2.0
#include "promptbound/evaluator.hpp"

#include <algorithm>
#include <optional>
#include <cctype>
#include <cmath>
#include <numeric>

#include "promptbound/error.hpp"
#include "promptbound/parallel.hpp"
#include "promptbound/random.hpp"

namespace promptbound {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

// Compares errors_a/n_a with errors_b/n_b exactly.
int compare_risk(const CandidateStats& a, const CandidateStats& b) {
  const auto lhs = static_cast<unsigned long long>(a.errors) * b.n_evaluated;
  const auto rhs = static_cast<unsigned long long>(b.errors) * a.n_evaluated;
  return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
}

}  // namespace

std::string_view to_string(ParsedAnswer answer) {
  switch (answer) {
    case ParsedAnswer::Positive:
      return "positive";
    case ParsedAnswer::Negative:
      return "negative";
    case ParsedAnswer::Unparseable:
      return "unparseable";
  }
  return "unparseable";
}

nlohmann::json to_json(const EvalRecord& r) {
  nlohmann::json doc = {{"prompt_id", r.prompt_id}, {"example_id", r.example_id}, {"raw_output", r.raw_output},
                        {"parsed", std::string(to_string(r.parsed))}, {"loss", r.loss}};
  if (!r.error.empty()) doc["error"] = r.error;
  return doc;
}

EvalRecord eval_record_from_json(const nlohmann::json& doc) {
  EvalRecord r;
  r.prompt_id = doc.at("prompt_id").get<std::string>();
  r.example_id = doc.at("example_id").get<std::string>();
  r.raw_output = doc.value("raw_output", std::string{});
  const auto parsed = doc.at("parsed").get<std::string>();
  r.parsed = parsed == "positive"   ? ParsedAnswer::Positive
             : parsed == "negative" ? ParsedAnswer::Negative
                                    : ParsedAnswer::Unparseable;
  r.loss = doc.at("loss").get<int>();
  r.error = doc.value("error", std::string{});
  return r;
}

ParsedAnswer AnswerParser::parse(std::string_view output) const {
  std::size_t i = 0;
  while (i < output.size() && !std::isalnum(static_cast<unsigned char>(output[i]))) ++i;
  std::size_t j = i;
  while (j < output.size() && std::isalnum(static_cast<unsigned char>(output[j]))) ++j;
  const std::string token = lower(output.substr(i, j - i));
  if (token.empty()) return ParsedAnswer::Unparseable;
  auto hit = [&](const std::vector<std::string>& aliases) {
    return std::any_of(aliases.begin(), aliases.end(), [&](const std::string& a) { return lower(a) == token; });
  };
  if (hit(positive)) return ParsedAnswer::Positive;
  if (hit(negative)) return ParsedAnswer::Negative;
  return ParsedAnswer::Unparseable;
}

std::string compose_query(std::string_view query_template, std::string_view prompt, std::string_view text) {
  std::string out(query_template);
  // Substitute {text} first so a prompt containing "{text}" is left alone.
  replace_all(out, "{text}", text);
  replace_all(out, "{prompt}", prompt);
  return out;
}

EvalRecord classify(const LanguageModelBackend& backend, const Prompt& prompt, const LabeledExample& example,
                    const ClassifyOptions& options) {
  EvalRecord record;
  record.prompt_id = prompt.id();
  record.example_id = example.id;
  try {
    record.raw_output = backend.generate(compose_query(options.query_template, prompt.text(), example.text));
    record.parsed = options.parser.parse(record.raw_output);
  } catch (const RetryableError& e) {
    record.parsed = ParsedAnswer::Unparseable;
    record.error = e.what();
  }
  const bool correct = (record.parsed == ParsedAnswer::Positive && example.label == Label::Positive) ||
                       (record.parsed == ParsedAnswer::Negative && example.label == Label::Negative);
  record.loss = correct ? 0 : 1;
  return record;
}

double empirical_risk(std::span<const EvalRecord> records) {
  if (records.empty()) throw InvalidArgument("empirical_risk needs at least one record");
  std::size_t losses = 0;
  for (const auto& r : records) losses += static_cast<std::size_t>(r.loss);
  return static_cast<double>(losses) / static_cast<double>(records.size());
}

nlohmann::json to_json(const CandidateStats& s) {
  return {{"prompt_id", s.prompt_id}, {"n_evaluated", s.n_evaluated}, {"errors", s.errors},
          {"emp_risk", s.emp_risk},   {"rounds", s.rounds},           {"eval_example_ids", s.eval_example_ids}};
}

CandidateStats candidate_stats_from_json(const nlohmann::json& doc) {
  CandidateStats s;
  s.prompt_id = doc.at("prompt_id").get<std::string>();
  s.n_evaluated = doc.at("n_evaluated").get<std::size_t>();
  s.errors = doc.at("errors").get<std::size_t>();
  s.emp_risk = doc.at("emp_risk").get<double>();
  s.rounds = doc.value("rounds", std::size_t{0});
  s.eval_example_ids = doc.value("eval_example_ids", std::vector<std::string>{});
  return s;
}

std::string_view to_string(AllocationPolicy policy) {
  return policy == AllocationPolicy::SuccessiveHalving ? "successive_halving" : "ucb";
}

AllocationPolicy parse_allocation_policy(std::string_view name) {
  if (name == "successive_halving") return AllocationPolicy::SuccessiveHalving;
  if (name == "ucb") return AllocationPolicy::Ucb;
  throw InvalidArgument("unknown allocation policy '" + std::string(name) + "'");
}

nlohmann::json AllocationConfig::to_json() const {
  return {{"policy", std::string(to_string(policy))}, {"batch", batch},      {"halving_factor", halving_factor},
          {"ucb_exploration", ucb_exploration},       {"workers", workers}};
}

AllocationConfig AllocationConfig::from_json(const nlohmann::json& doc) {
  AllocationConfig c;
  c.policy = parse_allocation_policy(doc.value("policy", std::string(to_string(c.policy))));
  c.batch = doc.value("batch", c.batch);
  c.halving_factor = doc.value("halving_factor", c.halving_factor);
  c.ucb_exploration = doc.value("ucb_exploration", c.ucb_exploration);
  c.workers = doc.value("workers", c.workers);
  return c;
}

bool ranks_before(const Prompt& a, const CandidateStats& sa, const Prompt& b, const CandidateStats& sb,
                  const TieBreakFn& tie_break) {
  if (int c = compare_risk(sa, sb); c != 0) return c < 0;
  if (tie_break) {
    const double ta = tie_break(a, sa);
    const double tb = tie_break(b, sb);
    if (ta != tb) return ta < tb;
  }
  if (a.text().size() != b.text().size()) return a.text().size() < b.text().size();
  return a.text() < b.text();
}

namespace {

class Allocator {
 public:
  Allocator(const LanguageModelBackend& classifier, std::span<const Prompt> candidates,
            const LabeledDataset& eval_view, std::size_t budget, const AllocationConfig& config,
            std::uint64_t seed, const ClassifyOptions& options, const TieBreakFn& tie_break)
      : classifier_(classifier),
        candidates_(candidates),
        eval_view_(eval_view),
        remaining_(budget),
        config_(config),
        options_(options),
        tie_break_(tie_break),
        cursor_(candidates.size(), 0) {
    std::vector<std::size_t> order(eval_view.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    portable_shuffle(order, rng);
    order_ = std::move(order);
    result_.stats.resize(candidates.size());
    result_.records.resize(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) result_.stats[i].prompt_id = candidates[i].id();
  }

  AllocationResult run() {
    if (config_.policy == AllocationPolicy::SuccessiveHalving) {
      successive_halving();
    } else {
      ucb();
    }
    return std::move(result_);
  }

 private:
  std::size_t available(std::size_t c) const { return order_.size() - cursor_[c]; }

  // Evaluates `per` further examples for every candidate in `which`.
  std::size_t evaluate_round(const std::vector<std::size_t>& which, std::size_t per) {
    struct Job {
      std::size_t candidate;
      std::size_t example;
    };
    std::vector<Job> jobs;
    for (auto c : which) {
      const std::size_t take = std::min(per, available(c));
      for (std::size_t k = 0; k < take; ++k) jobs.push_back({c, order_[cursor_[c] + k]});
      cursor_[c] += take;
      if (take > 0) ++result_.stats[c].rounds;
    }
    std::vector<EvalRecord> out(jobs.size());
    parallel_for(jobs.size(), config_.workers, [&](std::size_t j) {
      out[j] = classify(classifier_, candidates_[jobs[j].candidate], eval_view_[jobs[j].example], options_);
    });
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      auto& stats = result_.stats[jobs[j].candidate];
      stats.n_evaluated += 1;
      stats.errors += static_cast<std::size_t>(out[j].loss);
      stats.eval_example_ids.push_back(eval_view_[jobs[j].example].id);
      stats.emp_risk = static_cast<double>(stats.errors) / static_cast<double>(stats.n_evaluated);
      result_.records[jobs[j].candidate].push_back(std::move(out[j]));
    }
    remaining_ -= jobs.size();
    result_.queries_used += jobs.size();
    return jobs.size();
  }

  bool before(std::size_t a, std::size_t b) const {
    return ranks_before(candidates_[a], result_.stats[a], candidates_[b], result_.stats[b], tie_break_);
  }

  void successive_halving() {
    std::vector<std::size_t> active(candidates_.size());
    std::iota(active.begin(), active.end(), std::size_t{0});
    const std::size_t factor = std::max<std::size_t>(config_.halving_factor, 2);
    while (remaining_ > 0) {
      std::size_t per = std::max<std::size_t>(config_.batch, 1);
      if (active.size() * per > remaining_) per = remaining_ / active.size();
      if (per == 0 || evaluate_round(active, per) == 0) break;
      if (active.size() > 1) {
        std::stable_sort(active.begin(), active.end(), [&](auto a, auto b) { return before(a, b); });
        active.resize((active.size() + factor - 1) / factor);
      }
    }
  }

  void ucb() {
    std::vector<std::size_t> all(candidates_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const std::size_t batch = std::max<std::size_t>(config_.batch, 1);
    evaluate_round(all, std::min(batch, remaining_ / all.size()));
    while (remaining_ > 0) {
      const double total = static_cast<double>(result_.queries_used);
      std::optional<std::size_t> pick;
      double best_score = 0.0;
      for (auto c : all) {
        if (available(c) == 0) continue;
        const auto& s = result_.stats[c];
        const double n = static_cast<double>(std::max<std::size_t>(s.n_evaluated, 1));
        const double score =
            (1.0 - s.emp_risk) + config_.ucb_exploration * std::sqrt(2.0 * std::log(std::max(total, 1.0)) / n);
        if (!pick || score > best_score || (score == best_score && before(c, *pick))) {
          pick = c;
          best_score = score;
        }
      }
      if (!pick) break;
      evaluate_round({*pick}, std::min(batch, remaining_));
    }
  }

  const LanguageModelBackend& classifier_;
  std::span<const Prompt> candidates_;
  const LabeledDataset& eval_view_;
  std::size_t remaining_;
  const AllocationConfig& config_;
  const ClassifyOptions& options_;
  const TieBreakFn& tie_break_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> cursor_;
  AllocationResult result_;
};

}  // namespace

AllocationResult allocate_and_evaluate(const LanguageModelBackend& classifier, std::span<const Prompt> candidates,
                                       const LabeledDataset& eval_view, std::size_t budget,
                                       const AllocationConfig& config, std::uint64_t seed,
                                       const ClassifyOptions& options, const TieBreakFn& tie_break) {
  if (candidates.empty()) throw InvalidArgument("allocate_and_evaluate needs at least one candidate");
  if (budget < candidates.size()) {
    throw InvalidArgument("budget (" + std::to_string(budget) + ") is smaller than the number of candidates (" +
                          std::to_string(candidates.size()) + ")");
  }
  if (eval_view.empty()) throw InvalidArgument("evaluation set is empty");
  return Allocator(classifier, candidates, eval_view, budget, config, seed, options, tie_break).run();
}

}  // namespace promptbound
