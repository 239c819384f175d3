// SPDX-License-Identifier: Apache-2.0
#include "promptbound/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "promptbound/error.hpp"
#include "promptbound/hash.hpp"
#include "promptbound/random.hpp"

namespace promptbound {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Scored prompt kept for k > 1 posteriors and for the incumbent.
struct Scored {
  Prompt prompt;
  LogLik log_lik;
  CandidateStats stats;
  double solo_objective = kInf;
  std::vector<EvalRecord> records;
};

bool shorter_or_smaller(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

}  // namespace

std::string_view to_string(ObjectiveKind kind) { return kind == ObjectiveKind::Bound ? "bound" : "accuracy"; }

ObjectiveKind parse_objective_kind(std::string_view name) {
  if (name == "bound") return ObjectiveKind::Bound;
  if (name == "accuracy") return ObjectiveKind::Accuracy;
  throw InvalidArgument("unknown objective kind '" + std::string(name) + "'");
}

nlohmann::json Objective::to_json() const {
  return {{"kind", std::string(to_string(kind))},
          {"family", std::string(to_string(family))},
          {"delta", delta},
          {"sigma", sigma},
          {"eta", eta},
          {"k", k},
          {"prior", {{"meta_prompt", prior.meta_prompt}, {"backend_id", prior.backend_id}, {"label", prior.label}}}};
}

Objective Objective::from_json(const nlohmann::json& doc) {
  Objective o;
  o.kind = parse_objective_kind(doc.value("kind", std::string(to_string(o.kind))));
  o.family = parse_bound_family(doc.value("family", std::string(to_string(o.family))));
  o.delta = doc.value("delta", o.delta);
  o.sigma = doc.value("sigma", o.sigma);
  o.eta = doc.value("eta", o.eta);
  o.k = doc.value("k", o.k);
  if (o.k < 1) throw InvalidArgument("objective k must be >= 1");
  if (doc.contains("prior")) {
    const auto& p = doc["prior"];
    o.prior.meta_prompt = p.value("meta_prompt", std::string{});
    o.prior.backend_id = p.value("backend_id", std::string{});
    o.prior.label = p.value("label", std::string{});
  }
  if (o.prior.label.empty()) o.prior.label = o.prior.meta_prompt.empty() ? "empty" : "custom";
  return o;
}

BoundInputs posterior_bound_inputs(std::span<const PosteriorMember> members, const Objective& objective,
                                   const SampleContext& context) {
  if (members.empty()) throw InvalidArgument("posterior needs at least one member");
  std::vector<double> log_liks;
  double risk_sum = 0.0;
  std::size_t m = std::numeric_limits<std::size_t>::max();
  for (const auto& member : members) {
    if (member.n_evaluated == 0) throw InvalidArgument("posterior member was never evaluated");
    log_liks.push_back(member.log_lik);
    risk_sum += member.emp_risk;
    m = std::min(m, member.n_evaluated);
  }
  BoundInputs in;
  in.kl = kl_uniform_posterior(log_liks);
  in.emp_risk = members.size() == 1 ? members[0].emp_risk : risk_sum / static_cast<double>(members.size());
  in.m = static_cast<std::int64_t>(m);
  in.m_prior = static_cast<std::int64_t>(context.m_prior);
  in.n = in.m + (context.eval_policy == EvalPolicy::ExcludePriorSubset ? in.m_prior : 0);
  in.delta = objective.delta;
  in.sigma = objective.sigma;
  in.eta = objective.eta;
  return in;
}

ObjectiveScore score_objective(std::span<const PosteriorMember> members, const Objective& objective,
                               const SampleContext& context) {
  const BoundInputs inputs = posterior_bound_inputs(members, objective, context);
  ObjectiveScore score;
  score.emp_risk = inputs.emp_risk;
  if (objective.kind == ObjectiveKind::Bound) {
    score.bound = compute_bound(objective.family, inputs);
    score.value = score.bound->bound;
    return score;
  }
  score.value = inputs.emp_risk;
  try {
    score.bound = compute_bound(objective.family, inputs);
  } catch (const InvalidArgument& e) {
    score.note = e.what();
  }
  return score;
}

ObjectiveScore score_objective(const Prompt& candidate, const CandidateStats& stats, const Objective& objective,
                               const LanguageModelBackend& scorer, const SampleContext& context) {
  if (stats.n_evaluated < 1) throw InvalidArgument("candidate has no evaluations");
  const double log_lik = candidate.log_lik()
                             ? candidate.log_lik()->value
                             : conditional_log_likelihood(scorer, objective.prior.meta_prompt, candidate.text()).value;
  const PosteriorMember member{log_lik, stats.emp_risk, stats.n_evaluated};
  return score_objective(std::span(&member, 1), objective, context);
}

nlohmann::json OptimizerConfig::to_json() const {
  return {{"steps", steps},
          {"budget_per_step", budget_per_step},
          {"width", width},
          {"seed", seed},
          {"allocation", allocation.to_json()},
          {"query_template", classify.query_template},
          {"positive_aliases", classify.parser.positive},
          {"negative_aliases", classify.parser.negative},
          {"early_stop_stagnant", early_stop_stagnant}};
}

OptimizerConfig OptimizerConfig::from_json(const nlohmann::json& doc) {
  OptimizerConfig c;
  c.steps = doc.value("steps", c.steps);
  c.budget_per_step = doc.value("budget_per_step", c.budget_per_step);
  c.width = doc.value("width", c.width);
  c.seed = doc.value("seed", c.seed);
  if (doc.contains("allocation")) c.allocation = AllocationConfig::from_json(doc["allocation"]);
  c.classify.query_template = doc.value("query_template", c.classify.query_template);
  c.classify.parser.positive = doc.value("positive_aliases", c.classify.parser.positive);
  c.classify.parser.negative = doc.value("negative_aliases", c.classify.parser.negative);
  c.early_stop_stagnant = doc.value("early_stop_stagnant", c.early_stop_stagnant);
  return c;
}

namespace {

class SearchLoop {
 public:
  SearchLoop(const OptimizeInputs& in, const Objective& objective, const OptimizerConfig& config,
             const RunLogSink& sink)
      : in_(in), objective_(objective), config_(config), sink_(sink) {
    context_.m_prior = in.split.m_prior();
    context_.eval_policy = in.split.eval_policy;
    eval_view_ = in.dataset.subset(in.split.eval_indices());
    solo_objective_ = objective;
    solo_objective_.k = 1;
  }

  void run(RunLog& log) {
    emit(header_line(log));
    FinalEntry final;
    try {
      seed_step(log);
      std::size_t stagnant_run = 0;
      for (std::size_t s = 1; s <= config_.steps; ++s) {
        const bool stagnant = search_step(log, s);
        stagnant_run = stagnant ? stagnant_run + 1 : 0;
        if (config_.early_stop_stagnant > 0 && stagnant_run >= config_.early_stop_stagnant) break;
      }
      final.seed_id = seed_id_;
      final.best_id = incumbent_ ? incumbent_->prompt.id() : std::string{};
      if (in_.test_set != nullptr && !in_.test_set->empty()) {
        final.test_size = in_.test_set->size();
        final.seed_test_error = test_error(in_.seed_prompt);
        if (incumbent_) final.best_test_error = test_error(incumbent_->prompt);
      }
    } catch (const std::exception& e) {
      final.status = "failed";
      final.error = e.what();
      final.seed_id = seed_id_;
      final.best_id = incumbent_ ? incumbent_->prompt.id() : std::string{};
    }
    log.final = final;
    emit(final_line(final));
  }

 private:
  void emit(const nlohmann::json& line) const {
    if (sink_) sink_(line);
  }

  LogLik log_lik_of(const Prompt& p) {
    auto it = log_lik_cache_.find(p.text());
    if (it != log_lik_cache_.end()) return it->second;
    LogLik ll = conditional_log_likelihood(in_.scorer, objective_.prior.meta_prompt, p.text());
    log_lik_cache_.emplace(p.text(), ll);
    return ll;
  }

  // Objective for `candidate` given the current history (k > 1 adds the best
  // k-1 other prompts to the posterior).
  ObjectiveScore score(const Prompt& candidate, double log_lik, const CandidateStats& stats) const {
    std::vector<PosteriorMember> members{{log_lik, stats.emp_risk, stats.n_evaluated}};
    if (objective_.k > 1) {
      std::vector<const Scored*> others;
      for (const auto& h : history_) {
        if (h.prompt.text() != candidate.text() && std::isfinite(h.solo_objective)) others.push_back(&h);
      }
      std::stable_sort(others.begin(), others.end(),
                       [](const Scored* a, const Scored* b) { return a->solo_objective < b->solo_objective; });
      for (std::size_t i = 0; i < others.size() && members.size() < objective_.k; ++i) {
        members.push_back({others[i]->log_lik.value, others[i]->stats.emp_risk, others[i]->stats.n_evaluated});
      }
    }
    try {
      return score_objective(members, objective_, context_);
    } catch (const InvalidArgument& e) {
      ObjectiveScore out;
      out.value = kInf;
      out.emp_risk = stats.emp_risk;
      out.note = e.what();
      return out;
    }
  }

  double solo_value(double log_lik, const CandidateStats& stats) const {
    const PosteriorMember m{log_lik, stats.emp_risk, stats.n_evaluated};
    try {
      return score_objective(std::span(&m, 1), solo_objective_, context_).value;
    } catch (const InvalidArgument&) {
      return kInf;
    }
  }

  CandidateEntry entry_for(const Prompt& p, const LogLik& ll, const CandidateStats& stats) const {
    const ObjectiveScore sc = score(p, ll.value, stats);
    CandidateEntry e;
    e.prompt_id = p.id();
    e.text = p.text();
    e.origin = p.origin();
    e.parent_id = p.parent_id();
    e.log_lik = ll;
    e.stats = stats;
    e.bound = sc.bound;
    e.objective = sc.value;
    e.note = sc.note;
    return e;
  }

  AllocationResult evaluate(const std::vector<Prompt>& candidates, std::uint64_t seed) {
    std::map<std::string, double> logliks;
    for (const auto& c : candidates) logliks[c.id()] = log_lik_of(c).value;
    const TieBreakFn tie_break = [&](const Prompt& p, const CandidateStats& s) {
      return s.n_evaluated == 0 ? kInf : score(p, logliks.at(p.id()), s).value;
    };
    return allocate_and_evaluate(in_.classifier, candidates, eval_view_, config_.budget_per_step,
                                 config_.allocation, seed, config_.classify, tie_break);
  }

  void record_step(RunLog& log, StepEntry step) {
    for (const auto& r : step.records) emit(eval_line(step.step, r));
    emit(step_line(step));
    log.steps.push_back(std::move(step));
  }

  void seed_step(RunLog& log) {
    const Prompt& seed = in_.seed_prompt;
    seed_id_ = seed.id();
    seen_.insert(seed.text());
    auto alloc = evaluate({seed}, mix_seed(config_.seed, 0));
    const LogLik ll = log_lik_of(seed);

    StepEntry step;
    step.step = 0;
    step.candidates.push_back(entry_for(seed, ll, alloc.stats[0]));
    step.records = alloc.records[0];
    step.selected_id = seed.id();
    step.incumbent_id = seed.id();
    step.best_so_far = step.candidates[0].objective;
    step.improved = true;

    history_.push_back({seed, ll, alloc.stats[0], solo_value(ll.value, alloc.stats[0]), alloc.records[0]});
    incumbent_ = history_.back();
    incumbent_objective_ = step.best_so_far;
    record_step(log, std::move(step));
  }

  bool search_step(RunLog& log, std::size_t s) {
    StepEntry step;
    step.step = s;

    // Best-first: expand the incumbent, falling back to the next best prompt
    // whose proposals are not yet exhausted.
    std::vector<const Scored*> sources;
    sources.push_back(&*incumbent_);
    std::vector<const Scored*> ranked;
    for (const auto& h : history_) {
      if (h.prompt.text() != incumbent_->prompt.text() && std::isfinite(h.solo_objective)) ranked.push_back(&h);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const Scored* a, const Scored* b) { return a->solo_objective < b->solo_objective; });
    sources.insert(sources.end(), ranked.begin(), ranked.end());

    std::vector<Prompt> candidates;
    for (const Scored* source : sources) {
      if (exhausted_.count(source->prompt.text()) != 0) continue;
      candidates = propose_from(*source, s);
      if (!candidates.empty()) {
        step.source_id = source->prompt.id();
        break;
      }
      exhausted_.insert(source->prompt.text());
    }

    if (candidates.empty()) {
      step.no_proposals = true;
      step.stagnant = true;
      step.incumbent_id = incumbent_->prompt.id();
      step.best_so_far = incumbent_objective_;
      record_step(log, std::move(step));
      return true;
    }

    auto alloc = evaluate(candidates, mix_seed(config_.seed, 100000 + s));
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const LogLik ll = log_lik_of(candidates[i]);
      step.candidates.push_back(entry_for(candidates[i], ll, alloc.stats[i]));
      for (const auto& r : alloc.records[i]) step.records.push_back(r);
      const auto& e = step.candidates.back();
      if (!best || e.objective < step.candidates[*best].objective ||
          (e.objective == step.candidates[*best].objective && shorter_or_smaller(e.text, step.candidates[*best].text))) {
        best = i;
      }
    }
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const auto& e = step.candidates[i];
      history_.push_back({candidates[i], e.log_lik, e.stats, solo_value(e.log_lik.value, e.stats), alloc.records[i]});
    }

    const auto& winner = step.candidates[*best];
    step.selected_id = winner.prompt_id;
    if (winner.objective < incumbent_objective_) {
      incumbent_ = Scored{candidates[*best], winner.log_lik, winner.stats, solo_value(winner.log_lik.value, winner.stats),
                          alloc.records[*best]};
      incumbent_objective_ = winner.objective;
      step.improved = true;
    }
    step.stagnant = !step.improved;
    step.incumbent_id = incumbent_->prompt.id();
    step.best_so_far = incumbent_objective_;
    const bool stagnant = step.stagnant;
    record_step(log, std::move(step));
    return stagnant;
  }

  std::vector<Prompt> propose_from(const Scored& source, std::size_t s) {
    std::vector<FailureExample> failures;
    for (const auto& r : source.records) {
      if (r.loss == 0) continue;
      if (auto idx = in_.dataset.index_of(r.example_id)) {
        failures.push_back({in_.dataset[*idx].text, in_.dataset[*idx].label, r.raw_output});
      }
    }
    std::vector<Prompt> out;
    for (auto& p : in_.proposer.propose(source.prompt, failures, config_.width, mix_seed(config_.seed, s))) {
      if (seen_.insert(p.text()).second) out.push_back(std::move(p));
    }
    return out;
  }

  double test_error(const Prompt& p) const {
    std::size_t losses = 0;
    for (const auto& ex : in_.test_set->examples()) {
      losses += static_cast<std::size_t>(classify(in_.classifier, p, ex, config_.classify).loss);
    }
    return static_cast<double>(losses) / static_cast<double>(in_.test_set->size());
  }

  const OptimizeInputs& in_;
  const Objective& objective_;
  Objective solo_objective_;
  const OptimizerConfig& config_;
  const RunLogSink& sink_;
  SampleContext context_;
  LabeledDataset eval_view_;
  std::map<std::string, LogLik> log_lik_cache_;
  std::set<std::string> seen_;
  std::set<std::string> exhausted_;
  std::vector<Scored> history_;
  std::optional<Scored> incumbent_;
  double incumbent_objective_ = kInf;
  std::string seed_id_;
};

}  // namespace

RunLog optimize(const OptimizeInputs& inputs, const Objective& objective, const OptimizerConfig& config,
                const nlohmann::json& config_snapshot, const RunLogSink& sink) {
  if (config.width < 1) throw InvalidArgument("proposal width must be >= 1");
  RunLog log;
  log.config = {{"run", config_snapshot},
                {"objective", objective.to_json()},
                {"optimizer", config.to_json()},
                {"split",
                 {{"n", inputs.split.n},
                  {"m_prior", inputs.split.m_prior()},
                  {"eval_policy", std::string(to_string(inputs.split.eval_policy))},
                  {"seed", inputs.split.seed},
                  {"prior_ids", inputs.split.prior_ids}}},
                {"backends",
                 {{"classifier", inputs.classifier.id()},
                  {"scorer", inputs.scorer.id()},
                  {"proposer", inputs.proposer.name()}}},
                {"seed_prompt", inputs.seed_prompt.text()}};
  log.run_id = "run-" + hex64(fnv1a64(log.config.dump()));
  SearchLoop(inputs, objective, config, sink).run(log);
  return log;
}

nlohmann::json PriorSearchConfig::to_json() const {
  return {{"steps", steps}, {"width", width}, {"seed", seed}, {"seed_meta_prompt", seed_meta_prompt}};
}

PriorSearchConfig PriorSearchConfig::from_json(const nlohmann::json& doc) {
  PriorSearchConfig c;
  c.steps = doc.value("steps", c.steps);
  c.width = doc.value("width", c.width);
  c.seed = doc.value("seed", c.seed);
  c.seed_meta_prompt = doc.value("seed_meta_prompt", c.seed_meta_prompt);
  return c;
}

nlohmann::json PriorSearchResult::to_json() const {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& s : steps) {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& [text, value] : s.candidates) cands.push_back({{"meta_prompt", text}, {"mean_log_lik", value}});
    trace.push_back({{"step", s.step},
                     {"candidates", std::move(cands)},
                     {"incumbent", s.incumbent},
                     {"best_so_far", s.best_so_far},
                     {"improved", s.improved}});
  }
  return {{"meta_prompt", prior.meta_prompt},
          {"backend_id", prior.backend_id},
          {"label", prior.label},
          {"mean_log_lik", mean_log_lik},
          {"seed_mean_log_lik", seed_mean_log_lik},
          {"steps", std::move(trace)}};
}

double mean_target_log_lik(std::span<const Prompt> targets, std::string_view meta_prompt,
                           const LanguageModelBackend& scorer) {
  if (targets.empty()) throw InvalidArgument("prior optimization needs at least one target prompt");
  double sum = 0.0;
  for (const auto& t : targets) sum += conditional_log_likelihood(scorer, meta_prompt, t.text()).value;
  return sum / static_cast<double>(targets.size());
}

PriorSearchResult optimize_prior(std::span<const Prompt> targets, const EditProposer& proposer,
                                 const LanguageModelBackend& scorer, const PriorSearchConfig& config) {
  if (targets.empty()) throw InvalidArgument("prior optimization needs at least one target prompt");
  PriorSearchResult result;
  std::string incumbent = config.seed_meta_prompt;
  double best = mean_target_log_lik(targets, incumbent, scorer);
  result.seed_mean_log_lik = best;
  std::set<std::string> seen{incumbent};

  for (std::size_t s = 1; s <= config.steps; ++s) {
    PriorSearchStep step;
    step.step = s;
    const Prompt source(incumbent, "meta");
    std::optional<std::pair<std::string, double>> winner;
    for (const auto& p : proposer.propose(source, {}, config.width, mix_seed(config.seed, s))) {
      if (!seen.insert(p.text()).second) continue;
      const double value = mean_target_log_lik(targets, p.text(), scorer);
      step.candidates.emplace_back(p.text(), value);
      if (!winner || value > winner->second ||
          (value == winner->second && shorter_or_smaller(p.text(), winner->first))) {
        winner = {p.text(), value};
      }
    }
    if (winner && winner->second > best) {
      incumbent = winner->first;
      best = winner->second;
      step.improved = true;
    }
    step.incumbent = incumbent;
    step.best_so_far = best;
    result.steps.push_back(std::move(step));
  }
  result.prior.meta_prompt = incumbent;
  result.prior.backend_id = scorer.id();
  result.prior.label = "optimized";
  result.mean_log_lik = best;
  return result;
}

}  // namespace promptbound
