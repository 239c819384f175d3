// SPDX-License-Identifier: Apache-2.0
#include "promptbound/cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "promptbound/bounds.hpp"
#include "promptbound/cli/run_config.hpp"
#include "promptbound/error.hpp"
#include "promptbound/ngram.hpp"
#include "promptbound/optimizer.hpp"
#include "promptbound/remote_backend.hpp"
#include "promptbound/report.hpp"
#include "promptbound/runlog.hpp"
#include "promptbound/validator.hpp"

namespace promptbound::cli {
namespace {

namespace fs = std::filesystem;

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string g15(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << contents;
}

fs::path prepare_output_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

void print_bound(std::ostream& out, const BoundValue& b, const char* label) {
  out << label << ' ' << g17(b.bound) << '\n';
  const std::string gap = std::string(label) + "_gap_term";
  out << gap << ' ' << g17(b.gap_term) << '\n';
}

// ---------------------------------------------------------------- compute-bound

struct ComputeBoundArgs {
  std::string family = "ts";
  double emp_risk = 0.0;
  std::optional<double> loglik;
  std::optional<double> kl;
  std::int64_t m = 0;
  std::optional<std::int64_t> n;
  std::int64_t m_prior = 0;
  double delta = kDefaultDelta;
  double sigma = kDefaultSigma;
  double eta = kDefaultEta;
  std::optional<std::int64_t> n_adjust;
  bool json = false;
};

int cmd_compute_bound(const ComputeBoundArgs& a, std::ostream& out) {
  if (a.loglik.has_value() == a.kl.has_value()) throw InvalidArgument("give exactly one of --loglik or --kl");
  const BoundFamily family = parse_bound_family(a.family);
  BoundInputs in;
  in.emp_risk = a.emp_risk;
  in.kl = a.loglik ? KlNats::from_log_likelihood(*a.loglik) : KlNats{*a.kl, *a.kl < 0.0};
  in.m = a.m;
  in.n = a.n.value_or(a.m);
  in.m_prior = a.m_prior;
  in.delta = a.delta;
  in.sigma = a.sigma;
  in.eta = a.eta;
  const BoundValue value = compute_bound(family, in);
  std::optional<BoundValue> adjusted;
  if (a.n_adjust) adjusted = n_adjusted_bound(in, *a.n_adjust, family);

  if (a.json) {
    nlohmann::json doc = {{"bound", to_json(value)}};
    if (adjusted) doc["n_adjusted"] = to_json(*adjusted);
    out << doc.dump(2) << '\n';
    return kExitOk;
  }
  out << "family " << to_string(family) << '\n'
      << "emp_risk " << g15(in.emp_risk) << '\n'
      << "kl " << g15(in.kl.value) << '\n'
      << "m " << in.m << '\n'
      << "n " << in.n << '\n'
      << "m_prior " << in.m_prior << '\n'
      << "delta " << g15(in.delta) << '\n'
      << "sigma " << g15(in.sigma) << '\n'
      << "eta " << g15(in.eta) << '\n';
  if (in.kl.negative_input_warning) out << "warning negative KL: log-probabilities are inconsistent\n";
  print_bound(out, value, "bound");
  if (adjusted) print_bound(out, *adjusted, "bound_n_adjusted");
  return kExitOk;
}

// ---------------------------------------------------------------- perplexity

struct PerplexityArgs {
  std::string backend = "ngram";
  std::string model;
  std::string corpus;
  int order = 3;
  double alpha = 0.1;
  std::string remote_config;
  std::string stub_table;
  std::string prior_text;
  std::string prior_file;
  std::string prompt;
  std::string prompt_file;
};

std::shared_ptr<const LanguageModelBackend> perplexity_backend(const PerplexityArgs& a) {
  if (a.backend == "ngram") {
    RunConfig rc;
    BackendSpec spec{"ngram", {{"order", a.order}, {"alpha", a.alpha}}};
    if (!a.model.empty()) spec.options["model"] = a.model;
    if (!a.corpus.empty()) spec.options["corpus"] = a.corpus;
    return make_scorer(spec, rc);
  }
  if (a.backend == "remote") {
    if (a.remote_config.empty()) throw InvalidArgument("--backend remote needs --remote-config");
    RunConfig rc;
    rc.base_dir = fs::path(a.remote_config).parent_path();
    return make_scorer({"remote", nlohmann::json::parse(read_file(a.remote_config))}, rc);
  }
  if (a.backend == "stub") {
    // [{"context": ..., "target": ..., "value": ...}, ...]
    if (a.stub_table.empty()) throw InvalidArgument("--backend stub needs --stub-table");
    auto stub = std::make_shared<StubBackend>();
    for (const auto& row : nlohmann::json::parse(read_file(a.stub_table))) {
      stub->set_log_likelihood(row.value("context", std::string{}), row.at("target").get<std::string>(),
                               row.at("value").get<double>());
    }
    return stub;
  }
  throw InvalidArgument("unknown backend '" + a.backend + "' (expected ngram, remote or stub)");
}

int cmd_perplexity(const PerplexityArgs& a, std::ostream& out) {
  if (!a.prior_text.empty() && !a.prior_file.empty()) throw InvalidArgument("give --prior-text or --prior-file, not both");
  if (a.prompt.empty() == a.prompt_file.empty()) throw InvalidArgument("give exactly one of --prompt or --prompt-file");
  const std::string prior = a.prior_file.empty() ? a.prior_text : read_file(a.prior_file);
  const std::string prompt = a.prompt_file.empty() ? a.prompt : read_file(a.prompt_file);
  const auto backend = perplexity_backend(a);
  const LogLik ll = conditional_log_likelihood(*backend, prior, prompt);
  out << "backend " << ll.backend_id << '\n'
      << "log_lik " << g17(ll.value) << '\n'
      << "token_count " << ll.token_count << '\n'
      << "kl " << g17(-ll.value) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- train-ngram

struct TrainNgramArgs {
  std::string corpus;
  int order = 3;
  double alpha = 0.1;
  std::string out_path;
};

int cmd_train_ngram(const TrainNgramArgs& a, std::ostream& out) {
  const auto corpus = load_corpus(a.corpus);
  const NgramModel model = train_ngram(corpus, a.order, printable_ascii_alphabet(), a.alpha);
  model.save(a.out_path);
  out << "trained order-" << a.order << " model on " << corpus.size() << " texts -> " << a.out_path << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- optimize

struct RunArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string output_dir;
};

RunConfig load_for_run(const RunArgs& a) {
  RunConfig c = load_run_config(a.config, a.overrides);
  // The flag is relative to the working directory, the config value to the config file.
  if (!a.output_dir.empty()) c.output_dir = fs::absolute(a.output_dir).lexically_normal().string();
  return c;
}

int cmd_optimize(const RunArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig config = load_for_run(a);
  if (config.seed_prompt.empty()) throw ConfigError("seed_prompt is required");
  const Datasets data = load_datasets(config);
  const Backends backends = make_backends(config, data);
  const SplitPlan split =
      make_split(data.train, config.dataset.m_prior, config.dataset.split_seed, config.dataset.eval_policy);

  const fs::path dir = prepare_output_dir(config.resolve(config.output_dir));
  const nlohmann::json snapshot = config.to_json();
  write_file(dir / "config.json", snapshot.dump(2) + "\n");

  std::ofstream runlog(dir / "runlog.jsonl", std::ios::binary | std::ios::trunc);
  if (!runlog) throw ConfigError("cannot write runlog in '" + dir.string() + "'");
  const RunLogSink sink = [&](const nlohmann::json& line) { runlog << line.dump() << '\n' << std::flush; };

  const OptimizeInputs inputs{data.train,         split, *backends.classifier, *backends.scorer, *backends.proposer,
                              Prompt(config.seed_prompt), data.test.empty() ? nullptr : &data.test};
  const RunLog log = optimize(inputs, config.objective, config.optimizer, snapshot, sink);
  runlog.close();

  const Report report = build_report(std::span(&log, 1));
  write_file(dir / "report.txt", report.to_text());
  write_file(dir / "report.json", report.to_json().dump(2) + "\n");
  out << report.to_text();
  out << "run " << log.run_id << " -> " << dir.string() << '\n';
  if (log.final->status != "completed") {
    err << "error: run failed: " << log.final->error << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- optimize-prior

int cmd_optimize_prior(const RunArgs& a, std::ostream& out) {
  const RunConfig config = load_for_run(a);
  std::vector<Prompt> targets;
  for (const auto& t : config.prior_search.targets) targets.emplace_back(t, "target");
  if (targets.empty() && !config.seed_prompt.empty()) targets.emplace_back(config.seed_prompt, "target");
  if (targets.empty()) throw ConfigError("prior_search.targets (or seed_prompt) is required");

  const auto scorer = make_scorer(config.scorer, config);
  const MutationTable table = config.prior_search.table.empty()
                                  ? MutationTable::default_meta_table()
                                  : MutationTable::load(config.resolve(config.prior_search.table));
  const OfflineMutationProposer proposer(table);
  const PriorSearchResult result = optimize_prior(targets, proposer, *scorer, config.prior_search.search);

  const fs::path dir = prepare_output_dir(config.resolve(config.output_dir));
  write_file(dir / "prior.json", result.to_json().dump(2) + "\n");
  out << "seed mean log-lik " << g17(result.seed_mean_log_lik) << '\n'
      << "best mean log-lik " << g17(result.mean_log_lik) << '\n'
      << "meta-prompt " << nlohmann::json(result.prior.meta_prompt).dump() << '\n'
      << "prior -> " << (dir / "prior.json").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- validate

struct ValidateArgs {
  std::string config;
  std::vector<std::string> families;
  std::size_t universe = 64;
  std::size_t hypotheses = 16;
  std::size_t m = 50;
  double delta = kDefaultDelta;
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
  std::uint64_t task_seed = 1;
  std::size_t m_prior = 10;
  std::size_t workers = 1;
  bool csv = false;
  std::string output_dir;
};

int cmd_validate(ValidateArgs a, const CLI::App& sub, std::ostream& out) {
  if (!a.config.empty()) {
    // Flags given on the command line win over the config's validate section.
    const auto doc = nlohmann::json::parse(read_file(a.config)).value("validate", nlohmann::json::object());
    auto take = [&](const char* key, const char* flag, auto& field) {
      if (doc.contains(key) && sub.count(flag) == 0) field = doc[key].get<std::decay_t<decltype(field)>>();
    };
    take("families", "--family", a.families);
    take("universe", "--universe", a.universe);
    take("hypotheses", "--hypotheses", a.hypotheses);
    take("m", "--m", a.m);
    take("delta", "--delta", a.delta);
    take("trials", "--trials", a.trials);
    take("seed", "--seed", a.seed);
    take("task_seed", "--task-seed", a.task_seed);
    take("m_prior", "--m-prior", a.m_prior);
    take("workers", "--workers", a.workers);
    take("csv", "--csv", a.csv);
    take("output_dir", "--output-dir", a.output_dir);
  }
  if (a.families.empty()) a.families = {"mcallester", "ts", "theorem1"};

  const SyntheticTask task = SyntheticTask::random(a.universe, a.hypotheses, a.task_seed);
  const auto prior = uniform_log_prior(task);
  CoverageOptions options;
  options.m_prior = a.m_prior;
  options.workers = a.workers;
  options.keep_samples = !a.output_dir.empty();

  std::vector<CoverageReport> reports;
  bool ok = true;
  for (const auto& name : a.families) {
    const BoundFamily family = parse_bound_family(name);
    reports.push_back(coverage_trial_suite(task, family, prior, a.m, a.delta, a.trials, a.seed, options));
    // Theorem1 coverage depends on eta and is reported, not enforced.
    if (family != BoundFamily::Theorem1) ok = ok && reports.back().meets_threshold();
  }
  const std::string table = coverage_table(reports);
  out << table;

  if (!a.output_dir.empty()) {
    const fs::path dir = prepare_output_dir(a.output_dir);
    nlohmann::json all = nlohmann::json::array();
    for (const auto& r : reports) {
      all.push_back(r.to_json());
      if (a.csv) write_file(dir / ("coverage_" + std::string(to_string(r.family)) + ".csv"), r.to_csv());
    }
    write_file(dir / "coverage.json", all.dump(2) + "\n");
    write_file(dir / "coverage.txt", table);
  }
  return ok ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  std::vector<std::string> runlogs;
  std::vector<std::string> run_dirs;
  std::string output_dir;
  bool json = false;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  std::vector<RunLog> logs;
  for (const auto& d : a.run_dirs) logs.push_back(RunLog::load((fs::path(d) / "runlog.jsonl").string()));
  for (const auto& p : a.runlogs) logs.push_back(RunLog::load(p));
  if (logs.empty()) throw InvalidArgument("give at least one --runlog or --run-dir");
  const Report report = build_report(logs);
  if (!a.output_dir.empty()) {
    const fs::path dir = prepare_output_dir(a.output_dir);
    write_file(dir / "report.txt", report.to_text());
    write_file(dir / "report.json", report.to_json().dump(2) + "\n");
  }
  out << (a.json ? report.to_json().dump(2) + "\n" : report.to_text());
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"PAC-Bayes bounds and bound-regularized prompt optimization", "promptbound"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "promptbound 0.1.0");

  ComputeBoundArgs cb;
  auto* compute = app.add_subcommand("compute-bound", "Evaluate a generalization bound");
  compute->add_option("--family", cb.family, "mcallester, ts or theorem1")->capture_default_str();
  compute->add_option("--emp-risk", cb.emp_risk, "Empirical risk in [0,1]")->required();
  compute->add_option("--loglik", cb.loglik, "Log-likelihood of the prompt under the prior (KL = -loglik)");
  compute->add_option("--kl", cb.kl, "KL divergence in nats");
  compute->add_option("--m", cb.m, "Examples behind the empirical risk")->required();
  compute->add_option("--n", cb.n, "Total sample size (theorem1; default m)");
  compute->add_option("--m-prior", cb.m_prior, "Prior subset size (theorem1)");
  compute->add_option("--delta", cb.delta, "Confidence parameter in (0,1)")->capture_default_str();
  compute->add_option("--sigma", cb.sigma, "Subgaussian parameter")->capture_default_str();
  compute->add_option("--eta", cb.eta, "Markov derandomization level")->capture_default_str();
  compute->add_option("--n-adjust", cb.n_adjust, "Also report the bound at this sample size");
  compute->add_flag("--json", cb.json, "Print JSON");

  PerplexityArgs pp;
  auto* perplexity = app.add_subcommand("perplexity", "Log-likelihood of a prompt given a prior text");
  perplexity->add_option("--backend", pp.backend, "ngram, remote or stub")->capture_default_str();
  perplexity->add_option("--model", pp.model, "Trained n-gram model (JSON)");
  perplexity->add_option("--corpus", pp.corpus, "Train an n-gram model on this corpus first");
  perplexity->add_option("--order", pp.order, "n-gram order for --corpus")->capture_default_str();
  perplexity->add_option("--alpha", pp.alpha, "Add-alpha smoothing for --corpus")->capture_default_str();
  perplexity->add_option("--remote-config", pp.remote_config, "Remote backend config (JSON)");
  perplexity->add_option("--stub-table", pp.stub_table, "Stub log-likelihood table (JSON)");
  perplexity->add_option("--prior-text", pp.prior_text, "Meta-prompt text");
  perplexity->add_option("--prior-file", pp.prior_file, "Meta-prompt file");
  perplexity->add_option("--prompt", pp.prompt, "Prompt to score");
  perplexity->add_option("--prompt-file", pp.prompt_file, "File holding the prompt to score");

  TrainNgramArgs tn;
  auto* train = app.add_subcommand("train-ngram", "Train a character n-gram prior");
  train->add_option("--corpus", tn.corpus, "One text per line, or a JSON array")->required();
  train->add_option("--order", tn.order, "Context length in characters")->capture_default_str();
  train->add_option("--alpha", tn.alpha, "Add-alpha smoothing")->capture_default_str();
  train->add_option("--out", tn.out_path, "Output model path")->required();

  RunArgs ra;
  auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("--config", ra.config, "Run config (JSON)")->required();
    sub->add_option("--set", ra.overrides, "Override a config key: key.sub=value");
    sub->add_option("--output-dir", ra.output_dir, "Override output_dir");
  };
  auto* opt = app.add_subcommand("optimize", "Run bound-regularized prompt optimization");
  add_run_options(opt);
  auto* opt_prior = app.add_subcommand("optimize-prior", "Search meta-prompts that make the targets likely");
  add_run_options(opt_prior);

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "Monte-Carlo coverage check of the bounds");
  validate->add_option("--config", va.config, "Config with a \"validate\" section");
  validate->add_option("--family", va.families, "Bound families (repeatable)");
  validate->add_option("--universe", va.universe, "Synthetic universe size")->capture_default_str();
  validate->add_option("--hypotheses", va.hypotheses, "Number of hypotheses")->capture_default_str();
  validate->add_option("--m", va.m, "Sample size per trial")->capture_default_str();
  validate->add_option("--delta", va.delta, "Confidence parameter")->capture_default_str();
  validate->add_option("--trials", va.trials, "Trials per family")->capture_default_str();
  validate->add_option("--seed", va.seed, "Trial seed")->capture_default_str();
  validate->add_option("--task-seed", va.task_seed, "Synthetic task seed")->capture_default_str();
  validate->add_option("--m-prior", va.m_prior, "Prior subset size for theorem1")->capture_default_str();
  validate->add_option("--workers", va.workers, "Worker threads")->capture_default_str();
  validate->add_flag("--csv", va.csv, "Write per-trial CSV files");
  validate->add_option("--output-dir", va.output_dir, "Write coverage.json/coverage.txt here");

  ReportArgs rp;
  auto* report = app.add_subcommand("report", "Render the results table from run logs");
  report->add_option("--runlog", rp.runlogs, "runlog.jsonl path (repeatable)");
  report->add_option("--run-dir", rp.run_dirs, "Run directory holding runlog.jsonl (repeatable)");
  report->add_option("--output-dir", rp.output_dir, "Also write report.txt/report.json here");
  report->add_flag("--json", rp.json, "Print JSON instead of the table");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*compute) return cmd_compute_bound(cb, out);
    if (*perplexity) return cmd_perplexity(pp, out);
    if (*train) return cmd_train_ngram(tn, out);
    if (*opt) return cmd_optimize(ra, out, err);
    if (*opt_prior) return cmd_optimize_prior(ra, out);
    if (*validate) return cmd_validate(va, *validate, out);
    if (*report) return cmd_report(rp, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace promptbound::cli
