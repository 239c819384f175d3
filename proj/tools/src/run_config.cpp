// SPDX-License-Identifier: Apache-2.0
#include "promptbound/cli/run_config.hpp"

#include <fstream>
#include <sstream>

#include "promptbound/error.hpp"
#include "promptbound/ngram.hpp"
#include "promptbound/remote_backend.hpp"
#include "promptbound/rule_classifier.hpp"

namespace promptbound::cli {
namespace {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

// Inline object, or a path to a JSON file holding it.
nlohmann::json inline_or_file(const nlohmann::json& value, const RunConfig& config) {
  if (value.is_string()) return read_json_file(config.resolve(value.get<std::string>()));
  return value;
}

BackendSpec backend_from_json(const nlohmann::json& doc) {
  BackendSpec spec;
  if (!doc.is_object() || !doc.contains("type")) throw ConfigError("backend entries need a \"type\"");
  spec.type = doc["type"].get<std::string>();
  spec.options = doc;
  spec.options.erase("type");
  return spec;
}

nlohmann::json backend_to_json(const BackendSpec& spec) {
  nlohmann::json doc = spec.options;
  doc["type"] = spec.type;
  return doc;
}

std::shared_ptr<const LanguageModelBackend> make_remote(const nlohmann::json& options, const RunConfig& config) {
  RemoteConfig rc = RemoteConfig::from_json(options);
  if (!rc.cache_path.empty()) rc.cache_path = config.resolve(rc.cache_path);
  return std::make_shared<RemoteBackend>(std::move(rc));
}

}  // namespace

std::string RunConfig::resolve(const std::string& path) const {
  if (path.empty()) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (base_dir / p).lexically_normal().string();
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json ds = {{"path", dataset.path},
                       {"format", dataset.format == DataFormat::Csv ? "csv" : "jsonl"},
                       {"field_map", dataset.field_map.to_json()},
                       {"split_seed", dataset.split_seed},
                       {"m_prior", dataset.m_prior},
                       {"eval_policy", std::string(promptbound::to_string(dataset.eval_policy))}};
  if (!dataset.test_path.empty()) ds["test_path"] = dataset.test_path;
  return {{"dataset", std::move(ds)},
          {"backends",
           {{"classifier", backend_to_json(classifier)},
            {"scorer", backend_to_json(scorer)},
            {"proposer", backend_to_json(proposer)}}},
          {"objective", objective.to_json()},
          {"optimizer", optimizer.to_json()},
          {"seed_prompt", seed_prompt},
          {"prior_search",
           {{"search", prior_search.search.to_json()},
            {"targets", prior_search.targets},
            {"table", prior_search.table}}},
          {"output_dir", output_dir}};
}

RunConfig RunConfig::from_json(const nlohmann::json& doc, std::filesystem::path base_dir) {
  RunConfig c;
  c.base_dir = std::move(base_dir);
  try {
    if (doc.contains("dataset")) {
      const auto& d = doc["dataset"];
      c.dataset.path = d.value("path", std::string{});
      c.dataset.test_path = d.value("test_path", std::string{});
      c.dataset.format = parse_data_format(d.value("format", std::string("csv")));
      if (d.contains("field_map")) c.dataset.field_map = FieldMap::from_json(d["field_map"]);
      c.dataset.split_seed = d.value("split_seed", c.dataset.split_seed);
      c.dataset.m_prior = d.value("m_prior", c.dataset.m_prior);
      c.dataset.eval_policy = parse_eval_policy(d.value("eval_policy", std::string("full_S")));
    }
    const auto backends = doc.value("backends", nlohmann::json::object());
    c.classifier = backends.contains("classifier") ? backend_from_json(backends["classifier"]) : BackendSpec{"rule", {}};
    c.scorer = backends.contains("scorer") ? backend_from_json(backends["scorer"]) : BackendSpec{"ngram", {}};
    c.proposer = backends.contains("proposer") ? backend_from_json(backends["proposer"]) : BackendSpec{"mutation", {}};

    nlohmann::json objective = doc.value("objective", nlohmann::json::object());
    if (objective.contains("prior") && objective["prior"].contains("file")) {
      // A prior.json written by optimize-prior.
      const auto saved = read_json_file(c.resolve(objective["prior"]["file"].get<std::string>()));
      objective["prior"]["meta_prompt"] = saved.value("meta_prompt", std::string{});
      objective["prior"]["backend_id"] = saved.value("backend_id", std::string{});
      if (!objective["prior"].contains("label")) objective["prior"]["label"] = saved.value("label", std::string{});
      objective["prior"].erase("file");
    }
    c.objective = Objective::from_json(objective);
    c.optimizer = OptimizerConfig::from_json(doc.value("optimizer", nlohmann::json::object()));
    c.seed_prompt = doc.value("seed_prompt", std::string{});
    if (doc.contains("prior_search")) {
      const auto& p = doc["prior_search"];
      c.prior_search.search = PriorSearchConfig::from_json(p.value("search", nlohmann::json::object()));
      c.prior_search.targets = p.value("targets", c.prior_search.targets);
      c.prior_search.table = p.value("table", std::string{});
    }
    c.output_dir = doc.value("output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("override '" + o + "' is not key=value");
    std::string pointer;
    std::stringstream keys(o.substr(0, eq));
    for (std::string part; std::getline(keys, part, '.');) {
      if (part.empty()) throw InvalidArgument("override '" + o + "' has an empty key segment");
      pointer += "/" + part;
    }
    const std::string raw = o.substr(eq + 1);
    auto value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    doc[nlohmann::json::json_pointer(pointer)] = value;
  }
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json doc = read_json_file(path);
  apply_overrides(doc, overrides);
  return RunConfig::from_json(doc, std::filesystem::path(path).parent_path());
}

std::vector<std::string> load_corpus(const std::string& path) {
  if (std::filesystem::path(path).extension() == ".json") {
    const auto doc = read_json_file(path);
    if (!doc.is_array()) throw ConfigError("corpus '" + path + "' must be a JSON array of strings");
    return doc.get<std::vector<std::string>>();
  }
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus '" + path + "'");
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

Datasets load_datasets(const RunConfig& config) {
  if (config.dataset.path.empty()) throw ConfigError("dataset.path is required");
  Datasets d;
  d.train = load_dataset(config.resolve(config.dataset.path), config.dataset.format, config.dataset.field_map);
  if (!config.dataset.test_path.empty()) {
    d.test = load_dataset(config.resolve(config.dataset.test_path), config.dataset.format, config.dataset.field_map);
  }
  return d;
}

std::shared_ptr<const LanguageModelBackend> make_scorer(const BackendSpec& spec, const RunConfig& config) {
  const auto& o = spec.options;
  if (spec.type == "remote") return make_remote(o, config);
  if (spec.type == "ngram") {
    if (o.contains("model")) {
      return std::make_shared<NgramBackend>(
          std::make_shared<const NgramModel>(NgramModel::load(config.resolve(o["model"].get<std::string>()))));
    }
    const int order = o.value("order", 3);
    const double alpha = o.value("alpha", 0.1);
    std::vector<std::string> corpus;
    if (o.contains("corpus")) corpus = load_corpus(config.resolve(o["corpus"].get<std::string>()));
    return std::make_shared<NgramBackend>(
        std::make_shared<const NgramModel>(train_ngram(corpus, order, printable_ascii_alphabet(), alpha)));
  }
  throw ConfigError("unknown scorer type '" + spec.type + "' (expected ngram or remote)");
}

Backends make_backends(const RunConfig& config, const Datasets& data) {
  Backends b;
  // Scorer and proposer first: they hold any remote credentials, and the
  // classifier may be cheap to build but is useless without them.
  b.scorer = make_scorer(config.scorer, config);

  const auto& po = config.proposer.options;
  if (config.proposer.type == "mutation") {
    MutationTable table = po.contains("table") ? MutationTable::from_json(inline_or_file(po["table"], config))
                                               : MutationTable::default_task_table();
    b.proposer = std::make_shared<OfflineMutationProposer>(std::move(table));
  } else if (config.proposer.type == "llm_critic") {
    if (!po.contains("backend")) throw ConfigError("llm_critic proposer needs a \"backend\" remote config");
    b.proposer = std::make_shared<LlmCriticProposer>(make_remote(po["backend"], config), po.value("max_failures", 4));
  } else {
    throw ConfigError("unknown proposer type '" + config.proposer.type + "' (expected mutation or llm_critic)");
  }

  const auto& co = config.classifier.options;
  if (config.classifier.type == "rule") {
    RuleClassifier::Rules rules =
        co.contains("rules") ? RuleClassifier::Rules::from_json(inline_or_file(co["rules"], config)) : RuleClassifier::Rules{};
    // The classifier parses queries built from the optimizer's template.
    rules.query_template = config.optimizer.classify.query_template;
    std::vector<LabeledExample> truth(data.train.examples().begin(), data.train.examples().end());
    for (const auto& ex : data.test.examples()) truth.push_back({"test:" + ex.id, ex.text, ex.label});
    b.classifier = std::make_shared<RuleClassifier>(std::move(rules), LabeledDataset(std::move(truth)));
  } else if (config.classifier.type == "remote") {
    b.classifier = make_remote(co, config);
  } else {
    throw ConfigError("unknown classifier type '" + config.classifier.type + "' (expected rule or remote)");
  }
  return b;
}

}  // namespace promptbound::cli
