// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptbound/dataset.hpp"
#include "promptbound/lm_backend.hpp"
#include "promptbound/optimizer.hpp"
#include "promptbound/proposer.hpp"

namespace promptbound::cli {

struct DatasetSpec {
  std::string path;
  /// Optional held-out file for the Test Error column; same format and fields.
  std::string test_path;
  DataFormat format = DataFormat::Csv;
  FieldMap field_map;
  std::uint64_t split_seed = 0;
  std::size_t m_prior = 0;
  EvalPolicy eval_policy = EvalPolicy::FullSample;
};

/// `type` selects the implementation; `options` is passed to it verbatim.
struct BackendSpec {
  std::string type;
  nlohmann::json options = nlohmann::json::object();
};

struct PriorSearchSpec {
  PriorSearchConfig search;
  std::vector<std::string> targets;
  /// Mutation table for meta-prompts; empty uses the built-in one.
  std::string table;
};

struct RunConfig {
  DatasetSpec dataset;
  BackendSpec classifier;
  BackendSpec scorer;
  BackendSpec proposer;
  Objective objective;
  OptimizerConfig optimizer;
  std::string seed_prompt;
  PriorSearchSpec prior_search;
  std::string output_dir = "runs/default";
  /// Relative paths in the config resolve against this directory.
  std::filesystem::path base_dir;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& doc, std::filesystem::path base_dir);

  std::string resolve(const std::string& path) const;
};

/// Applies `key.sub=value` overrides to a parsed config document. The value
/// is read as JSON when it parses, otherwise as a string.
void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides);

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// One text per line, or a JSON array of strings for `.json` files.
std::vector<std::string> load_corpus(const std::string& path);

struct Datasets {
  LabeledDataset train;
  LabeledDataset test;
};

Datasets load_datasets(const RunConfig& config);

/// Backends for a run. Remote backends resolve their credentials here, so a
/// missing variable fails before any evaluation.
struct Backends {
  std::shared_ptr<const LanguageModelBackend> classifier;
  std::shared_ptr<const LanguageModelBackend> scorer;
  std::shared_ptr<const EditProposer> proposer;
};

std::shared_ptr<const LanguageModelBackend> make_scorer(const BackendSpec& spec, const RunConfig& config);
Backends make_backends(const RunConfig& config, const Datasets& data);

}  // namespace promptbound::cli
