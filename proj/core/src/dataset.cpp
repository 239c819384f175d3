// SPDX-License-Identifier: Apache-2.0
#include "promptbound/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "promptbound/error.hpp"
#include "promptbound/random.hpp"

namespace promptbound {
namespace {

std::string normalize(std::string_view raw) {
  auto begin = raw.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  auto end = raw.find_last_not_of(" \t\r\n");
  std::string out(raw.substr(begin, end - begin + 1));
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool matches_any(const std::string& value, const std::vector<std::string>& candidates) {
  return std::any_of(candidates.begin(), candidates.end(),
                     [&](const std::string& c) { return normalize(c) == value; });
}

Label map_label(std::string_view raw, const FieldMap& fm, std::size_t row) {
  const std::string value = normalize(raw);
  if (matches_any(value, fm.positive)) return Label::Positive;
  if (matches_any(value, fm.negative)) return Label::Negative;
  throw InvalidArgument("row " + std::to_string(row) + ": unmappable label '" + std::string(raw) + "'");
}

std::string json_scalar(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number()) {
    // 1.0 -> "1" so numeric labels map like their integer spelling.
    const double d = v.get<double>();
    if (d == static_cast<double>(static_cast<std::int64_t>(d))) return std::to_string(static_cast<std::int64_t>(d));
    return v.dump();
  }
  return v.dump();
}

}  // namespace

std::string_view to_string(Label label) { return label == Label::Positive ? "positive" : "negative"; }

DataFormat parse_data_format(std::string_view name) {
  if (name == "csv") return DataFormat::Csv;
  if (name == "jsonl") return DataFormat::Jsonl;
  throw InvalidArgument("unknown dataset format '" + std::string(name) + "'");
}

FieldMap FieldMap::from_json(const nlohmann::json& doc) {
  FieldMap fm;
  fm.text = doc.value("text", fm.text);
  fm.label = doc.value("label", fm.label);
  if (doc.contains("id")) fm.id = doc["id"].get<std::string>();
  auto read_values = [&](const char* key, std::vector<std::string>& out) {
    if (!doc.contains(key)) return;
    const auto& v = doc[key];
    out = v.is_array() ? v.get<std::vector<std::string>>() : std::vector<std::string>{json_scalar(v)};
  };
  read_values("positive", fm.positive);
  read_values("negative", fm.negative);
  return fm;
}

nlohmann::json FieldMap::to_json() const {
  nlohmann::json doc = {{"text", text}, {"label", label}, {"positive", positive}, {"negative", negative}};
  if (id) doc["id"] = *id;
  return doc;
}

LabeledDataset::LabeledDataset(std::vector<LabeledExample> examples) : examples_(std::move(examples)) {
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    if (examples_[i].text.empty()) {
      throw InvalidArgument("example '" + examples_[i].id + "' has empty text");
    }
    if (!by_id_.emplace(examples_[i].id, i).second) {
      throw InvalidArgument("duplicate example id '" + examples_[i].id + "'");
    }
  }
}

std::optional<std::size_t> LabeledDataset::index_of(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::size_t LabeledDataset::count(Label label) const {
  return static_cast<std::size_t>(
      std::count_if(examples_.begin(), examples_.end(), [&](const auto& e) { return e.label == label; }));
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<LabeledExample> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(examples_.at(i));
  return LabeledDataset(std::move(out));
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      // CRLF; the '\n' ends the row.
    } else if (c == '\n') {
      end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw InvalidArgument("unterminated quoted CSV field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

LabeledDataset parse_dataset(std::string_view contents, DataFormat format, const FieldMap& fm) {
  std::vector<LabeledExample> examples;
  if (format == DataFormat::Csv) {
    auto rows = parse_csv(contents);
    if (rows.empty()) throw InvalidArgument("CSV has no header row");
    const auto& header = rows.front();
    auto column = [&](const std::string& name) {
      auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) throw InvalidArgument("CSV header lacks column '" + name + "'");
      return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t text_col = column(fm.text);
    const std::size_t label_col = column(fm.label);
    const std::optional<std::size_t> id_col = fm.id ? std::optional(column(*fm.id)) : std::nullopt;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& cells = rows[r];
      if (cells.size() != header.size()) {
        throw InvalidArgument("row " + std::to_string(r) + ": expected " + std::to_string(header.size()) +
                              " fields, got " + std::to_string(cells.size()));
      }
      LabeledExample ex;
      ex.id = id_col ? cells[*id_col] : std::to_string(r - 1);
      ex.text = cells[text_col];
      ex.label = map_label(cells[label_col], fm, r);
      examples.push_back(std::move(ex));
    }
  } else {
    std::istringstream in{std::string(contents)};
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      ++row;
      auto doc = nlohmann::json::parse(line, nullptr, false);
      if (doc.is_discarded() || !doc.is_object()) {
        throw InvalidArgument("row " + std::to_string(row) + ": not a JSON object");
      }
      if (!doc.contains(fm.text) || !doc.contains(fm.label)) {
        throw InvalidArgument("row " + std::to_string(row) + ": missing '" + fm.text + "' or '" + fm.label + "'");
      }
      LabeledExample ex;
      ex.id = fm.id ? json_scalar(doc.at(*fm.id)) : std::to_string(row - 1);
      ex.text = json_scalar(doc[fm.text]);
      ex.label = map_label(json_scalar(doc[fm.label]), fm, row);
      examples.push_back(std::move(ex));
    }
  }
  return LabeledDataset(std::move(examples));
}

LabeledDataset load_dataset(const std::string& path, DataFormat format, const FieldMap& field_map) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open dataset '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_dataset(buffer.str(), format, field_map);
}

std::string_view to_string(EvalPolicy policy) {
  return policy == EvalPolicy::FullSample ? "full_S" : "S_minus_J";
}

EvalPolicy parse_eval_policy(std::string_view name) {
  if (name == "full_S") return EvalPolicy::FullSample;
  if (name == "S_minus_J") return EvalPolicy::ExcludePriorSubset;
  throw InvalidArgument("unknown eval policy '" + std::string(name) + "'");
}

std::vector<std::size_t> SplitPlan::eval_indices() const {
  std::vector<std::size_t> out;
  if (eval_policy == EvalPolicy::FullSample) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i;
    return out;
  }
  std::vector<bool> in_prior(n, false);
  for (auto i : prior_indices) in_prior[i] = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_prior[i]) out.push_back(i);
  }
  return out;
}

SplitPlan make_split(const LabeledDataset& dataset, std::size_t m_prior, std::uint64_t seed, EvalPolicy eval_policy) {
  if (m_prior >= dataset.size()) {
    throw InvalidArgument("m_prior (" + std::to_string(m_prior) + ") must be smaller than n (" +
                          std::to_string(dataset.size()) + ")");
  }
  SplitPlan plan;
  plan.n = dataset.size();
  plan.seed = seed;
  plan.eval_policy = eval_policy;
  Rng rng(seed);
  plan.prior_indices = sample_without_replacement(dataset.size(), m_prior, rng);
  for (auto i : plan.prior_indices) plan.prior_ids.push_back(dataset[i].id);
  return plan;
}

}  // namespace promptbound
