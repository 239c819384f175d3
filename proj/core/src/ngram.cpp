// SPDX-License-Identifier: Apache-2.0
#include "promptbound/ngram.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "promptbound/error.hpp"

namespace promptbound {
namespace {

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xe) return 3;
  if ((lead >> 3) == 0x1e) return 4;
  return 0;
}

// Byte offsets of each code point start, plus a final entry at text.size().
std::vector<std::size_t> codepoint_offsets(std::string_view text) {
  std::vector<std::size_t> offsets;
  offsets.reserve(text.size() + 1);
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t len = utf8_length(static_cast<unsigned char>(text[i]));
    if (len == 0 || i + len > text.size()) {
      throw InvalidArgument("malformed UTF-8 at byte " + std::to_string(i));
    }
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xc0) != 0x80) {
        throw InvalidArgument("malformed UTF-8 at byte " + std::to_string(i + k));
      }
    }
    offsets.push_back(i);
    i += len;
  }
  offsets.push_back(text.size());
  return offsets;
}

std::string printable(std::string_view symbol) {
  if (symbol == "\n") return "\\n";
  if (symbol == "\t") return "\\t";
  return std::string(symbol);
}

}  // namespace

std::vector<std::string> split_utf8(std::string_view text) {
  const auto offsets = codepoint_offsets(text);
  std::vector<std::string> out;
  out.reserve(offsets.size() - 1);
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
    out.emplace_back(text.substr(offsets[i], offsets[i + 1] - offsets[i]));
  }
  return out;
}

std::vector<std::string> printable_ascii_alphabet() {
  std::vector<std::string> out;
  out.emplace_back("\t");
  out.emplace_back("\n");
  for (char c = 0x20; c < 0x7f; ++c) out.emplace_back(1, c);
  return out;
}

NgramModel::NgramModel(int order, std::vector<std::string> alphabet, double alpha)
    : order_(order), alphabet_(std::move(alphabet)), alpha_(alpha) {
  if (order_ < 1) throw InvalidArgument("n-gram order must be >= 1");
  if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw InvalidArgument("smoothing alpha must be positive");
  if (alphabet_.empty()) throw InvalidArgument("alphabet must be non-empty");
  for (std::size_t i = 0; i < alphabet_.size(); ++i) {
    if (split_utf8(alphabet_[i]).size() != 1) {
      throw InvalidArgument("alphabet entry '" + alphabet_[i] + "' is not a single code point");
    }
    if (!index_.emplace(alphabet_[i], i).second) {
      throw InvalidArgument("duplicate alphabet symbol '" + printable(alphabet_[i]) + "'");
    }
  }
}

std::optional<std::size_t> NgramModel::symbol_index(std::string_view symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void NgramModel::add_text(std::string_view text) {
  const auto offsets = codepoint_offsets(text);
  const std::size_t length = offsets.size() - 1;
  std::vector<std::size_t> symbols(length);
  for (std::size_t i = 0; i < length; ++i) {
    const auto sym = text.substr(offsets[i], offsets[i + 1] - offsets[i]);
    auto idx = symbol_index(sym);
    if (!idx) {
      throw InvalidArgument("symbol '" + printable(sym) + "' at position " + std::to_string(i) +
                            " is not in the alphabet");
    }
    symbols[i] = *idx;
  }
  for (std::size_t i = 0; i <= length; ++i) {
    const std::size_t start = i > static_cast<std::size_t>(order_) ? i - order_ : 0;
    const std::string key(text.substr(offsets[start], offsets[i] - offsets[start]));
    auto& row = counts_[key];
    if (row.empty()) row.assign(outcome_count(), 0);
    row[i < length ? symbols[i] : end_of_text()] += 1;
    totals_[key] += 1;
  }
}

std::uint64_t NgramModel::count(std::string_view context_key, std::size_t outcome) const {
  auto it = counts_.find(context_key);
  if (it == counts_.end() || outcome >= it->second.size()) return 0;
  return it->second[outcome];
}

std::uint64_t NgramModel::context_total(std::string_view context_key) const {
  auto it = totals_.find(context_key);
  return it == totals_.end() ? 0 : it->second;
}

double NgramModel::probability(std::string_view context_key, std::size_t outcome) const {
  const double numerator = static_cast<double>(count(context_key, outcome)) + alpha_;
  const double denominator =
      static_cast<double>(context_total(context_key)) + alpha_ * static_cast<double>(outcome_count());
  return numerator / denominator;
}

LogLik NgramModel::score(std::string_view context, std::string_view target) const {
  std::string history;
  history.reserve(context.size() + target.size());
  history.append(context);
  history.append(target);
  const auto offsets = codepoint_offsets(history);
  const std::size_t total_symbols = offsets.size() - 1;
  // Index of the first target code point within `offsets`.
  std::size_t first = 0;
  while (offsets[first] < context.size()) ++first;
  if (offsets[first] != context.size()) throw InvalidArgument("context splits a UTF-8 sequence");

  double log_lik = 0.0;
  for (std::size_t i = first; i <= total_symbols; ++i) {
    std::size_t outcome = end_of_text();
    if (i < total_symbols) {
      const auto sym = std::string_view(history).substr(offsets[i], offsets[i + 1] - offsets[i]);
      auto idx = symbol_index(sym);
      if (!idx) {
        throw InvalidArgument("symbol '" + printable(sym) + "' at position " + std::to_string(i - first) +
                              " is not in the alphabet");
      }
      outcome = *idx;
    }
    const std::size_t start = i > static_cast<std::size_t>(order_) ? i - order_ : 0;
    const auto key = std::string_view(history).substr(offsets[start], offsets[i] - offsets[start]);
    log_lik += std::log(probability(key, outcome));
  }
  return {log_lik, static_cast<std::int64_t>(total_symbols - first + 1), "ngram"};
}

nlohmann::json NgramModel::to_json() const {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [key, row] : counts_) counts[key] = row;
  return {{"version", kFormatVersion},
          {"order", order_},
          {"alphabet", alphabet_},
          {"alpha", alpha_},
          {"counts", std::move(counts)}};
}

NgramModel NgramModel::from_json(const nlohmann::json& doc) {
  if (doc.value("version", 0) != kFormatVersion) {
    throw InvalidArgument("unsupported n-gram model version");
  }
  NgramModel model(doc.at("order").get<int>(), doc.at("alphabet").get<std::vector<std::string>>(),
                   doc.at("alpha").get<double>());
  for (const auto& [key, row] : doc.at("counts").items()) {
    auto values = row.get<std::vector<std::uint64_t>>();
    if (values.size() != model.outcome_count()) {
      throw InvalidArgument("count row for context '" + key + "' has wrong length");
    }
    std::uint64_t total = 0;
    for (auto v : values) total += v;
    model.totals_[key] = total;
    model.counts_[key] = std::move(values);
  }
  return model;
}

std::string NgramModel::serialize() const { return to_json().dump(); }

NgramModel NgramModel::deserialize(std::string_view text) {
  return from_json(nlohmann::json::parse(text));
}

NgramModel NgramModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open n-gram model '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize(buffer.str());
}

void NgramModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write n-gram model '" + path + "'");
  out << serialize() << '\n';
}

NgramModel train_ngram(std::span<const std::string> corpus, int order, std::vector<std::string> alphabet,
                       double smoothing_alpha) {
  NgramModel model(order, std::move(alphabet), smoothing_alpha);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    try {
      model.add_text(corpus[i]);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("corpus text " + std::to_string(i) + ": " + e.what());
    }
  }
  return model;
}

NgramBackend::NgramBackend(std::shared_ptr<const NgramModel> model, std::string id)
    : model_(std::move(model)), id_(std::move(id)) {
  if (!model_) throw InvalidArgument("n-gram backend needs a model");
}

LogLik NgramBackend::conditional_log_likelihood(std::string_view context, std::string_view target) const {
  LogLik out = model_->score(context, target);
  out.backend_id = id_;
  return out;
}

}  // namespace promptbound
