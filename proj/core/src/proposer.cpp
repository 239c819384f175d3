// SPDX-License-Identifier: Apache-2.0
#include "promptbound/proposer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "promptbound/error.hpp"
#include "promptbound/random.hpp"

namespace promptbound {
namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '\''; }

// Positions where `needle` occurs as a whole word (or phrase) in `text`.
std::vector<std::size_t> whole_word_hits(const std::string& text, const std::string& needle) {
  std::vector<std::size_t> hits;
  if (needle.empty()) return hits;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) {
    const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
    const std::size_t end = pos + needle.size();
    const bool right_ok = end >= text.size() || !is_word_char(text[end]);
    if (left_ok && right_ok) hits.push_back(pos);
  }
  return hits;
}

std::string join_clause(const std::string& base, const std::string& clause, bool prepend) {
  if (base.empty()) return clause;
  return prepend ? clause + " " + base : base + " " + clause;
}

std::string collapse_spaces(std::string s) {
  std::string out;
  for (char c : s) {
    if (c == ' ' && !out.empty() && out.back() == ' ') continue;
    out.push_back(c);
  }
  return trim(out);
}

}  // namespace

MutationTable MutationTable::from_json(const nlohmann::json& doc) {
  MutationTable t;
  t.synonyms = doc.value("synonyms", t.synonyms);
  t.clauses = doc.value("clauses", t.clauses);
  t.suffixes = doc.value("suffixes", t.suffixes);
  return t;
}

MutationTable MutationTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open mutation table '" + path + "'");
  return from_json(nlohmann::json::parse(in));
}

nlohmann::json MutationTable::to_json() const {
  return {{"synonyms", synonyms}, {"clauses", clauses}, {"suffixes", suffixes}};
}

MutationTable MutationTable::default_task_table() {
  MutationTable t;
  t.synonyms = {
      {"Is this", {"Does this text contain", "Is this message"}},
      {"Does this input contain", {"Does this statement contain", "Is there"}},
      {"hate speech", {"hateful content", "hateful or discriminatory language"}},
      {"contain", {"include", "express"}},
      {"message", {"statement", "comment", "text"}},
      {"hateful", {"abusive", "discriminatory"}},
  };
  t.clauses = {
      "Consider slurs and dehumanizing language.",
      "Ignore strong criticism that does not target a group.",
      "Focus on attacks against a protected group.",
      "Answer with a single word.",
  };
  t.suffixes = {"(Yes/No)", "Answer Yes or No."};
  return t;
}

MutationTable MutationTable::default_meta_table() {
  MutationTable t;
  t.synonyms = {
      {"classification labels", {"classification prompts", "labels"}},
      {"hate speech detection", {"detecting hate speech", "hate speech classification"}},
  };
  t.clauses = {
      "We are trying to find classification labels for hate speech detection.",
      "The text of the prompt is as follows:\n\n",
      "Write a short yes/no question for a hate speech classifier.",
      "Create a hate speech classification rubric.",
  };
  t.suffixes = {"\n\n", "\n"};
  return t;
}

OfflineMutationProposer::OfflineMutationProposer(MutationTable table) : table_(std::move(table)) {}

std::vector<Prompt> OfflineMutationProposer::neighbours(const Prompt& source) const {
  const std::string& text = source.text();
  std::vector<std::pair<std::string, std::string>> edits;  // (text, origin)

  for (const auto& [word, replacements] : table_.synonyms) {
    for (auto pos : whole_word_hits(text, word)) {
      for (const auto& rep : replacements) {
        edits.emplace_back(text.substr(0, pos) + rep + text.substr(pos + word.size()), "synonym:" + word);
      }
    }
  }
  for (const auto& clause : table_.clauses) {
    const auto hits = whole_word_hits(text, clause);
    if (hits.empty()) {
      edits.emplace_back(join_clause(text, clause, false), "insert_clause");
      if (!text.empty()) edits.emplace_back(join_clause(text, clause, true), "insert_clause_front");
    } else {
      for (auto pos : hits) {
        edits.emplace_back(collapse_spaces(text.substr(0, pos) + text.substr(pos + clause.size())), "delete_clause");
      }
    }
  }
  for (const auto& suffix : table_.suffixes) {
    const bool has = text.size() >= suffix.size() && text.compare(text.size() - suffix.size(), suffix.size(), suffix) == 0;
    if (has) {
      std::string stripped = text.substr(0, text.size() - suffix.size());
      while (!stripped.empty() && stripped.back() == ' ') stripped.pop_back();
      edits.emplace_back(stripped, "drop_suffix");
    } else {
      const bool glue = text.empty() || suffix.front() == '\n' || text.back() == '\n';
      edits.emplace_back(glue ? text + suffix : text + " " + suffix, "add_suffix");
    }
  }

  std::set<std::string> seen{text};
  std::vector<Prompt> out;
  for (auto& [candidate, origin] : edits) {
    if (candidate.empty() || !seen.insert(candidate).second) continue;
    out.emplace_back(std::move(candidate), std::move(origin), source.id());
  }
  return out;
}

std::vector<Prompt> OfflineMutationProposer::propose(const Prompt& source, std::span<const FailureExample>,
                                                     std::size_t width, std::uint64_t seed) const {
  if (width == 0) throw InvalidArgument("proposal width must be >= 1");
  auto pool = neighbours(source);
  Rng rng(seed);
  const auto picks = sample_without_replacement(pool.size(), width, rng);
  std::vector<Prompt> out;
  out.reserve(picks.size());
  for (auto i : picks) out.push_back(pool[i]);
  return out;
}

LlmCriticProposer::LlmCriticProposer(std::shared_ptr<const LanguageModelBackend> backend, std::size_t max_failures)
    : backend_(std::move(backend)), max_failures_(max_failures) {
  if (!backend_) throw InvalidArgument("llm_critic proposer needs a backend");
}

std::string LlmCriticProposer::build_request(const Prompt& source, std::span<const FailureExample> failures,
                                             std::size_t width, std::size_t max_failures) {
  std::ostringstream out;
  out << "I'm trying to write a zero-shot classifier prompt.\n\n"
      << "My current prompt is:\n\"" << source.text() << "\"\n\n";
  if (!failures.empty()) {
    out << "But this prompt gets the following examples wrong:\n";
    const std::size_t shown = std::min(failures.size(), max_failures);
    for (std::size_t i = 0; i < shown; ++i) {
      out << "\nText: " << failures[i].text << "\nLabel: " << (failures[i].label == Label::Positive ? "Yes" : "No")
          << "\nPrediction: " << failures[i].model_output << "\n";
    }
    out << "\nGive reasons why the prompt could have gotten these examples wrong. ";
  }
  out << "Then write " << width
      << " different improved prompts. Keep each prompt short and natural. "
         "Wrap each prompt with <START> and <END>.\n";
  return out.str();
}

std::vector<std::string> LlmCriticProposer::parse_rewrites(std::string_view response) {
  std::vector<std::string> out;
  constexpr std::string_view kStart = "<START>";
  constexpr std::string_view kEnd = "<END>";
  for (auto pos = response.find(kStart); pos != std::string_view::npos; pos = response.find(kStart, pos)) {
    const auto body = pos + kStart.size();
    const auto end = response.find(kEnd, body);
    if (end == std::string_view::npos) break;
    auto text = trim(response.substr(body, end - body));
    if (!text.empty()) out.push_back(std::move(text));
    pos = end + kEnd.size();
  }
  return out;
}

std::vector<Prompt> LlmCriticProposer::propose(const Prompt& source, std::span<const FailureExample> failures,
                                               std::size_t width, std::uint64_t) const {
  if (width == 0) throw InvalidArgument("proposal width must be >= 1");
  const auto response = backend_->generate(build_request(source, failures, width, max_failures_));
  std::set<std::string> seen{source.text()};
  std::vector<Prompt> out;
  for (auto& text : parse_rewrites(response)) {
    if (out.size() == width) break;
    if (!seen.insert(text).second) continue;
    out.emplace_back(std::move(text), "llm_critic", source.id());
  }
  return out;
}

}  // namespace promptbound
