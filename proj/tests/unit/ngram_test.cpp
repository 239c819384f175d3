// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "promptbound/error.hpp"
#include "promptbound/lm_backend.hpp"
#include "promptbound/ngram.hpp"

using namespace promptbound;

namespace {

const std::vector<std::string> kAb{"a", "b"};

// Brute-force reference for the order-2 "abab" model: counts listed by hand.
// Windows (context -> next): ""->a, "a"->b, "ab"->a, "ba"->b, "ab"->end.
double abab_reference_ab() {
  const double p_a_given_empty = (1 + 1.0) / (1 + 3.0);  // "" seen once, followed by a
  const double p_b_given_a = (1 + 1.0) / (1 + 3.0);      // "a" seen once, followed by b
  const double p_end_given_ab = (1 + 1.0) / (2 + 3.0);   // "ab" seen twice, once followed by end
  return std::log(p_a_given_empty * p_b_given_a * p_end_given_ab);
}

}  // namespace

TEST(Utf8, SplitsCodePoints) {
  EXPECT_EQ(split_utf8("a\xc3\xa9z"), (std::vector<std::string>{"a", "\xc3\xa9", "z"}));
  EXPECT_THROW(split_utf8("\xff"), InvalidArgument);
  EXPECT_THROW(split_utf8("\xc3"), InvalidArgument);
}

TEST(Ngram, GoldenAbab) {
  const NgramModel model = train_ngram(std::vector<std::string>{"abab"}, 2, kAb, 1.0);
  const LogLik ll = model.score("", "ab");
  EXPECT_NEAR(ll.value, abab_reference_ab(), 1e-12);
  EXPECT_NEAR(ll.value, std::log(0.1), 1e-12);
  EXPECT_EQ(ll.token_count, 3u);
}

TEST(Ngram, HandCountedBigram) {
  const NgramModel model = train_ngram(std::vector<std::string>{"aa"}, 1, kAb, 1.0);
  EXPECT_DOUBLE_EQ(model.probability("a", 0), 0.4);
  EXPECT_DOUBLE_EQ(model.probability("a", model.end_of_text()), 0.4);
  EXPECT_DOUBLE_EQ(model.probability("a", 1), 0.2);
  EXPECT_EQ(model.count("a", 0), 1u);
  EXPECT_EQ(model.context_total("a"), 2u);
}

TEST(Ngram, EmptyCorpusIsUniform) {
  const auto alphabet = printable_ascii_alphabet();
  const NgramModel model = train_ngram(std::vector<std::string>{}, 1, alphabet, 1.0);
  const std::string target = "hello";
  const double v = static_cast<double>(alphabet.size() + 1);
  EXPECT_NEAR(model.score("ctx", target).value, -6.0 * std::log(v), 1e-12);
}

TEST(Ngram, ContextConditionsTheFirstSymbols) {
  const NgramModel model = train_ngram(std::vector<std::string>{"xy", "xy", "xy"}, 1, {"x", "y"}, 1.0);
  EXPECT_GT(model.score("x", "y").value, model.score("y", "y").value);
}

TEST(Ngram, DistributionsSumToOne) {
  const NgramModel model = train_ngram(std::vector<std::string>{"abba", "ba", "a"}, 2, kAb, 0.5);
  for (std::string ctx : {"", "a", "b", "ab", "ba", "bb", "aa"}) {
    double total = 0.0;
    for (std::size_t o = 0; o < model.outcome_count(); ++o) total += model.probability(ctx, o);
    EXPECT_NEAR(total, 1.0, 1e-12) << ctx;
  }
}

TEST(Ngram, UnknownTargetSymbolNamesPosition) {
  try {
    train_ngram(std::vector<std::string>{"ab", "abc"}, 1, kAb, 1.0);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("corpus text 1"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("'c' at position 2"), std::string::npos) << e.what();
  }
  const NgramModel model(1, kAb, 1.0);
  EXPECT_THROW(model.score("", "abz"), InvalidArgument);
  // Context symbols outside the alphabet are tolerated.
  EXPECT_NO_THROW(model.score("zz", "ab"));
}

TEST(Ngram, RejectsBadParameters) {
  EXPECT_THROW(NgramModel(0, kAb, 1.0), InvalidArgument);
  EXPECT_THROW(NgramModel(1, kAb, 0.0), InvalidArgument);
  EXPECT_THROW(NgramModel(1, {"a", "a"}, 1.0), InvalidArgument);
}

TEST(Ngram, SerializationRoundTripIsBitIdentical) {
  const auto alphabet = printable_ascii_alphabet();
  const NgramModel model =
      train_ngram(std::vector<std::string>{"Is this text hate speech?", "Answer Yes or No.\n"}, 3, alphabet, 0.1);
  const auto path = std::filesystem::temp_directory_path() / "promptbound_ngram_roundtrip.json";
  model.save(path.string());
  const NgramModel loaded = NgramModel::load(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(model.serialize(), loaded.serialize());

  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    std::string s;
    const auto len = rng() % 20 + 1;
    for (std::size_t j = 0; j < len; ++j) s += alphabet[rng() % alphabet.size()];
    EXPECT_EQ(model.score("ctx", s).value, loaded.score("ctx", s).value);
  }
  const auto doc = model.to_json();
  EXPECT_EQ(doc.at("version").get<int>(), NgramModel::kFormatVersion);
  EXPECT_EQ(doc.at("order").get<int>(), 3);
}

TEST(Ngram, RejectsUnknownFormatVersion) {
  auto doc = train_ngram(std::vector<std::string>{"ab"}, 1, kAb, 1.0).to_json();
  doc["version"] = 99;
  EXPECT_THROW(NgramModel::from_json(doc), InvalidArgument);
}

TEST(NgramBackend, ScoresThroughTheInterface) {
  auto model = std::make_shared<const NgramModel>(train_ngram(std::vector<std::string>{"abab"}, 2, kAb, 1.0));
  const NgramBackend backend(model);
  EXPECT_TRUE(backend.supports_log_likelihood());
  EXPECT_FALSE(backend.supports_generation());
  EXPECT_NEAR(conditional_log_likelihood(backend, "", "ab").value, std::log(0.1), 1e-12);
  EXPECT_EQ(conditional_log_likelihood(backend, "", "ab").backend_id, "ngram");
  EXPECT_THROW(conditional_log_likelihood(backend, "", ""), InvalidArgument);
  EXPECT_THROW(backend.generate("x"), UnsupportedCapability);
}

TEST(StubBackend, TableLookupAndCapabilities) {
  StubBackend stub;
  EXPECT_FALSE(stub.supports_log_likelihood());
  EXPECT_THROW(conditional_log_likelihood(stub, "", "abc"), UnsupportedCapability);
  stub.set_log_likelihood("", "abc", -3.5);
  EXPECT_EQ(conditional_log_likelihood(stub, "", "abc").value, -3.5);
  EXPECT_THROW(conditional_log_likelihood(stub, "", "abd"), InvalidArgument);
  EXPECT_THROW(stub.generate("q"), UnsupportedCapability);
  stub.set_generation("q", "Yes");
  EXPECT_EQ(stub.generate("q"), "Yes");
}
