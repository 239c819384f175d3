// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "promptbound/error.hpp"
#include "promptbound/prompt.hpp"
#include "promptbound/proposer.hpp"

using namespace promptbound;

namespace {

std::string read_fixture(const std::string& name) {
  std::ifstream in(std::string(PROMPTBOUND_FIXTURE_DIR) + "/" + name);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Prompt, IdIsContentDerived) {
  const Prompt a("Is this hate speech?");
  const Prompt b("Is this hate speech?", "synonym", "p123");
  EXPECT_EQ(a.id(), b.id());
  EXPECT_EQ(a, b);
  EXPECT_NE(a.id(), Prompt("Is this hate speech? ").id());
  EXPECT_EQ(a.id(), prompt_id_for("Is this hate speech?"));
  EXPECT_EQ(a.id().size(), 17u);
  EXPECT_FALSE(a.log_lik().has_value());
  const Prompt c = a.with_log_lik({-3.0, 4, "stub"});
  ASSERT_TRUE(c.log_lik().has_value());
  EXPECT_EQ(c.log_lik()->value, -3.0);
}

TEST(OfflineMutation, DistinctDeterministicVariants) {
  const OfflineMutationProposer proposer(MutationTable::default_task_table());
  const Prompt source("Is this hate speech?");
  const auto a = proposer.propose(source, {}, 4, 17);
  const auto b = proposer.propose(source, {}, 4, 17);
  ASSERT_EQ(a.size(), 4u);
  std::set<std::string> texts;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].text(), b[i].text());
    EXPECT_NE(a[i].text(), source.text());
    EXPECT_EQ(a[i].parent_id(), source.id());
    texts.insert(a[i].text());
  }
  EXPECT_EQ(texts.size(), 4u);
}

TEST(OfflineMutation, SeedChangesSelection) {
  const OfflineMutationProposer proposer(MutationTable::default_task_table());
  const Prompt source("Is this hate speech?");
  std::set<std::string> firsts;
  for (std::uint64_t s = 0; s < 20; ++s) firsts.insert(proposer.propose(source, {}, 1, s).front().text());
  EXPECT_GT(firsts.size(), 1u);
}

TEST(OfflineMutation, EditKinds) {
  MutationTable t;
  t.synonyms = {{"hate speech", {"hateful content"}}};
  t.clauses = {"Answer with a single word."};
  t.suffixes = {"(Yes/No)"};
  const OfflineMutationProposer proposer(t);

  std::set<std::string> n;
  for (const auto& p : proposer.neighbours(Prompt("Is this hate speech?"))) n.insert(p.text());
  EXPECT_EQ(n, (std::set<std::string>{"Is this hateful content?", "Is this hate speech? Answer with a single word.",
                                      "Answer with a single word. Is this hate speech?",
                                      "Is this hate speech? (Yes/No)"}));

  std::set<std::string> back;
  for (const auto& p : proposer.neighbours(Prompt("Is this hate speech? Answer with a single word. (Yes/No)"))) {
    back.insert(p.text());
  }
  EXPECT_TRUE(back.count("Is this hate speech? (Yes/No)"));
  EXPECT_TRUE(back.count("Is this hate speech? Answer with a single word."));
}

TEST(OfflineMutation, WholeWordSynonymsOnly) {
  MutationTable t;
  t.synonyms = {{"hate", {"dislike"}}};
  const OfflineMutationProposer proposer(t);
  EXPECT_TRUE(proposer.neighbours(Prompt("Is this hateful?")).empty());
  EXPECT_EQ(proposer.neighbours(Prompt("Is this hate?")).at(0).text(), "Is this dislike?");
}

TEST(OfflineMutation, EmptyTableYieldsNoProposals) {
  const OfflineMutationProposer proposer(MutationTable{});
  EXPECT_TRUE(proposer.propose(Prompt("Is this hate speech?"), {}, 1, 0).empty());
  EXPECT_THROW(proposer.propose(Prompt("x"), {}, 0, 0), InvalidArgument);
}

TEST(MutationTable, JsonRoundTripAndBundledFiles) {
  const auto t = MutationTable::default_meta_table();
  const auto back = MutationTable::from_json(t.to_json());
  EXPECT_EQ(back.clauses, t.clauses);
  EXPECT_EQ(back.synonyms, t.synonyms);
  const auto task = MutationTable::load(std::string(PROMPTBOUND_DATA_DIR) + "/mutations_task.json");
  EXPECT_FALSE(task.empty());
  EXPECT_THROW(MutationTable::load("/nonexistent/table.json"), InvalidArgument);
}

TEST(LlmCritic, ParsesRecordedResponse) {
  const auto response = read_fixture("critic_response.txt");
  const auto rewrites = LlmCriticProposer::parse_rewrites(response);
  ASSERT_EQ(rewrites.size(), 5u);
  EXPECT_EQ(rewrites[1], "Does this text attack a protected group? Answer Yes or No.");
}

TEST(LlmCritic, ProposesFixtureRewritesDeduplicated) {
  const auto response = read_fixture("critic_response.txt");
  auto stub = std::make_shared<StubBackend>("critic_fixture");
  std::string last_request;
  stub->set_generate_fn([&](std::string_view request) {
    last_request = std::string(request);
    return response;
  });
  const LlmCriticProposer proposer(stub, 2);
  const Prompt source("Is this text hate speech?");
  const std::vector<FailureExample> failures{{"Group A are vermin.", Label::Positive, "It is hard to say."},
                                             {"The bus was late.", Label::Negative, "Yes"},
                                             {"third", Label::Negative, "Yes"}};
  const auto out = proposer.propose(source, failures, 4, 0);
  std::vector<std::string> texts;
  for (const auto& p : out) texts.push_back(p.text());
  EXPECT_EQ(texts, (std::vector<std::string>{"Is this text hate speech? Answer Yes or No.",
                                             "Does this text attack a protected group? Answer Yes or No.",
                                             "Does this comment contain hateful or dehumanizing language? (Yes/No)"}));
  EXPECT_NE(last_request.find("Group A are vermin."), std::string::npos);
  EXPECT_NE(last_request.find("The bus was late."), std::string::npos);
  EXPECT_EQ(last_request.find("third"), std::string::npos);
  EXPECT_NE(last_request.find("write 4 different"), std::string::npos);

  EXPECT_EQ(proposer.propose(source, failures, 1, 0).size(), 1u);
}
