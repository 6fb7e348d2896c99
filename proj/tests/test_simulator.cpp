#include <set>

#include <gtest/gtest.h>

#include "lcmia/attacks.hpp"
#include "lcmia/simulator.hpp"
#include "support.hpp"

using namespace lcmia;

namespace {

std::set<std::string> four_grams(std::string_view text) {
  auto w = split_words(text);
  std::set<std::string> out;
  for (std::size_t i = 0; i + 4 <= w.size(); ++i) out.insert(w[i] + " " + w[i + 1] + " " + w[i + 2] + " " + w[i + 3]);
  return out;
}

double mean_nll(SimulatorGateway& sim, const PromptRenderer& r, const TargetSample& t, const ContextSpec& ctx) {
  auto split = split_document(t.document, 4);
  auto prompt = r.bundle(ctx, r.render_completion_prompt(split.prefix())).full();
  return suffix_nll(sim.score_echo(prompt, " " + std::string(split.suffix()))).value;
}

}  // namespace

TEST(SimulatorParamsTest, Validation) {
  SimulatorParams p;
  EXPECT_NO_THROW(p.validate());
  p.p_yes_given_member = 1.2;
  EXPECT_THROW(p.validate(), ValidationError);
  p = {};
  p.member_token_logprob_mean = 0.1;
  EXPECT_THROW(p.validate(), ValidationError);
  p = {};
  p.nonmember_logprob_jitter = -1;
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(Simulator, UnknownContextRejected) {
  auto w = make_world();
  SimulatorGateway sim(w.contexts, {});
  EXPECT_THROW(sim.complete({"Hello there\nAnswer:", 1, false, 0, 0}), UnrecognizedPrompt);
  PromptRenderer r;
  auto odd = r.render_system_prompt(w.contexts[0]) + "\nTell me a joke\nAnswer:";
  EXPECT_THROW(sim.complete({odd, 1, false, 0, 0}), UnrecognizedPrompt);
}

TEST(Simulator, MembersAreCopiedNonMembersAreNot) {
  auto w = make_world();
  SimulatorGateway sim(w.contexts, {});
  PromptRenderer r;
  std::size_t copied = 0;
  for (const auto& m : w.members) {
    const auto& ctx = context_of(w, m);
    auto split = split_document(m.document, 4);
    auto c = sim.complete({r.bundle(ctx, r.render_completion_prompt(split.prefix())).full(), 200, false, 0, 0});
    copied += c.text == split.suffix();
  }
  EXPECT_GE(copied, w.members.size() * 85 / 100);

  std::set<std::string> context_grams;
  for (const auto& c : w.contexts)
    for (const auto& d : c.documents) context_grams.merge(four_grams(d.text));
  for (const auto& n : w.nonmembers) {
    auto split = split_document(n.document, 4);
    auto c = sim.complete({r.bundle(context_of(w, n), r.render_completion_prompt(split.prefix())).full(), 40, true, 0, 0});
    EXPECT_EQ(c.tokens.size(), 40u);
    EXPECT_EQ(c.token_logprobs.size(), 40u);
    for (const auto& g : four_grams(c.text)) EXPECT_FALSE(context_grams.contains(g)) << g;
  }
}

TEST(Simulator, CompletionRespectsMaxTokens) {
  auto w = make_world();
  SimulatorGateway sim(w.contexts, {0, 0, -3.5, 0, 0.0, 0.99, 0.6, 0});
  PromptRenderer r;
  const auto& m = w.members[0];
  auto split = split_document(m.document, 2);
  auto prompt = r.bundle(context_of(w, m), r.render_completion_prompt(split.prefix())).full();
  auto c = sim.complete({prompt, 3, true, 0, 0});
  ASSERT_EQ(c.tokens.size(), 3u);
  auto truth = split_words(split.suffix());
  truth.resize(3);
  EXPECT_EQ(split_words(c.text), truth);
  for (double lp : c.token_logprobs) EXPECT_EQ(lp, 0.0);
  auto no_lp = sim.complete({prompt, 3, false, 0, 0});
  EXPECT_TRUE(no_lp.token_logprobs.empty());
  EXPECT_THROW(sim.complete({prompt, 0, false, 0, 0}), ValidationError);
}

TEST(Simulator, EchoNllRanges) {
  auto w = make_world(3, 10, 30);
  SimulatorGateway sim(w.contexts, {});
  PromptRenderer r;
  double member = 0, nonmember = 0;
  std::size_t recalled_members = 0;
  for (const auto& m : w.members) {
    double v = mean_nll(sim, r, m, context_of(w, m));
    if (v < 1.0) {
      member += v;
      ++recalled_members;
    }
  }
  for (const auto& n : w.nonmembers) nonmember += mean_nll(sim, r, n, context_of(w, n));
  member /= static_cast<double>(recalled_members);
  nonmember /= static_cast<double>(w.nonmembers.size());
  EXPECT_GE(recalled_members, w.members.size() * 85 / 100);
  EXPECT_GE(member, 0.02);
  EXPECT_LE(member, 0.08);
  EXPECT_GE(nonmember, 2.5);
  EXPECT_LE(nonmember, 4.5);
}

TEST(Simulator, ZeroJitterGivesExactMeans) {
  auto w = make_world();
  SimulatorParams p;
  p.member_logprob_jitter = 0;
  p.nonmember_logprob_jitter = 0;
  p.retrieval_failure_rate = 0;
  SimulatorGateway sim(w.contexts, p);
  PromptRenderer r;
  EXPECT_DOUBLE_EQ(mean_nll(sim, r, w.members[3], context_of(w, w.members[3])), 0.05);
  EXPECT_DOUBLE_EQ(mean_nll(sim, r, w.nonmembers[3], context_of(w, w.nonmembers[3])), 3.5);
}

TEST(Simulator, EchoSpanAndTokens) {
  auto w = make_world();
  SimulatorGateway sim(w.contexts, {});
  auto e = sim.score_echo("unrelated prompt text", " two words");
  EXPECT_EQ(e.span_begin, 3u);
  EXPECT_EQ(e.span_end, 5u);
  EXPECT_EQ(e.continuation_tokens, (std::vector<std::string>{" two", " words"}));
  // An unknown prompt gets non-member treatment rather than an error.
  EXPECT_GT(suffix_nll(e).value, 1.0);
}

TEST(Simulator, WhitespaceTokensConcatenate) {
  for (std::string s : {"a b  c", "  lead and trail  ", "single", "tab\there\n"}) {
    std::string joined;
    for (auto& t : SimulatorGateway::whitespace_tokens(s)) joined += t;
    EXPECT_EQ(joined, s);
  }
}

TEST(Simulator, MembershipAnswerRates) {
  auto w = make_world(10, 30, 300, 4);
  SimulatorGateway sim(w.contexts, {});
  LocalHashEmbedder emb;
  AttackRunner runner(sim, emb);
  std::size_t yes_m = 0, yes_n = 0;
  for (const auto& m : w.members) yes_m += runner.run_inquiry(m, context_of(w, m)).verdict == Membership::Member;
  for (const auto& n : w.nonmembers) yes_n += runner.run_inquiry(n, context_of(w, n)).verdict == Membership::Member;
  EXPECT_NEAR(static_cast<double>(yes_m) / w.members.size(), 0.99, 0.03);
  EXPECT_NEAR(static_cast<double>(yes_n) / w.nonmembers.size(), 0.60, 0.07);
}

TEST(Simulator, DeterministicAcrossInstances) {
  auto w = make_world();
  SimulatorGateway a(w.contexts, {}), b(w.contexts, {});
  PromptRenderer r;
  for (const auto& t : w.nonmembers) {
    auto split = split_document(t.document, 4);
    auto prompt = r.bundle(context_of(w, t), r.render_completion_prompt(split.prefix())).full();
    auto x = a.complete({prompt, 10, true, 0, 0}), y = b.complete({prompt, 10, true, 0, 0});
    EXPECT_EQ(x.text, y.text);
    EXPECT_EQ(x.token_logprobs, y.token_logprobs);
  }
  SimulatorParams other;
  other.seed = 99;
  SimulatorGateway c(w.contexts, other);
  auto split = split_document(w.nonmembers[0].document, 4);
  auto prompt = r.bundle(context_of(w, w.nonmembers[0]), r.render_completion_prompt(split.prefix())).full();
  EXPECT_NE(a.complete({prompt, 10, false, 0, 0}).text, c.complete({prompt, 10, false, 0, 0}).text);
}

TEST(Simulator, FailureRateIsRoughlyHonoured) {
  auto w = make_world(10, 30, 0, 8);
  SimulatorGateway sim(w.contexts, {});
  PromptRenderer r;
  std::size_t failed = 0;
  for (const auto& m : w.members) {
    auto split = split_document(m.document, 4);
    auto c = sim.complete({r.bundle(context_of(w, m), r.render_completion_prompt(split.prefix())).full(), 5, false, 0, 0});
    failed += !split.suffix().starts_with(c.text);
  }
  EXPECT_NEAR(static_cast<double>(failed) / w.members.size(), 0.05, 0.03);
}
