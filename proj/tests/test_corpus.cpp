#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "lcmia/corpus.hpp"
#include "lcmia/synthetic.hpp"

using namespace lcmia;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& body) {
  auto dir = fs::temp_directory_path() / "lcmia_corpus_test";
  fs::create_directories(dir);
  auto p = dir / name;
  std::ofstream(p) << body;
  return p;
}

DocumentSet numbered_pool(std::size_t n) {
  DocumentSet s;
  for (std::size_t i = 0; i < n; ++i)
    s.add({"d" + std::to_string(i), "Title " + std::to_string(i), "text number " + std::to_string(i)});
  return s;
}

}  // namespace

TEST(Split, TwoPiecesOfSevenWords) {
  Document d{"x", "t", "The cat sat on the warm mat"};
  auto s = split_document(d, 2);
  ASSERT_EQ(s.k(), 2u);
  EXPECT_EQ(s.piece(0), "The cat sat on");
  EXPECT_EQ(s.piece(1), "the warm mat");
  EXPECT_EQ(s.prefix(), "The cat sat on");
  EXPECT_EQ(s.suffix(), "the warm mat");
  EXPECT_EQ(s.suffix_units(), 3u);
}

TEST(Split, ReconstructsOddWhitespace) {
  Document d{"x", "t", "  alpha\tbeta \n gamma  delta epsilon\n"};
  for (std::size_t k = 1; k <= 5; ++k) {
    auto s = split_document(d, k);
    EXPECT_EQ(s.reconstruct(), d.text) << "k=" << k;
    std::size_t total = 0;
    for (auto n : s.unit_counts) total += n;
    EXPECT_EQ(total, 5u);
    for (const auto& p : s.pieces()) {
      EXPECT_FALSE(p.empty());
      EXPECT_FALSE(is_space(p.front()));
      EXPECT_FALSE(is_space(p.back()));
    }
  }
}

TEST(Split, RemainderGoesToEarlyPieces) {
  Document d{"x", "t", "a b c d e f g h i j k"};
  auto s = split_document(d, 4);
  EXPECT_EQ(s.unit_counts, (std::vector<std::size_t>{3, 3, 3, 2}));
  EXPECT_EQ(s.suffix(), "d e f g h i j k");
}

TEST(Split, TooFewWords) {
  Document d{"x", "t", "only three words"};
  EXPECT_THROW(split_document(d, 4), ValidationError);
  EXPECT_NO_THROW(split_document(d, 3));
}

TEST(Split, ReportedTokens) {
  Document d{"x", "t", "Hello world, again"};
  std::vector<std::string> toks{"Hello", " world", ",", " again"};
  auto s = split_document(d, 2, toks);
  EXPECT_EQ(s.unit, SplitUnit::ReportedToken);
  EXPECT_EQ(s.piece(0), "Hello world");
  EXPECT_EQ(s.piece(1), ", again");
  EXPECT_EQ(s.reconstruct(), d.text);

  std::vector<std::string> bad{"Hello", " there"};
  EXPECT_THROW(split_document(d, 2, bad), ValidationError);
  std::vector<std::string> partial{"Hello"};
  EXPECT_THROW(split_document(d, 1, partial), ValidationError);
}

TEST(DocumentSetTest, RejectsDuplicatesAndEmptyText) {
  DocumentSet s;
  s.add({"a", "A", "x"});
  EXPECT_THROW(s.add({"a", "A2", "y"}), ValidationError);
  EXPECT_THROW(s.add({"b", "B", "   "}), ValidationError);
  EXPECT_TRUE(s.contains("a"));
  EXPECT_EQ(s.at("a").title, "A");
  EXPECT_THROW(s.at("zz"), ValidationError);
}

TEST(LoadDocuments, ReadsJsonlSkippingBlankLines) {
  auto p = temp_file("ok.jsonl",
                     "{\"id\":\"1\",\"title\":\"One\",\"text\":\"first doc\"}\n\n"
                     "{\"id\":\"2\",\"title\":\"Two\",\"text\":\"second doc\"}\n");
  auto s = load_documents(p);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].text, "second doc");
}

TEST(LoadDocuments, MalformedRecordReportsLine) {
  auto p = temp_file("bad.jsonl",
                     "{\"id\":\"1\",\"title\":\"One\",\"text\":\"first\"}\n"
                     "{\"id\":\"2\",\"title\":\"Two\"\n");
  try {
    load_documents(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  auto missing = temp_file("missing.jsonl", "{\"id\":\"1\",\"text\":\"no title\"}\n");
  EXPECT_THROW(load_documents(missing), ParseError);
  auto dup = temp_file("dup.jsonl",
                       "{\"id\":\"1\",\"title\":\"a\",\"text\":\"x\"}\n{\"id\":\"1\",\"title\":\"b\",\"text\":\"y\"}\n");
  try {
    load_documents(dup);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadDocuments, RoundTrip) {
  auto docs = synthetic::generate_documents(20, 3, "rt");
  auto p = fs::temp_directory_path() / "lcmia_corpus_test" / "rt.jsonl";
  fs::create_directories(p.parent_path());
  save_documents(p, docs);
  auto back = load_documents(p);
  ASSERT_EQ(back.size(), docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) EXPECT_EQ(back[i].text, docs[i].text);
}

TEST(AssembleContext, GoldLandsAtRequestedIndex) {
  auto pool = numbered_pool(40);
  for (std::size_t g : {1u, 5u, 15u, 30u}) {
    auto ctx = assemble_context(pool, pool[7], "q?", 30, g, 11);
    EXPECT_EQ(ctx.documents.size(), 30u);
    EXPECT_EQ(ctx.documents[g - 1].id, "d7");
    EXPECT_EQ(ctx.gold().id, "d7");
    EXPECT_EQ(std::ranges::count_if(ctx.documents, [](auto& d) { return d.id == "d7"; }), 1);
  }
  EXPECT_THROW(assemble_context(pool, pool[0], "q?", 30, 31, 1), ValidationError);
  EXPECT_THROW(assemble_context(pool, pool[0], "q?", 30, 0, 1), ValidationError);
  EXPECT_THROW(assemble_context(numbered_pool(10), pool[0], "q?", 30, 1, 1), ValidationError);
}

TEST(AssembleContext, SeedControlsDistractorOrder) {
  auto pool = numbered_pool(40);
  auto a = assemble_context(pool, pool[0], "q?", 10, 5, 1);
  auto b = assemble_context(pool, pool[0], "q?", 10, 5, 1);
  auto c = assemble_context(pool, pool[0], "q?", 10, 5, 2);
  auto ids = [](const ContextSpec& x) {
    std::vector<std::string> v;
    for (auto& d : x.documents) v.push_back(d.id);
    return v;
  };
  EXPECT_EQ(ids(a), ids(b));
  EXPECT_NE(ids(a), ids(c));
}

TEST(BuildContexts, DisjointDocumentsAndUniformGold) {
  auto pool = numbered_pool(200);
  auto ctxs = build_contexts(pool, 6, 30, std::nullopt, title_question_source(), 5);
  std::set<std::string> seen;
  std::set<std::size_t> golds;
  for (const auto& c : ctxs) {
    golds.insert(c.gold_index);
    for (const auto& d : c.documents) EXPECT_TRUE(seen.insert(d.id).second) << d.id;
    EXPECT_EQ(c.question, "what is known about " + c.gold().title + "?");
  }
  EXPECT_GT(golds.size(), 1u);
  EXPECT_THROW(build_contexts(pool, 7, 30, 15, title_question_source(), 5), ValidationError);
}

TEST(SampleTargets, BalancedDisjointSorted) {
  std::vector<TargetSample> m, n;
  for (int i = 0; i < 60; ++i) m.push_back({{"d" + std::to_string(i), "t", "x"}, Membership::Member, "c"});
  for (int i = 0; i < 60; ++i) n.push_back({{"d" + std::to_string(i), "t", "y"}, Membership::NonMember, "c"});
  auto sets = sample_targets(m, n, 40, 60, 9);
  ASSERT_EQ(sets.reference.size(), 40u);
  ASSERT_EQ(sets.test.size(), 60u);
  std::set<std::string> ref_ids;
  std::size_t ref_members = 0;
  for (auto& t : sets.reference) {
    ref_ids.insert(t.id());
    ref_members += t.label == Membership::Member;
  }
  EXPECT_EQ(ref_members, 20u);
  for (auto& t : sets.test) EXPECT_FALSE(ref_ids.contains(t.id()));
  EXPECT_TRUE(std::ranges::is_sorted(sets.test, {}, &TargetSample::id));
  EXPECT_THROW(sample_targets(m, n, 41, 60, 9), ValidationError);
  EXPECT_THROW(sample_targets(m, n, 60, 62, 9), ValidationError);
}

TEST(Synthetic, DeterministicAndSized) {
  auto a = synthetic::generate_documents(30, 1, "p");
  auto b = synthetic::generate_documents(30, 1, "p");
  auto c = synthetic::generate_documents(30, 2, "p");
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].text, b[i].text);
    auto w = split_words(a[i].text).size();
    EXPECT_GE(w, 40u);
    EXPECT_LE(w, 100u);
  }
  EXPECT_NE(a[0].text, c[0].text);
  EXPECT_EQ(a[3].id, "p-00003");
}
