#include <gtest/gtest.h>

#include <functional>
#include <map>
#include <set>

#include "divtopic/corpus.hpp"
#include "support.hpp"

using namespace divtopic;
using divtopic::testing::make_corpus;
using divtopic::testing::TempDir;
using divtopic::testing::write_text;

namespace {

Corpus load_text(const TempDir& dir, const std::string& docs, const std::string& vocab = "") {
  write_text(dir.file("docs.bow"), docs);
  if (vocab.empty()) return load_bow(dir.file("docs.bow"));
  write_text(dir.file("vocab.txt"), vocab);
  return load_bow(dir.file("docs.bow"), dir.file("vocab.txt"));
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(LoadBow, HeaderAndTriplesGiveDocsAndTokenTotal) {
  TempDir dir;
  const Corpus c = load_text(dir, "2\n3\n3\n1 1 2\n1 3 1\n2 2 4\n", "apple\nbanana\ncherry\n");
  EXPECT_EQ(c.num_docs(), 2u);
  EXPECT_EQ(c.token_total(), 7u);
  EXPECT_EQ(c.vocabulary().term(2), "cherry");
  EXPECT_EQ(c.document(0).entries(), (std::vector<Entry>{{0, 2}, {2, 1}}));
}

TEST(LoadBow, WordIdOutsideVocabularyNamesTheLine) {
  TempDir dir;
  const std::string msg = error_of([&] { load_text(dir, "1\n3\n1\n1 4 1\n", "a\nb\nc\n"); });
  EXPECT_NE(msg.find("docs.bow:4"), std::string::npos) << msg;
  EXPECT_NE(msg.find("word id 4"), std::string::npos) << msg;
}

TEST(LoadBow, DuplicateTriplesAreSummed) {
  TempDir dir;
  const Corpus c = load_text(dir, "1\n3\n2\n1 1 2\n1 1 3\n");
  ASSERT_EQ(c.document(0).size(), 1u);
  EXPECT_EQ(c.document(0).entries()[0], (Entry{0, 5}));
}

TEST(LoadBow, RejectsBadCountsAndMalformedLines) {
  TempDir dir;
  EXPECT_THROW(load_text(dir, "1\n3\n1\n1 1 0\n"), DataError);
  EXPECT_THROW(load_text(dir, "1\n3\n1\n1 1\n"), DataError);
  EXPECT_THROW(load_text(dir, "1\n3\n1\n1 x 2\n"), DataError);
  EXPECT_THROW(load_text(dir, "1\n3\n2\n1 1 1\n"), DataError);  // triple count mismatch
  EXPECT_THROW(load_text(dir, "1\n3\n"), DataError);
  EXPECT_THROW(load_text(dir, "1\n2\n1\n1 1 1\n", "a\nb\nc\n"), DataError);  // vocab size mismatch
  EXPECT_THROW(load_text(dir, "1\n2\n1\n1 1 1\n", "a\na\n"), DataError);    // duplicate term
}

TEST(LoadBow, EmptyDocumentsAreDroppedAndCounted) {
  TempDir dir;
  const Corpus c = load_text(dir, "3\n2\n2\n1 1 1\n3 2 2\n");
  EXPECT_EQ(c.num_docs(), 2u);
  EXPECT_EQ(c.dropped_empty(), 1u);
}

TEST(LoadBow, WriteThenReloadIsIdentical) {
  TempDir dir;
  const Corpus original = divtopic::testing::planted_corpus(3, 60, 30).corpus;
  write_bow(original, dir.file("rt.bow"));
  write_vocab(original.vocabulary(), dir.file("rt.vocab"));
  EXPECT_EQ(load_bow(dir.file("rt.bow"), dir.file("rt.vocab")), original);
}

TEST(SplitHoldout, TenTokenDocumentSplitsEightTwo) {
  const Corpus c = make_corpus(4, {{{0, 4}, {1, 3}, {2, 2}, {3, 1}}, {{0, 10}}});
  const HoldoutResult r = split_holdout_count(c, 1, 0.8, 11);
  ASSERT_EQ(r.holdout.size(), 1u);
  for (const HoldoutSplit& s : r.holdout) {
    EXPECT_EQ(s.observed.total_tokens(), 8u);
    EXPECT_EQ(s.predict.total_tokens(), 2u);
  }
}

TEST(SplitHoldout, PartsPartitionEveryHeldOutDocument) {
  const Corpus c = divtopic::testing::planted_corpus(5, 200, 37).corpus;
  const HoldoutResult r = split_holdout_count(c, 50, 0.8, 9);
  EXPECT_EQ(r.holdout.size(), 50u);
  EXPECT_EQ(r.train.num_docs(), 150u);
  for (const HoldoutSplit& s : r.holdout) {
    const Document& original = c.document(s.source_doc);
    std::map<std::uint32_t, std::uint32_t> merged;
    for (const Entry& e : s.observed.entries()) merged[e.word] += e.count;
    for (const Entry& e : s.predict.entries()) merged[e.word] += e.count;
    std::vector<Entry> entries;
    for (auto [w, n] : merged) entries.push_back({w, n});
    EXPECT_EQ(entries, original.entries());
    EXPECT_EQ(s.observed.total_tokens(), 29u);  // floor(0.8 * 37)
    EXPECT_FALSE(s.predict.empty());
  }
}

TEST(SplitHoldout, HoldoutCountFollowsProtocol) {
  const Corpus c = divtopic::testing::planted_corpus(2, 11267, 5).corpus;
  const HoldoutResult r = split_holdout_count(c, 1000, 0.8, 1);
  EXPECT_EQ(r.holdout.size(), 1000u);
  EXPECT_EQ(r.train.num_docs(), 10267u);
}

TEST(SplitHoldout, SameSeedSameSplit) {
  const Corpus c = divtopic::testing::planted_corpus(5, 100, 20).corpus;
  const HoldoutResult a = split_holdout(c, 0.2, 0.8, 4);
  const HoldoutResult b = split_holdout(c, 0.2, 0.8, 4);
  ASSERT_EQ(a.holdout.size(), b.holdout.size());
  for (std::size_t i = 0; i < a.holdout.size(); ++i) {
    EXPECT_EQ(a.holdout[i].source_doc, b.holdout[i].source_doc);
    EXPECT_EQ(a.holdout[i].observed, b.holdout[i].observed);
    EXPECT_EQ(a.holdout[i].predict, b.holdout[i].predict);
  }
  EXPECT_EQ(a.train, b.train);
}

TEST(SplitHoldout, RejectsCorpusTooSmallAndBadFractions) {
  const Corpus c = make_corpus(2, {{{0, 3}}});
  EXPECT_THROW(split_holdout_count(c, 1, 0.8, 1), DataError);
  const Corpus two = make_corpus(2, {{{0, 3}}, {{1, 3}}});
  EXPECT_THROW(split_holdout_count(two, 1, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(split_holdout(two, 0.0, 0.8, 1), std::invalid_argument);
}

TEST(Holdout, FileRoundTrip) {
  TempDir dir;
  const Corpus c = divtopic::testing::planted_corpus(8, 40, 20).corpus;
  const HoldoutResult r = split_holdout_count(c, 10, 0.8, 2);
  write_holdout(r.holdout, c.vocab_size(), dir.file("h.txt"));
  std::size_t vocab = 0;
  const auto back = read_holdout(dir.file("h.txt"), &vocab);
  EXPECT_EQ(vocab, c.vocab_size());
  ASSERT_EQ(back.size(), r.holdout.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].observed, r.holdout[i].observed);
    EXPECT_EQ(back[i].predict, r.holdout[i].predict);
  }
}

TEST(Cooccurrence, DocumentFrequencyCountsDocuments) {
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> docs(10, {{1, 1}});
  for (int d : {0, 4, 7}) docs[d].push_back({0, 5});
  const CooccurrenceStats s = cooccurrence(make_corpus(3, docs), std::vector<std::uint32_t>{0, 1});
  EXPECT_EQ(s.doc_freq(0), 3);
  EXPECT_DOUBLE_EQ(static_cast<double>(s.doc_freq(0)) / static_cast<double>(s.doc_count()), 0.3);
}

TEST(Cooccurrence, DisjointWordsNeverShareADocument) {
  const Corpus c = make_corpus(2, {{{0, 1}}, {{1, 2}}, {{0, 3}}});
  const CooccurrenceStats s = cooccurrence(c, std::vector<std::uint32_t>{0, 1});
  EXPECT_EQ(s.pair_doc_freq(0, 1), 0);
}

TEST(Cooccurrence, FourDocumentsTwoJoint) {
  const Corpus c = make_corpus(3, {{{0, 1}, {1, 1}}, {{0, 2}}, {{0, 1}, {1, 4}, {2, 1}}, {{2, 1}}});
  const CooccurrenceStats s = cooccurrence(c, std::vector<std::uint32_t>{0, 1, 2});
  EXPECT_EQ(s.pair_doc_freq(0, 1), 2);
  EXPECT_EQ(s.pair_doc_freq(1, 0), 2);
}

TEST(Cooccurrence, MatchesBruteForceScan) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t V = 12;
    const std::size_t D = 1 + uniform_index(rng, 50);
    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> docs(D);
    for (auto& d : docs) {
      for (std::uint32_t w = 0; w < V; ++w) {
        if (uniform01(rng) < 0.3) d.push_back({w, 1 + static_cast<std::uint32_t>(uniform_index(rng, 3))});
      }
      if (d.empty()) d.push_back({0, 1});
    }
    const Corpus c = make_corpus(V, docs);
    const std::vector<std::uint32_t> words{1, 3, 4, 7, 11};
    const CooccurrenceStats s = cooccurrence(c, words);
    for (std::uint32_t a : words) {
      for (std::uint32_t b : words) {
        std::int64_t joint = 0;
        std::int64_t fa = 0;
        for (const auto& d : docs) {
          bool has_a = false, has_b = false;
          for (auto [w, n] : d) {
            has_a |= w == a;
            has_b |= w == b;
          }
          joint += has_a && has_b;
          fa += has_a;
        }
        EXPECT_EQ(s.pair_doc_freq(a, b), joint);
        EXPECT_EQ(s.pair_doc_freq(a, b), s.pair_doc_freq(b, a));
        EXPECT_LE(s.pair_doc_freq(a, b), std::min(s.doc_freq(a), s.doc_freq(b)));
        if (a == b) {
          EXPECT_EQ(s.doc_freq(a), fa);
        }
      }
    }
  }
}

TEST(Cooccurrence, RejectsEmptyAndOutOfRangeSets) {
  const Corpus c = make_corpus(2, {{{0, 1}}});
  EXPECT_THROW(cooccurrence(c, std::vector<std::uint32_t>{}), std::invalid_argument);
  EXPECT_THROW(cooccurrence(c, std::vector<std::uint32_t>{2}), std::out_of_range);
}

TEST(Synthetic, UniformTopicGivesEqualWordFrequencies) {
  DenseMatrix uniform(1, 4, 0.25);
  const SyntheticCorpus s = generate_synthetic(uniform, 1.0, 100, 100, 5);
  std::vector<double> freq(4, 0.0);
  for (const Document& d : s.corpus.documents()) {
    for (const Entry& e : d.entries()) freq[e.word] += e.count;
  }
  for (double f : freq) EXPECT_NEAR(f / static_cast<double>(s.corpus.token_total()), 0.25, 0.05);
}

TEST(Synthetic, VanishingPriorKeepsDocumentsOnOneSupport) {
  DenseMatrix topics(2, 4, 0.0);
  topics(0, 0) = topics(0, 1) = 0.5;
  topics(1, 2) = topics(1, 3) = 0.5;
  const SyntheticCorpus s = generate_synthetic(topics, 1e-4, 200, 30, 6);
  for (const Document& d : s.corpus.documents()) {
    std::set<bool> sides;
    for (const Entry& e : d.entries()) sides.insert(e.word >= 2);
    EXPECT_EQ(sides.size(), 1u);
  }
}

TEST(Synthetic, SameSeedSameBytes) {
  TempDir dir;
  write_bow(divtopic::testing::planted_corpus(12, 50, 40).corpus, dir.file("a.bow"));
  write_bow(divtopic::testing::planted_corpus(12, 50, 40).corpus, dir.file("b.bow"));
  EXPECT_EQ(divtopic::testing::read_text(dir.file("a.bow")), divtopic::testing::read_text(dir.file("b.bow")));
}

TEST(Synthetic, RejectsZeroMassTopicAndBadPrior) {
  DenseMatrix topics(2, 3, 0.0);
  topics(0, 0) = 1.0;
  EXPECT_THROW(generate_synthetic(topics, 0.1, 5, 5, 1), DataError);
  EXPECT_THROW(generate_synthetic(DenseMatrix(1, 3, 1.0), 0.0, 5, 5, 1), std::invalid_argument);
  EXPECT_THROW(generate_synthetic(DenseMatrix(2, 3, 1.0), std::vector<double>{1.0}, 5, 5, 1), std::invalid_argument);
}

TEST(Synthetic, DecayingPriorKeepsMeanAndRatio) {
  const auto p = decaying_prior(5, 0.1, 0.6);
  EXPECT_NEAR(sum(p) / 5.0, 0.1, 1e-15);
  for (std::size_t k = 1; k < p.size(); ++k) EXPECT_NEAR(p[k] / p[k - 1], 0.6, 1e-12);
  for (double a : decaying_prior(3, 0.2, 1.0)) EXPECT_DOUBLE_EQ(a, 0.2);
}

TEST(BlockTopics, RowsAreDistributionsOnDisjointBlocks) {
  const DenseMatrix t = block_topics(5, 500, 1.0, 0.0);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_NEAR(sum(t.row(k)), 1.0, 1e-12);
    for (std::size_t w = 0; w < 500; ++w) EXPECT_EQ(t(k, w) > 0.0, w / 100 == k);
  }
  const DenseMatrix bg = block_topics(5, 500, 1.0, 0.02);
  EXPECT_NEAR(bg(0, 499), 0.02 / 500.0, 1e-15);
}
