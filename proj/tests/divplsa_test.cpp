#include <gtest/gtest.h>

#include "divtopic/divplsa.hpp"
#include "support.hpp"

using namespace divtopic;
using divtopic::testing::make_corpus;

namespace {

divplsa::DivPlsaConfig quick_config(std::size_t K, double gamma) {
  divplsa::DivPlsaConfig c;
  c.start_topics = K;
  c.gamma = gamma;
  c.warmup_iters = 30;
  c.max_iters = 200;
  return c;
}

}  // namespace

TEST(DivPlsaEStep, IdentityNetworkGivesPlainPosterior) {
  const Corpus c = divtopic::testing::planted_corpus(1, 20, 20).corpus;
  const auto s = plsa::init_random(c, 4, 1);
  const TopicNetwork fresh(4, 0.1, 1.5, 0.5);  // identity until the first refresh
  for (std::size_t d = 0; d < c.num_docs(); ++d) {
    for (const Entry& e : c.document(d).entries()) {
      EXPECT_EQ(divplsa::e_step_with_walk(s, fresh, d, e.word), plsa::e_step_posterior(s, d, e.word));
    }
  }
}

TEST(DivPlsaEStep, WalkedPosteriorIsOneStepOfTheNetwork) {
  const Corpus c = divtopic::testing::planted_corpus(2, 20, 20).corpus;
  const auto s = plsa::init_random(c, 4, 2);
  TopicNetwork net(4, 0.3, 1.0, 0.5);
  net.refresh(s.phi, std::vector<double>{100, 200, 300, 400});
  const auto& P = net.transition();
  const auto post = plsa::e_step_posterior(s, 0, c.document(0).entries()[0].word);
  const auto walked = divplsa::e_step_with_walk(s, net, 0, c.document(0).entries()[0].word);
  for (std::size_t j = 0; j < 4; ++j) {
    double expected = 0.0;
    for (std::size_t k = 0; k < 4; ++k) expected += post[k] * P(k, j);
    EXPECT_NEAR(walked[j], expected, 1e-15);
  }
  EXPECT_NEAR(sum(walked), 1.0, 1e-12);
}

TEST(DivPlsaEStep, DeadTopicGetsNoPosteriorMass) {
  const Corpus c = divtopic::testing::planted_corpus(3, 20, 20).corpus;
  auto s = plsa::init_random(c, 4, 3);
  TopicNetwork net(4, 0.1, 1.5, 0.5);
  net.refresh(s.phi, std::vector<double>{100, 0.1, 300, 400});
  divplsa::zero_topic(s, 1);
  divplsa::renormalize_theta(s, net.active());
  for (std::size_t d = 0; d < c.num_docs(); ++d) {
    for (const Entry& e : c.document(d).entries()) EXPECT_EQ(divplsa::e_step_with_walk(s, net, d, e.word)[1], 0.0);
  }
}

TEST(DivPlsaMStep, SizesSumToTokenTotalAndMatchHandSums) {
  const Corpus c = make_corpus(3, {{{0, 2}, {1, 1}}, {{1, 3}, {2, 1}}});
  DenseMatrix p0(2, 2), p1(2, 2);
  std::vector<double> v0{0.9, 0.1, 0.4, 0.6}, v1{0.2, 0.8, 0.5, 0.5};
  std::copy(v0.begin(), v0.end(), p0.flat().begin());
  std::copy(v1.begin(), v1.end(), p1.flat().begin());
  const auto r = divplsa::m_step_with_sizes(c, {p0, p1}, 2);
  EXPECT_NEAR(r.sizes[0], 2 * 0.9 + 0.4 + 3 * 0.2 + 0.5, 1e-12);
  EXPECT_NEAR(r.sizes[1], 2 * 0.1 + 0.6 + 3 * 0.8 + 0.5, 1e-12);
  EXPECT_NEAR(r.sizes[0] + r.sizes[1], 7.0, 1e-12);
}

TEST(DivPlsaMStep, AllMassOnOneTopic) {
  const Corpus c = make_corpus(3, {{{0, 2}, {1, 1}}, {{1, 3}, {2, 1}}});
  plsa::Posteriors post;
  for (const Document& d : c.documents()) {
    DenseMatrix p(d.size(), 3, 0.0);
    for (std::size_t i = 0; i < p.rows(); ++i) p(i, 2) = 1.0;
    post.push_back(p);
  }
  const auto r = divplsa::m_step_with_sizes(c, post, 3);
  EXPECT_EQ(r.sizes, (std::vector<double>{0.0, 0.0, 7.0}));
}

TEST(DivPlsaTrain, IdentityWalkReproducesPlainPlsa) {
  const Corpus c = divtopic::testing::planted_corpus(4, 150, 40).corpus;
  divplsa::DivPlsaConfig cfg = quick_config(6, 1.5);
  cfg.walk_alpha = 0.0;
  cfg.max_iters = 60;
  cfg.activity_threshold = 0.0;
  const auto div = divplsa::train(c, cfg);
  plsa::PlsaConfig pc;
  pc.num_topics = 6;
  pc.max_iters = div.iterations;
  pc.seed = cfg.seed;
  const auto plain = plsa::train(c, pc);
  // Refreshes renormalize theta rows, so agreement is up to rounding.
  ASSERT_EQ(div.state.phi.rows(), plain.state.phi.rows());
  for (std::size_t i = 0; i < plain.state.phi.flat().size(); ++i) {
    EXPECT_NEAR(div.state.phi.flat()[i], plain.state.phi.flat()[i], 1e-9);
  }
  for (std::size_t i = 0; i < plain.trace.size(); ++i) {
    EXPECT_NEAR(div.trace.points[i].likelihood, plain.trace[i].likelihood, 1e-9 * std::abs(plain.trace[i].likelihood));
  }
}

TEST(DivPlsaTrain, GammaZeroKeepsEveryTopic) {
  const Corpus c = divtopic::testing::planted_corpus(5, 300, 60).corpus;
  const auto r = divplsa::train(c, quick_config(10, 0.0));
  EXPECT_EQ(r.topic_ids.size(), 10u);
  for (const TracePoint& p : r.trace.points) EXPECT_EQ(p.active_count, 10u);
}

TEST(DivPlsaTrain, TraceInvariantsOnPlantedCorpus) {
  const Corpus c = divtopic::testing::planted_corpus(6, 500, 80).corpus;
  const auto cfg = quick_config(15, 1.5);
  const auto r = divplsa::train(c, cfg);
  const auto& pts = r.trace.points;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].iteration <= cfg.warmup_iters) {
      EXPECT_EQ(pts[i].active_count, 15u);
      EXPECT_GE(pts[i].likelihood, pts[i - 1].likelihood - 1e-9 * std::abs(pts[i - 1].likelihood));
    }
    EXPECT_LE(pts[i].active_count, pts[i - 1].active_count);
  }
  // Once a topic's size is zeroed by pruning it stays zero.
  for (std::size_t k = 0; k < cfg.start_topics; ++k) {
    bool dead = false;
    for (const auto& sizes : r.trace.sizes) {
      if (dead) {
        EXPECT_EQ(sizes[k], 0.0);
      }
      dead = dead || sizes[k] == 0.0;
    }
  }
  EXPECT_GE(r.topic_ids.size(), 4u);
  EXPECT_LE(r.topic_ids.size(), 6u);
  EXPECT_TRUE(std::is_sorted(r.topic_ids.begin(), r.topic_ids.end()));
  EXPECT_EQ(r.state.num_topics(), r.topic_ids.size());
  for (std::size_t d = 0; d < r.state.theta.rows(); ++d) EXPECT_NEAR(sum(r.state.theta.row(d)), 1.0, 1e-10);
  for (std::size_t k = 0; k < r.state.num_topics(); ++k) EXPECT_NEAR(sum(r.state.phi.row(k)), 1.0, 1e-10);
  for (std::size_t k = 0; k < r.network.num_topics(); ++k) EXPECT_NEAR(sum(r.network.transition().row(k)), 1.0, 1e-10);
}

TEST(DivPlsaTrain, ModelExportKeepsSurvivors) {
  const Corpus c = divtopic::testing::planted_corpus(7, 300, 60).corpus;
  const auto r = divplsa::train(c, quick_config(12, 1.9));
  const TopicModel m = divplsa::to_model(r, c);
  EXPECT_EQ(m.kind, "divplsa");
  EXPECT_EQ(m.topic_ids, r.topic_ids);
  double mass = 0.0;
  for (std::size_t k = 0; k < m.num_topics(); ++k) mass += m.proportion(k);
  EXPECT_NEAR(mass, 1.0, 1e-6);
}

TEST(DivPlsaTrain, SameSeedSameResult) {
  const Corpus c = divtopic::testing::planted_corpus(8, 120, 40).corpus;
  auto cfg = quick_config(8, 1.5);
  cfg.max_iters = 70;
  const auto a = divplsa::train(c, cfg);
  const auto b = divplsa::train(c, cfg);
  EXPECT_EQ(a.state, b.state);
  EXPECT_EQ(a.topic_ids, b.topic_ids);
}

TEST(DivPlsaConfig, RejectsInvalidSettings) {
  const Corpus c = make_corpus(2, {{{0, 1}}});
  auto cfg = quick_config(3, 1.0);
  cfg.warmup_iters = 0;
  EXPECT_THROW(divplsa::train(c, cfg), std::invalid_argument);
  cfg = quick_config(3, -0.5);
  EXPECT_THROW(divplsa::train(c, cfg), std::invalid_argument);
  cfg = quick_config(3, 1.0);
  cfg.refresh_every = 0;
  EXPECT_THROW(divplsa::train(c, cfg), std::invalid_argument);
}
