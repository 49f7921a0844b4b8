#include <gtest/gtest.h>

#include <array>
#include <random>

#include "divtopic/divlda.hpp"
#include "support.hpp"

using namespace divtopic;

namespace {

// Puts every token into topic z % `used` and rebuilds the counts from scratch.
void fold_assignments(lda::LdaState& s, std::uint32_t used) {
  s.n_dk.fill(0);
  s.n_kw.fill(0);
  std::fill(s.n_k.begin(), s.n_k.end(), 0);
  for (std::size_t d = 0; d < s.num_docs(); ++d) {
    for (std::size_t i = 0; i < s.words[d].size(); ++i) {
      auto& k = s.assignments[d][i];
      k %= used;
      ++s.n_dk(d, k);
      ++s.n_kw(k, s.words[d][i]);
      ++s.n_k[k];
    }
  }
}

// Independent re-implementation of the walked token process for two topics:
// decrement, draw from the collapsed conditional, hop once along P, increment.
class TwoTopicSimulator {
 public:
  TwoTopicSimulator(const lda::LdaState& init, const DenseMatrix& P, std::uint64_t seed)
      : words_(init.words), z_(init.assignments), P_(P), alpha_(init.alpha), beta_(init.beta),
        V_(init.vocab_size()), rng_(seed) {
    n_dk_.assign(words_.size(), {0, 0});
    n_kw_.assign(2, std::vector<long>(V_, 0));
    for (std::size_t d = 0; d < words_.size(); ++d) {
      for (std::size_t i = 0; i < words_[d].size(); ++i) add(d, i, +1);
    }
  }

  void sweep() {
    for (std::size_t d = 0; d < words_.size(); ++d) {
      for (std::size_t i = 0; i < words_[d].size(); ++i) {
        add(d, i, -1);
        const auto w = words_[d][i];
        double p[2];
        for (int k = 0; k < 2; ++k) {
          p[k] = (n_dk_[d][k] + alpha_[k]) * (n_kw_[k][w] + beta_) / (n_k_[k] + V_ * beta_);
        }
        std::discrete_distribution<int> draw({p[0], p[1]});
        const int k = draw(rng_);
        std::discrete_distribution<int> hop({P_(k, 0), P_(k, 1)});
        z_[d][i] = static_cast<std::uint32_t>(hop(rng_));
        add(d, i, +1);
      }
    }
  }

  double share0() const { return static_cast<double>(n_k_[0]) / static_cast<double>(n_k_[0] + n_k_[1]); }

 private:
  void add(std::size_t d, std::size_t i, int delta) {
    const auto k = z_[d][i];
    n_dk_[d][k] += delta;
    n_kw_[k][words_[d][i]] += delta;
    n_k_[k] += delta;
  }

  std::vector<std::vector<std::uint32_t>> words_, z_;
  DenseMatrix P_;
  std::vector<double> alpha_;
  double beta_;
  double V_;
  std::mt19937 rng_;
  std::vector<std::array<long, 2>> n_dk_;
  std::vector<std::vector<long>> n_kw_;
  long n_k_[2] = {0, 0};
};

divlda::DivLdaConfig quick_config(std::size_t K, double gamma) {
  divlda::DivLdaConfig c;
  c.start_topics = K;
  c.gamma = gamma;
  c.warmup_sweeps = 60;
  c.refresh_every = 20;
  c.total_sweeps = 400;
  c.active_patience = 5;
  c.alpha_burn_in = 20;
  return c;
}

}  // namespace

TEST(DivLdaSweep, IdentityNetworkMatchesPlainSweep) {
  const Corpus c = divtopic::testing::planted_corpus(1, 60, 30).corpus;
  Rng init(3);
  auto a = lda::init_random(c, 5, 0.4, 0.05, init);
  auto b = a;
  const TopicNetwork fresh(5, 0.1, 1.0, 1.0);
  Rng r1(8), r2(8);
  for (int i = 0; i < 10; ++i) {
    divlda::sweep_with_walk(a, fresh, r1);
    lda::sweep(b, r2);
  }
  EXPECT_EQ(a, b);
  EXPECT_EQ(r1, r2);
}

TEST(DivLdaSweep, DeadTopicNeverRegainsTokens) {
  const Corpus c = divtopic::testing::planted_corpus(2, 80, 30).corpus;
  Rng rng(4);
  auto s = lda::init_random(c, 3, 0.5, 0.05, rng);
  fold_assignments(s, 2);
  ASSERT_EQ(s.n_k[2], 0);
  TopicNetwork net(3, 0.3, 1.0, 1.0);
  const std::vector<double> sizes{static_cast<double>(s.n_k[0]), static_cast<double>(s.n_k[1]), 0.0};
  net.refresh(lda::estimate_phi(s), sizes);
  ASSERT_FALSE(net.is_active(2));
  for (int i = 0; i < 300; ++i) {
    divlda::sweep_with_walk(s, net, rng);
    ASSERT_EQ(s.n_k[2], 0);
  }
  EXPECT_TRUE(lda::counts_consistent(s));
}

TEST(DivLdaSweep, WalkedCountsStayConsistent) {
  const Corpus c = divtopic::testing::planted_corpus(3, 60, 30).corpus;
  Rng rng(5);
  auto s = lda::init_random(c, 4, 0.5, 0.05, rng);
  TopicNetwork net(4, 0.4, 1.0, 1.0);
  std::vector<double> sizes(4);
  for (std::size_t k = 0; k < 4; ++k) sizes[k] = static_cast<double>(s.n_k[k]);
  net.refresh(lda::estimate_phi(s), sizes);
  const auto total = static_cast<std::int64_t>(c.token_total());
  for (int i = 0; i < 50; ++i) {
    divlda::sweep_with_walk(s, net, rng);
    ASSERT_TRUE(lda::counts_consistent(s));
    ASSERT_EQ(std::accumulate(s.n_k.begin(), s.n_k.end(), std::int64_t{0}), total);
  }
}

TEST(DivLdaSweep, TwoTopicSizeRatioMatchesTokenLevelSimulation) {
  const Corpus c = divtopic::testing::make_corpus(
      6, {{{0, 3}, {1, 2}, {2, 1}}, {{3, 4}, {4, 2}}, {{0, 1}, {2, 2}, {5, 3}}, {{1, 2}, {3, 2}, {4, 1}},
          {{0, 2}, {5, 4}}, {{2, 3}, {3, 3}}, {{1, 1}, {4, 4}, {5, 1}}, {{0, 4}, {3, 2}}});
  DenseMatrix P(2, 2);
  P(0, 0) = 0.9;
  P(0, 1) = 0.1;
  P(1, 0) = 0.3;
  P(1, 1) = 0.7;
  Rng rng(21);
  auto s = lda::init_random(c, 2, 0.5, 0.1, rng);
  TwoTopicSimulator sim(s, P, 99);

  const int burn = 500, sweeps = 20000;
  double lib = 0.0, ref = 0.0;
  for (int i = 0; i < burn + sweeps; ++i) {
    lda::detail::gibbs_sweep(s, rng, &P, {});
    sim.sweep();
    if (i >= burn) {
      lib += static_cast<double>(s.n_k[0]) / static_cast<double>(s.n_k[0] + s.n_k[1]) / sweeps;
      ref += sim.share0() / sweeps;
    }
  }
  EXPECT_NEAR(lib, ref, 0.01);
  // The walk pulls towards topic 0, whose walk-only stationary share is 0.75.
  EXPECT_GT(lib, 0.55);
}

TEST(DivLdaTrain, IdentityWalkReproducesPlainLda) {
  const Corpus c = divtopic::testing::planted_corpus(4, 80, 30).corpus;
  auto cfg = quick_config(4, 1.5);
  cfg.walk_alpha = 0.0;
  cfg.total_sweeps = 150;
  cfg.active_patience = 1000;
  const auto div = divlda::train(c, cfg);
  ASSERT_EQ(div.network.active_count(), 4u);
  lda::LdaConfig plain;
  plain.num_topics = 4;
  plain.sweeps = cfg.total_sweeps;
  plain.burn_in = cfg.alpha_burn_in;
  plain.seed = cfg.seed;
  EXPECT_EQ(div.state, lda::train(c, plain).state);
}

TEST(DivLdaTrain, GammaZeroKeepsEveryTopic) {
  const Corpus c = divtopic::testing::planted_corpus(5, 200, 50).corpus;
  const auto r = divlda::train(c, quick_config(8, 0.0));
  for (const TracePoint& p : r.trace) EXPECT_EQ(p.active_count, 8u);
  EXPECT_EQ(r.to_model().num_topics(), 8u);
}

TEST(DivLdaTrain, TraceAndAbsorptionInvariants) {
  const Corpus c = divtopic::testing::planted_corpus(6, 300, 60).corpus;
  const auto cfg = quick_config(10, 1.5);
  const auto r = divlda::train(c, cfg);
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    if (r.trace[i].iteration < cfg.warmup_sweeps) {
      EXPECT_EQ(r.trace[i].active_count, 10u);
    }
    if (i > 0) {
      EXPECT_LE(r.trace[i].active_count, r.trace[i - 1].active_count);
    }
  }
  EXPECT_LT(r.network.active_count(), 10u);
  for (std::size_t k = 0; k < 10; ++k) {
    if (!r.active[k]) {
      EXPECT_EQ(r.state.n_k[k], 0);
    }
  }
  EXPECT_TRUE(lda::counts_consistent(r.state));
  const TopicModel m = r.to_model();
  EXPECT_EQ(m.kind, "divlda");
  EXPECT_EQ(m.num_topics(), r.network.active_count());
}

TEST(DivLdaTrain, SameSeedSameChain) {
  const Corpus c = divtopic::testing::planted_corpus(7, 60, 30).corpus;
  auto cfg = quick_config(6, 1.2);
  cfg.total_sweeps = 120;
  const auto a = divlda::train(c, cfg);
  const auto b = divlda::train(c, cfg);
  EXPECT_EQ(a.state, b.state);
  EXPECT_EQ(a.active, b.active);
}

TEST(DivLdaConfig, RejectsInvalidSettings) {
  const Corpus c = divtopic::testing::make_corpus(2, {{{0, 1}}});
  auto cfg = quick_config(3, 1.0);
  cfg.warmup_sweeps = 0;
  EXPECT_THROW(divlda::train(c, cfg), std::invalid_argument);
  cfg = quick_config(3, -1.0);
  EXPECT_THROW(divlda::train(c, cfg), std::invalid_argument);
  cfg = quick_config(3, 1.0);
  cfg.walk_alpha = 1.0;
  EXPECT_THROW(divlda::train(c, cfg), std::invalid_argument);
}
