#pragma once

#include <optional>
#include <vector>

#include "divtopic/model.hpp"
#include "divtopic/plsa.hpp"
#include "divtopic/topic_network.hpp"

namespace divtopic::divplsa {

using plsa::PlsaState;

struct DivPlsaConfig {
  std::size_t start_topics = 20;
  /// Probability of leaving the current topic in one walk step.
  double walk_alpha = 0.1;
  /// Reinforcement exponent on topic sizes.
  double gamma = 1.5;
  /// Plain EM iterations before the walk kicks in.
  std::size_t warmup_iters = 50;
  std::size_t refresh_every = 10;
  /// Refreshes with an unchanged active count needed before stopping.
  std::size_t active_patience = 3;
  std::size_t max_iters = 300;
  /// Relative likelihood change allowed over the last `convergence_window` iterations.
  double tol = 1e-6;
  std::size_t convergence_window = 10;
  /// Soft topic sizes below this many tokens are pruned.
  double activity_threshold = 0.5;
  OrganicNorm organic_norm = OrganicNorm::WithSelf;
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  void validate() const {
    if (start_topics < 1) throw std::invalid_argument("start_topics must be >= 1");
    if (warmup_iters < 1) throw std::invalid_argument("warmup_iters must be >= 1");
    if (refresh_every < 1) throw std::invalid_argument("refresh_every must be >= 1");
    if (gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
    if (!(walk_alpha >= 0.0 && walk_alpha < 1.0)) throw std::invalid_argument("walk_alpha must lie in [0, 1)");
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  }
};

struct DivPlsaTrace {
  std::vector<TracePoint> points;
  /// Topic sizes after each iteration (length start_topics, pruned topics 0).
  std::vector<std::vector<double>> sizes;
};

struct DivPlsaResult {
  /// Compacted to the surviving topics; theta renormalized over them.
  PlsaState state;
  /// Original index of every surviving topic.
  std::vector<std::size_t> topic_ids;
  std::vector<double> sizes;
  DivPlsaTrace trace;
  TopicNetwork network;
  std::size_t iterations = 0;
  bool converged = false;
  double likelihood = 0.0;
};

/// p(z_hat | d, w): the plain posterior pushed one expected step along the network.
inline std::vector<double> e_step_with_walk(const PlsaState& state, const TopicNetwork& network,
                                            std::size_t d, std::size_t w) {
  const std::vector<double> post = plsa::e_step_posterior(state, d, w);
  std::vector<double> out(post.size());
  network.walk_step(post, out);
  return out;
}

/// Same updates as the plain M-step, fed with walked posteriors; the returned
/// sizes are the walked token masses N_k.
inline plsa::MStepResult m_step_with_sizes(const Corpus& corpus, const plsa::Posteriors& walked,
                                           std::size_t num_topics) {
  return plsa::m_step(corpus, walked, num_topics);
}

/// Removes a pruned topic from the model: zero theta column (rows renormalized)
/// and zero phi row.
inline void zero_topic(PlsaState& state, std::size_t k) {
  for (std::size_t d = 0; d < state.theta.rows(); ++d) state.theta(d, k) = 0.0;
  std::fill(state.phi.row(k).begin(), state.phi.row(k).end(), 0.0);
}

inline void renormalize_theta(PlsaState& state, const std::vector<bool>& active) {
  const std::size_t K = state.num_topics();
  const double live = static_cast<double>(std::count(active.begin(), active.end(), true));
  for (std::size_t d = 0; d < state.theta.rows(); ++d) {
    auto row = state.theta.row(d);
    if (normalize(row) > 0.0) continue;
    for (std::size_t k = 0; k < K; ++k) row[k] = active[k] ? 1.0 / live : 0.0;
  }
}

struct Compacted {
  PlsaState state;
  std::vector<std::size_t> topic_ids;
  std::vector<double> sizes;
};

inline Compacted compact(const PlsaState& state, std::span<const double> sizes, const std::vector<bool>& active) {
  Compacted out;
  for (std::size_t k = 0; k < active.size(); ++k) {
    if (active[k]) out.topic_ids.push_back(k);
  }
  const std::size_t K = out.topic_ids.size();
  out.state.theta = DenseMatrix(state.theta.rows(), K);
  out.state.phi = DenseMatrix(K, state.phi.cols());
  for (std::size_t j = 0; j < K; ++j) {
    const std::size_t k = out.topic_ids[j];
    out.sizes.push_back(sizes[k]);
    std::copy(state.phi.row(k).begin(), state.phi.row(k).end(), out.state.phi.row(j).begin());
    for (std::size_t d = 0; d < state.theta.rows(); ++d) out.state.theta(d, j) = state.theta(d, k);
  }
  for (std::size_t d = 0; d < out.state.theta.rows(); ++d) normalize(out.state.theta.row(d));
  return out;
}

inline DivPlsaResult train(const Corpus& corpus, const DivPlsaConfig& config) {
  config.validate();
  const std::size_t K = config.start_topics;
  PlsaState state = plsa::init_random(corpus, K, config.seed);
  TopicNetwork network(K, config.walk_alpha, config.gamma, config.activity_threshold, config.organic_norm);
  DivPlsaResult result;
  std::vector<double> sizes(K, 0.0);
  std::optional<std::size_t> last_active;
  std::size_t stable_refreshes = 0;

  for (std::size_t it = 1; it <= config.max_iters; ++it) {
    const bool walking = it > config.warmup_iters;
    plsa::MStepResult step = plsa::em_pass(
        corpus, state, {walking ? &network.transition() : nullptr, config.threads});
    state = std::move(step.state);
    sizes = std::move(step.sizes);

    const bool refresh_now =
        it >= config.warmup_iters && (it - config.warmup_iters) % config.refresh_every == 0;
    if (refresh_now) {
      for (std::size_t k : network.refresh(state.phi, sizes)) zero_topic(state, k);
      renormalize_theta(state, network.active());
      const std::size_t active = network.active_count();
      stable_refreshes = (last_active && *last_active == active) ? stable_refreshes + 1 : 0;
      last_active = active;
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (!network.is_active(k)) sizes[k] = 0.0;
    }

    const double ll = plsa::log_likelihood(corpus, state);
    result.trace.points.push_back({it, ll, network.active_count()});
    result.trace.sizes.push_back(sizes);
    result.iterations = it;

    const auto& pts = result.trace.points;
    if (walking && stable_refreshes >= config.active_patience && pts.size() > config.convergence_window) {
      const double before = pts[pts.size() - 1 - config.convergence_window].likelihood;
      if (std::abs(ll - before) / std::abs(ll) < config.tol) {
        result.converged = true;
        break;
      }
    }
  }

  Compacted c = compact(state, sizes, network.active());
  result.state = std::move(c.state);
  result.topic_ids = std::move(c.topic_ids);
  result.sizes = std::move(c.sizes);
  result.network = std::move(network);
  result.likelihood = result.trace.points.back().likelihood;
  return result;
}

inline TopicModel to_model(const DivPlsaResult& r, const Corpus& corpus) {
  TopicModel m;
  m.kind = "divplsa";
  m.vocab_size = corpus.vocab_size();
  m.num_docs = corpus.num_docs();
  m.iteration = r.iterations;
  m.likelihood = r.likelihood;
  m.token_total = static_cast<double>(corpus.token_total());
  m.topic_ids = r.topic_ids;
  m.sizes = r.sizes;
  m.phi = r.state.phi;
  m.theta = r.state.theta;
  return m;
}

}  // namespace divtopic::divplsa
