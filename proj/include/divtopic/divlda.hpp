#pragma once

#include <optional>
#include <vector>

#include "divtopic/lda.hpp"
#include "divtopic/topic_network.hpp"

namespace divtopic::divlda {

using lda::LdaState;

struct DivLdaConfig {
  std::size_t start_topics = 20;
  double walk_alpha = 0.1;
  double gamma = 1.0;
  /// Plain Gibbs sweeps before the walk kicks in.
  std::size_t warmup_sweeps = 500;
  std::size_t refresh_every = 50;
  /// Maximum number of sweeps.
  std::size_t total_sweeps = 2000;
  /// Refreshes with an unchanged active count needed before stopping. Hard
  /// counts drain slowly, so this spans 500 sweeps at the default period.
  std::size_t active_patience = 10;
  /// Alpha is optimized after every sweep beyond this one.
  std::size_t alpha_burn_in = 50;
  std::uint64_t seed = 1;
  double beta = 0.01;
  /// Initial symmetric alpha; 0 means 50 / K.
  double alpha0 = 0.0;
  OrganicNorm organic_norm = OrganicNorm::WithSelf;
  /// Likelihood is recorded every this many sweeps, at every refresh and at the end.
  std::size_t trace_every = 10;

  void validate() const {
    if (start_topics < 1) throw std::invalid_argument("start_topics must be >= 1");
    if (warmup_sweeps < 1) throw std::invalid_argument("warmup_sweeps must be >= 1");
    if (refresh_every < 1) throw std::invalid_argument("refresh_every must be >= 1");
    if (trace_every < 1) throw std::invalid_argument("trace_every must be >= 1");
    if (gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
    if (!(walk_alpha >= 0.0 && walk_alpha < 1.0)) throw std::invalid_argument("walk_alpha must lie in [0, 1)");
  }
};

struct DivLdaResult {
  LdaState state;
  /// Topics alive at the end (index into the starting topic set).
  std::vector<bool> active;
  std::vector<TracePoint> trace;
  TopicNetwork network;
  std::size_t sweeps = 0;
  bool converged = false;

  TopicModel to_model() const { return lda::to_model(state, "divlda", sweeps, active); }
};

/// Gibbs sweep where each freshly sampled topic takes one sampled step on the
/// frozen network before the counts are incremented. Topics no longer active in
/// the network are removed from the candidate set.
inline void sweep_with_walk(LdaState& state, const TopicNetwork& network, Rng& rng) {
  std::vector<char> allowed(state.num_topics());
  for (std::size_t k = 0; k < allowed.size(); ++k) allowed[k] = network.is_active(k) ? 1 : 0;
  lda::detail::gibbs_sweep(state, rng, &network.transition(), allowed);
}

inline DivLdaResult train(const Corpus& corpus, const DivLdaConfig& config) {
  config.validate();
  const std::size_t K = config.start_topics;
  Rng rng(config.seed);
  DivLdaResult result;
  LdaState& state = result.state;
  state = lda::init_random(corpus, K, lda::default_alpha0(K, config.alpha0), config.beta, rng);
  // Hard counts: a topic is alive while it holds at least one token.
  TopicNetwork network(K, config.walk_alpha, config.gamma, 1.0, config.organic_norm);
  std::optional<std::size_t> last_active;
  std::size_t stable_refreshes = 0;
  std::vector<char> all_allowed(K, 1);

  for (std::size_t it = 1; it <= config.total_sweeps; ++it) {
    const bool walking = it > config.warmup_sweeps;
    if (walking) {
      sweep_with_walk(state, network, rng);
    } else {
      lda::detail::gibbs_sweep(state, rng, nullptr, all_allowed);
    }
    if (it > config.alpha_burn_in) state.alpha = lda::optimize_alpha(state);

    const bool refresh_now =
        it >= config.warmup_sweeps && (it - config.warmup_sweeps) % config.refresh_every == 0;
    if (refresh_now) {
      std::vector<double> sizes(K);
      for (std::size_t k = 0; k < K; ++k) sizes[k] = static_cast<double>(state.n_k[k]);
      network.refresh(lda::estimate_phi(state), sizes);
      const std::size_t active = network.active_count();
      stable_refreshes = (last_active && *last_active == active) ? stable_refreshes + 1 : 0;
      last_active = active;
    }
    if (refresh_now || it % config.trace_every == 0 || it == config.total_sweeps) {
      result.trace.push_back({it, lda::log_likelihood(state), network.active_count()});
    }
    result.sweeps = it;
    if (walking && refresh_now && stable_refreshes >= config.active_patience) {
      result.converged = true;
      break;
    }
  }
  result.active = network.active();
  result.network = std::move(network);
  return result;
}

}  // namespace divtopic::divlda
