#pragma once

#include <map>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "divtopic/common.hpp"
#include "divtopic/corpus.hpp"
#include "divtopic/model.hpp"
#include "divtopic/topic_network.hpp"

namespace divtopic::lda {

/// Collapsed Gibbs state. Token order within a document follows its entry
/// order, each word repeated `count` times.
struct LdaState {
  std::vector<std::vector<std::uint32_t>> words;        // per document token stream
  std::vector<std::vector<std::uint32_t>> assignments;  // z, parallel to words
  CountMatrix n_dk;                                     // D x K
  CountMatrix n_kw;                                     // K x V
  std::vector<std::int64_t> n_k;
  std::vector<double> alpha;  // asymmetric Dirichlet over topics
  double beta = 0.01;         // symmetric Dirichlet over words

  std::size_t num_topics() const { return n_k.size(); }
  std::size_t vocab_size() const { return n_kw.cols(); }
  std::size_t num_docs() const { return words.size(); }
  bool operator==(const LdaState&) const = default;
};

/// Uniformly random initial assignments; counts built from them.
inline LdaState init_random(const Corpus& corpus, std::size_t num_topics, double alpha0, double beta, Rng& rng) {
  if (num_topics < 1) throw std::invalid_argument("need at least one topic");
  if (!(alpha0 > 0.0) || !(beta > 0.0)) throw std::invalid_argument("alpha0 and beta must be positive");
  LdaState s;
  s.n_dk = CountMatrix(corpus.num_docs(), num_topics, 0);
  s.n_kw = CountMatrix(num_topics, corpus.vocab_size(), 0);
  s.n_k.assign(num_topics, 0);
  s.alpha.assign(num_topics, alpha0);
  s.beta = beta;
  s.words.resize(corpus.num_docs());
  s.assignments.resize(corpus.num_docs());
  for (std::size_t d = 0; d < corpus.num_docs(); ++d) {
    s.words[d] = corpus.document(d).tokens();
    auto& z = s.assignments[d];
    z.resize(s.words[d].size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const auto k = static_cast<std::uint32_t>(uniform_index(rng, num_topics));
      z[i] = k;
      ++s.n_dk(d, k);
      ++s.n_kw(k, s.words[d][i]);
      ++s.n_k[k];
    }
  }
  return s;
}

/// Unnormalized (n_dk + alpha_k)(n_kw + beta)/(n_k + V beta), with the current
/// token already removed from the counts. Topics with allowed[k] == 0 get 0.
inline double gibbs_conditional(const LdaState& s, std::size_t d, std::size_t w, std::span<double> out,
                                std::span<const char> allowed = {}) {
  const double vbeta = static_cast<double>(s.vocab_size()) * s.beta;
  double total = 0.0;
  for (std::size_t k = 0; k < s.num_topics(); ++k) {
    if (!allowed.empty() && !allowed[k]) {
      out[k] = 0.0;
      continue;
    }
    out[k] = (static_cast<double>(s.n_dk(d, k)) + s.alpha[k]) *
             (static_cast<double>(s.n_kw(k, w)) + s.beta) / (static_cast<double>(s.n_k[k]) + vbeta);
    total += out[k];
  }
  return total;
}

namespace detail {

/// One pass over all tokens: decrement, sample from the conditional, optionally
/// take one sampled walk step, increment.
inline void gibbs_sweep(LdaState& s, Rng& rng, const DenseMatrix* transition, std::span<const char> allowed) {
  std::vector<double> weights(s.num_topics());
  for (std::size_t d = 0; d < s.num_docs(); ++d) {
    const auto& words = s.words[d];
    auto& z = s.assignments[d];
    for (std::size_t i = 0; i < words.size(); ++i) {
      const std::uint32_t w = words[i];
      std::uint32_t k = z[i];
      --s.n_dk(d, k);
      --s.n_kw(k, w);
      --s.n_k[k];
      const double total = gibbs_conditional(s, d, w, weights, allowed);
      k = static_cast<std::uint32_t>(sample_discrete(weights, total, rng));
      if (transition) k = static_cast<std::uint32_t>(walk_sample(k, *transition, rng));
      z[i] = k;
      ++s.n_dk(d, k);
      ++s.n_kw(k, w);
      ++s.n_k[k];
    }
  }
}

}  // namespace detail

inline void sweep(LdaState& state, Rng& rng) { detail::gibbs_sweep(state, rng, nullptr, {}); }

/// Exact integer bookkeeping check: document, topic-word and topic totals agree
/// with the assignments.
inline bool counts_consistent(const LdaState& s) {
  CountMatrix n_dk(s.n_dk.rows(), s.n_dk.cols(), 0);
  CountMatrix n_kw(s.n_kw.rows(), s.n_kw.cols(), 0);
  std::vector<std::int64_t> n_k(s.num_topics(), 0);
  for (std::size_t d = 0; d < s.num_docs(); ++d) {
    for (std::size_t i = 0; i < s.words[d].size(); ++i) {
      const auto k = s.assignments[d][i];
      ++n_dk(d, k);
      ++n_kw(k, s.words[d][i]);
      ++n_k[k];
    }
  }
  return n_dk == s.n_dk && n_kw == s.n_kw && n_k == s.n_k;
}

/// theta_dk = (n_dk + alpha_k) / sum_k' (n_dk' + alpha_k').
inline DenseMatrix estimate_theta(const LdaState& s) {
  DenseMatrix theta(s.num_docs(), s.num_topics());
  for (std::size_t d = 0; d < s.num_docs(); ++d) {
    auto row = theta.row(d);
    for (std::size_t k = 0; k < s.num_topics(); ++k) row[k] = static_cast<double>(s.n_dk(d, k)) + s.alpha[k];
    normalize(row);
  }
  return theta;
}

/// phi_kw = (n_kw + beta) / (n_k + V beta).
inline DenseMatrix estimate_phi(const LdaState& s) {
  const double vbeta = static_cast<double>(s.vocab_size()) * s.beta;
  DenseMatrix phi(s.num_topics(), s.vocab_size());
  for (std::size_t k = 0; k < s.num_topics(); ++k) {
    const double denom = static_cast<double>(s.n_k[k]) + vbeta;
    for (std::size_t w = 0; w < s.vocab_size(); ++w) {
      phi(k, w) = (static_cast<double>(s.n_kw(k, w)) + s.beta) / denom;
    }
  }
  return phi;
}

struct AlphaOptions {
  double tolerance = 1e-6;
  std::size_t max_iters = 1000;
  double floor = 1e-8;
};

/// Fixed-point maximization of the Dirichlet-multinomial evidence over alpha:
///   alpha_k <- alpha_k * sum_d [psi(n_dk + alpha_k) - psi(alpha_k)]
///                      / sum_d [psi(n_d + A) - psi(A)],   A = sum_k alpha_k.
/// Documents are grouped by count so each digamma difference is evaluated once
/// per distinct value. Non-finite intermediate values leave alpha unchanged.
inline std::vector<double> optimize_alpha(const CountMatrix& n_dk, std::vector<double> alpha,
                                          const AlphaOptions& options = {}) {
  const std::size_t K = alpha.size();
  std::vector<std::map<std::int64_t, std::int64_t>> topic_hist(K);
  std::map<std::int64_t, std::int64_t> length_hist;
  for (std::size_t d = 0; d < n_dk.rows(); ++d) {
    std::int64_t len = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const std::int64_t n = n_dk(d, k);
      if (n > 0) ++topic_hist[k][n];
      len += n;
    }
    if (len > 0) ++length_hist[len];
  }
  if (length_hist.empty()) return alpha;

  using boost::math::digamma;
  const std::vector<double> original = alpha;
  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    const double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    double denom = 0.0;
    const double psi_total = digamma(total);
    for (const auto& [len, docs] : length_hist) denom += static_cast<double>(docs) * (digamma(len + total) - psi_total);
    if (!std::isfinite(denom) || !(denom > 0.0)) return original;
    double max_change = 0.0;
    std::vector<double> next(K);
    for (std::size_t k = 0; k < K; ++k) {
      double num = 0.0;
      const double psi_k = digamma(alpha[k]);
      for (const auto& [n, docs] : topic_hist[k]) num += static_cast<double>(docs) * (digamma(n + alpha[k]) - psi_k);
      if (!std::isfinite(num)) return original;
      next[k] = std::max(options.floor, alpha[k] * num / denom);
      max_change = std::max(max_change, std::abs(next[k] - alpha[k]) / alpha[k]);
    }
    alpha = std::move(next);
    if (max_change < options.tolerance) break;
  }
  return alpha;
}

inline std::vector<double> optimize_alpha(const LdaState& state, const AlphaOptions& options = {}) {
  return optimize_alpha(state.n_dk, state.alpha, options);
}

/// Document log-likelihood with the point estimates of theta and phi.
inline double log_likelihood(const LdaState& s) {
  const DenseMatrix theta = estimate_theta(s);
  const DenseMatrix phi = estimate_phi(s);
  double ll = 0.0;
  for (std::size_t d = 0; d < s.num_docs(); ++d) {
    for (std::uint32_t w : s.words[d]) {
      double p = 0.0;
      for (std::size_t k = 0; k < s.num_topics(); ++k) p += theta(d, k) * phi(k, w);
      ll += std::log(p);
    }
  }
  return ll;
}

struct LdaConfig {
  std::size_t num_topics = 20;
  std::size_t sweeps = 1000;
  /// Alpha is optimized after every sweep beyond this one.
  std::size_t burn_in = 100;
  std::uint64_t seed = 1;
  /// Initial symmetric alpha; 0 means 50 / K.
  double alpha0 = 0.0;
  double beta = 0.01;
  bool optimize_alpha = true;
  /// Likelihood is recorded every this many sweeps (and at the last one).
  std::size_t trace_every = 1;
};

struct LdaResult {
  LdaState state;
  std::vector<TracePoint> trace;
  std::size_t sweeps = 0;
};

inline double default_alpha0(std::size_t num_topics, double alpha0) {
  return alpha0 > 0.0 ? alpha0 : 50.0 / static_cast<double>(num_topics);
}

inline LdaResult train(const Corpus& corpus, const LdaConfig& config) {
  Rng rng(config.seed);
  LdaResult result;
  result.state = init_random(corpus, config.num_topics, default_alpha0(config.num_topics, config.alpha0),
                             config.beta, rng);
  for (std::size_t it = 1; it <= config.sweeps; ++it) {
    sweep(result.state, rng);
    if (config.optimize_alpha && it > config.burn_in) result.state.alpha = optimize_alpha(result.state);
    if (it % config.trace_every == 0 || it == config.sweeps) {
      const auto active = static_cast<std::size_t>(
          std::count_if(result.state.n_k.begin(), result.state.n_k.end(), [](std::int64_t n) { return n > 0; }));
      result.trace.push_back({it, log_likelihood(result.state), active});
    }
    result.sweeps = it;
  }
  return result;
}

/// Model export over the topics flagged in `keep` (all when empty).
inline TopicModel to_model(const LdaState& s, std::string kind, std::size_t iteration,
                           const std::vector<bool>& keep = {}) {
  TopicModel m;
  m.kind = std::move(kind);
  m.vocab_size = s.vocab_size();
  m.num_docs = s.num_docs();
  m.iteration = iteration;
  m.likelihood = log_likelihood(s);
  m.token_total = static_cast<double>(std::accumulate(s.n_k.begin(), s.n_k.end(), std::int64_t{0}));
  const DenseMatrix phi = estimate_phi(s);
  const DenseMatrix theta = estimate_theta(s);
  for (std::size_t k = 0; k < s.num_topics(); ++k) {
    if (keep.empty() || keep[k]) m.topic_ids.push_back(k);
  }
  const std::size_t K = m.topic_ids.size();
  m.phi = DenseMatrix(K, s.vocab_size());
  m.theta = DenseMatrix(s.num_docs(), K);
  for (std::size_t j = 0; j < K; ++j) {
    const std::size_t k = m.topic_ids[j];
    m.sizes.push_back(static_cast<double>(s.n_k[k]));
    std::copy(phi.row(k).begin(), phi.row(k).end(), m.phi.row(j).begin());
    for (std::size_t d = 0; d < s.num_docs(); ++d) m.theta(d, j) = theta(d, k);
  }
  for (std::size_t d = 0; d < s.num_docs(); ++d) normalize(m.theta.row(d));
  return m;
}

}  // namespace divtopic::lda
