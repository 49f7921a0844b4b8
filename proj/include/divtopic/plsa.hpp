#pragma once

#include <thread>
#include <vector>

#include "divtopic/common.hpp"
#include "divtopic/corpus.hpp"
#include "divtopic/model.hpp"

namespace divtopic::plsa {

/// theta: D x K, p(topic | doc). phi: K x V, p(word | topic).
struct PlsaState {
  DenseMatrix theta;
  DenseMatrix phi;

  std::size_t num_topics() const { return phi.rows(); }
  bool operator==(const PlsaState&) const = default;
};

/// Rows are normalized positive uniform draws (a symmetric Dirichlet(1) sample).
inline PlsaState init_random(const Corpus& corpus, std::size_t num_topics, std::uint64_t seed) {
  if (num_topics < 1) throw std::invalid_argument("need at least one topic");
  Rng rng(seed);
  PlsaState state{DenseMatrix(corpus.num_docs(), num_topics),
                  DenseMatrix(num_topics, corpus.vocab_size())};
  // -log(u) is Exp(1) = Gamma(1); normalizing gives an exact Dirichlet(1) row.
  auto draw_rows = [&rng](DenseMatrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      auto row = m.row(r);
      for (double& x : row) x = -std::log(1.0 - uniform01(rng));
      normalize(row);
    }
  };
  draw_rows(state.theta);
  draw_rows(state.phi);
  return state;
}

/// p(z = k | d, w) proportional to theta_dk * phi_kw. If every topic gives the
/// word zero mass the document's theta row is returned instead.
inline void e_step_posterior(const PlsaState& state, std::size_t d, std::size_t w, std::span<double> out) {
  const auto theta = state.theta.row(d);
  double total = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = theta[k] * state.phi(k, w);
    total += out[k];
  }
  if (total > 0.0) {
    for (double& x : out) x /= total;
  } else {
    std::copy(theta.begin(), theta.end(), out.begin());
  }
}

inline std::vector<double> e_step_posterior(const PlsaState& state, std::size_t d, std::size_t w) {
  std::vector<double> out(state.num_topics());
  e_step_posterior(state, d, w, out);
  return out;
}

/// Per-document posteriors, one row per document entry (in entry order).
using Posteriors = std::vector<DenseMatrix>;

struct MStepResult {
  PlsaState state;
  /// Expected token mass per topic.
  std::vector<double> sizes;
  /// Topics that received no mass; their phi rows are all zero.
  std::vector<std::size_t> empty_topics;
};

namespace detail {

// Normalizes unnormalized accumulators into a state. theta_acc is D x K, phi_acc K x V.
inline MStepResult finish_m_step(DenseMatrix theta_acc, DenseMatrix phi_acc) {
  MStepResult out;
  const std::size_t K = phi_acc.rows();
  out.sizes.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    out.sizes[k] = normalize(phi_acc.row(k));
    if (!(out.sizes[k] > 0.0)) out.empty_topics.push_back(k);
  }
  for (std::size_t d = 0; d < theta_acc.rows(); ++d) normalize(theta_acc.row(d));
  out.state = PlsaState{std::move(theta_acc), std::move(phi_acc)};
  return out;
}

// theta_acc <- theta_acc * P (row by row), phi_acc <- P^T * phi_acc.
inline void apply_walk(DenseMatrix& theta_acc, DenseMatrix& phi_acc, const DenseMatrix& P) {
  const std::size_t K = P.rows();
  std::vector<double> walked(K);
  for (std::size_t d = 0; d < theta_acc.rows(); ++d) {
    auto row = theta_acc.row(d);
    std::fill(walked.begin(), walked.end(), 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      if (row[k] == 0.0) continue;
      for (std::size_t j = 0; j < K; ++j) walked[j] += row[k] * P(k, j);
    }
    std::copy(walked.begin(), walked.end(), row.begin());
  }
  DenseMatrix out(K, phi_acc.cols(), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const auto src = phi_acc.row(k);
    for (std::size_t j = 0; j < K; ++j) {
      const double p = P(k, j);
      if (p == 0.0) continue;
      auto dst = out.row(j);
      for (std::size_t w = 0; w < src.size(); ++w) dst[w] += p * src[w];
    }
  }
  phi_acc = std::move(out);
}

}  // namespace detail

/// theta_dk proportional to sum_w n(d,w) p(k|d,w); phi_kw to sum_d n(d,w) p(k|d,w).
inline MStepResult m_step(const Corpus& corpus, const Posteriors& posteriors, std::size_t num_topics) {
  if (posteriors.size() != corpus.num_docs()) {
    throw std::invalid_argument("m_step: one posterior table per document required");
  }
  DenseMatrix theta_acc(corpus.num_docs(), num_topics, 0.0);
  DenseMatrix phi_acc(num_topics, corpus.vocab_size(), 0.0);
  for (std::size_t d = 0; d < corpus.num_docs(); ++d) {
    const auto& entries = corpus.document(d).entries();
    if (posteriors[d].rows() != entries.size() || posteriors[d].cols() != num_topics) {
      throw std::invalid_argument("m_step: posterior table shape mismatch");
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const double n = entries[i].count;
      for (std::size_t k = 0; k < num_topics; ++k) {
        const double m = n * posteriors[d](i, k);
        theta_acc(d, k) += m;
        phi_acc(k, entries[i].word) += m;
      }
    }
  }
  return detail::finish_m_step(std::move(theta_acc), std::move(phi_acc));
}

/// sum_d sum_w n(d,w) log sum_k theta_dk phi_kw, in nats. Returns -inf
/// (never NaN) when some observed word has zero probability.
inline double log_likelihood(const Corpus& corpus, const PlsaState& state) {
  const std::size_t K = state.num_topics();
  double ll = 0.0;
  for (std::size_t d = 0; d < corpus.num_docs(); ++d) {
    const auto theta = state.theta.row(d);
    for (const Entry& e : corpus.document(d).entries()) {
      double p = 0.0;
      for (std::size_t k = 0; k < K; ++k) p += theta[k] * state.phi(k, e.word);
      if (!(p > 0.0)) return -INFINITY;
      ll += e.count * std::log(p);
    }
  }
  return ll;
}

struct EmPassOptions {
  /// When set, every posterior takes one expected step on this transition matrix.
  const DenseMatrix* transition = nullptr;
  std::size_t threads = 1;
};

/// Fused E+M pass. Posteriors are formed per (d, w) and accumulated without
/// being stored. Because the walk is linear in the posterior, it is applied to
/// the accumulated statistics rather than to every token.
inline MStepResult em_pass(const Corpus& corpus, const PlsaState& state, const EmPassOptions& options = {}) {
  const std::size_t K = state.num_topics();
  const std::size_t V = corpus.vocab_size();
  const std::size_t D = corpus.num_docs();
  DenseMatrix theta_acc(D, K, 0.0);
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, D));
  std::vector<DenseMatrix> phi_parts(threads, DenseMatrix(K, V, 0.0));

  auto work = [&](std::size_t part) {
    const std::size_t begin = D * part / threads;
    const std::size_t end = D * (part + 1) / threads;
    DenseMatrix& phi_acc = phi_parts[part];
    std::vector<double> post(K);
    for (std::size_t d = begin; d < end; ++d) {
      auto theta_row = theta_acc.row(d);
      for (const Entry& e : corpus.document(d).entries()) {
        e_step_posterior(state, d, e.word, post);
        const double n = e.count;
        for (std::size_t k = 0; k < K; ++k) {
          const double m = n * post[k];
          theta_row[k] += m;
          phi_acc(k, e.word) += m;
        }
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
    for (std::size_t t = 1; t < threads; ++t) {
      auto dst = phi_parts[0].flat();
      const auto src = phi_parts[t].flat();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  DenseMatrix phi_acc = std::move(phi_parts[0]);
  if (options.transition) detail::apply_walk(theta_acc, phi_acc, *options.transition);
  return detail::finish_m_step(std::move(theta_acc), std::move(phi_acc));
}

struct PlsaConfig {
  std::size_t num_topics = 20;
  std::size_t max_iters = 100;
  std::uint64_t seed = 1;
  /// Stop once the relative likelihood improvement drops below tol (0 disables).
  double tol = 0.0;
  std::size_t threads = 1;
};

struct PlsaResult {
  PlsaState state;
  std::vector<double> sizes;
  std::vector<TracePoint> trace;
  std::size_t iterations = 0;
  bool converged = false;
};

inline PlsaResult train(const Corpus& corpus, const PlsaConfig& config) {
  if (config.max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  PlsaResult result;
  result.state = init_random(corpus, config.num_topics, config.seed);
  double previous = log_likelihood(corpus, result.state);
  for (std::size_t it = 1; it <= config.max_iters; ++it) {
    MStepResult step = em_pass(corpus, result.state, {nullptr, config.threads});
    result.state = std::move(step.state);
    result.sizes = std::move(step.sizes);
    const double ll = log_likelihood(corpus, result.state);
    const std::size_t active = static_cast<std::size_t>(
        std::count_if(result.sizes.begin(), result.sizes.end(), [](double s) { return s > 0.0; }));
    result.trace.push_back({it, ll, active});
    result.iterations = it;
    if (config.tol > 0.0 && std::isfinite(previous) &&
        (ll - previous) / std::abs(previous) < config.tol) {
      result.converged = true;
      break;
    }
    previous = ll;
  }
  return result;
}

inline TopicModel to_model(const PlsaResult& r, const Corpus& corpus) {
  TopicModel m;
  m.kind = "plsa";
  m.vocab_size = corpus.vocab_size();
  m.num_docs = corpus.num_docs();
  m.iteration = r.iterations;
  m.likelihood = r.trace.empty() ? log_likelihood(corpus, r.state) : r.trace.back().likelihood;
  m.token_total = static_cast<double>(corpus.token_total());
  for (std::size_t k = 0; k < r.state.num_topics(); ++k) m.topic_ids.push_back(k);
  m.sizes = r.sizes;
  m.phi = r.state.phi;
  m.theta = r.state.theta;
  return m;
}

}  // namespace divtopic::plsa
