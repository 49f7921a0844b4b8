#pragma once

#include <string>
#include <vector>

#include "divtopic/common.hpp"

namespace divtopic {

/// Cosine similarity of two non-negative vectors. A zero-norm input means the
/// caller forgot to exclude a dead topic.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw std::invalid_argument("cosine_similarity: zero-norm input");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

/// Pairwise cosine similarities among active rows of `phi`. Inactive rows and
/// columns are zero; the active diagonal is 1.
inline DenseMatrix similarity_matrix(const DenseMatrix& phi, const std::vector<bool>& active) {
  const std::size_t K = phi.rows();
  DenseMatrix W(K, K, 0.0);
  for (std::size_t i = 0; i < K; ++i) {
    if (!active[i]) continue;
    W(i, i) = 1.0;
    for (std::size_t j = i + 1; j < K; ++j) {
      if (!active[j]) continue;
      const double s = cosine_similarity(phi.row(i), phi.row(j));
      W(i, j) = s;
      W(j, i) = s;
    }
  }
  return W;
}

/// How the walk budget is shared out in the organic transitions.
enum class OrganicNorm {
  /// Neighbour weights are normalized over all active topics including the
  /// topic itself (w(i,i) = 1); the self share stays on the diagonal. Leaving
  /// mass scales with how similar the neighbours actually are.
  WithSelf,
  /// Neighbour weights are normalized over the other active topics only, so
  /// the full walk budget leaves whenever any neighbour has positive similarity.
  NeighborsOnly,
};

inline std::string to_string(OrganicNorm n) { return n == OrganicNorm::WithSelf ? "with-self" : "neighbors"; }

inline OrganicNorm parse_organic_norm(const std::string& s) {
  if (s == "with-self") return OrganicNorm::WithSelf;
  if (s == "neighbors") return OrganicNorm::NeighborsOnly;
  throw std::invalid_argument("unknown organic normalization '" + s + "'");
}

/// Organic transitions: stay with probability 1 - walk_alpha, otherwise move in
/// proportion to similarity. Inactive sources and active topics with no similar
/// neighbour get identity rows.
inline DenseMatrix build_organic(const DenseMatrix& W, double walk_alpha, const std::vector<bool>& active,
                                 OrganicNorm norm = OrganicNorm::WithSelf) {
  if (!(walk_alpha >= 0.0 && walk_alpha < 1.0)) {
    throw std::invalid_argument("walk_alpha must lie in [0, 1)");
  }
  const std::size_t K = W.rows();
  DenseMatrix P0(K, K, 0.0);
  for (std::size_t i = 0; i < K; ++i) {
    double neighbor_mass = 0.0;
    if (active[i]) {
      for (std::size_t j = 0; j < K; ++j) {
        if (j != i && active[j]) neighbor_mass += W(i, j);
      }
    }
    if (!(neighbor_mass > 0.0) || walk_alpha == 0.0) {
      P0(i, i) = 1.0;
      continue;
    }
    const double denom = norm == OrganicNorm::WithSelf ? 1.0 + neighbor_mass : neighbor_mass;
    double leave = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      if (j != i && active[j]) {
        P0(i, j) = walk_alpha * W(i, j) / denom;
        leave += P0(i, j);
      }
    }
    P0(i, i) = 1.0 - leave;
  }
  return P0;
}

struct ReinforceResult {
  DenseMatrix transition;
  /// Rows whose normalizer D_i vanished and were replaced by identity rows.
  std::vector<std::size_t> degenerate_rows;
};

/// p(i,j) = p0(i,j) N_j^gamma / D_i, with D_i = sum_j p0(i,j) N_j^gamma and 0^0 = 1.
inline ReinforceResult reinforce(const DenseMatrix& P0, std::span<const double> sizes, double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("gamma must be non-negative");
  const std::size_t K = P0.rows();
  std::vector<double> weight(K);
  for (std::size_t j = 0; j < K; ++j) {
    if (sizes[j] < 0.0) throw std::invalid_argument("topic sizes must be non-negative");
    weight[j] = std::pow(sizes[j], gamma);
  }
  ReinforceResult out{DenseMatrix(K, K, 0.0), {}};
  for (std::size_t i = 0; i < K; ++i) {
    double norm = 0.0;
    for (std::size_t j = 0; j < K; ++j) norm += P0(i, j) * weight[j];
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      out.transition(i, i) = 1.0;
      out.degenerate_rows.push_back(i);
      continue;
    }
    for (std::size_t j = 0; j < K; ++j) out.transition(i, j) = P0(i, j) * weight[j] / norm;
  }
  return out;
}

/// One expected walk step: out(j) = sum_k in(k) p(k, j).
inline void walk_step(std::span<const double> assignment, const DenseMatrix& P, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t k = 0; k < P.rows(); ++k) {
    const double a = assignment[k];
    if (a == 0.0) continue;
    const auto row = P.row(k);
    for (std::size_t j = 0; j < P.cols(); ++j) out[j] += a * row[j];
  }
}

inline std::vector<double> walk_step(std::span<const double> assignment, const DenseMatrix& P) {
  std::vector<double> out(P.cols());
  walk_step(assignment, P, out);
  return out;
}

/// One sampled walk step from `current`. A pure self-loop row consumes no
/// randomness, so an identity network leaves the caller's RNG stream untouched.
inline std::size_t walk_sample(std::size_t current, const DenseMatrix& P, Rng& rng) {
  const auto row = P.row(current);
  if (row[current] >= 1.0) return current;
  return sample_discrete(row, 1.0, rng);
}

/// Topic similarity network with size-reinforced transitions. Inactive topics
/// keep their index; the active mask only ever shrinks.
class TopicNetwork {
 public:
  TopicNetwork() = default;
  TopicNetwork(std::size_t num_topics, double walk_alpha, double gamma, double activity_threshold,
               OrganicNorm norm = OrganicNorm::WithSelf)
      : walk_alpha_(walk_alpha), gamma_(gamma), threshold_(activity_threshold), norm_(norm),
        similarity_(num_topics, num_topics, 0.0), organic_(num_topics, num_topics, 0.0),
        transition_(num_topics, num_topics, 0.0), sizes_(num_topics, 0.0),
        active_(num_topics, true) {
    if (!(walk_alpha >= 0.0 && walk_alpha < 1.0)) {
      throw std::invalid_argument("walk_alpha must lie in [0, 1)");
    }
    if (gamma < 0.0) throw std::invalid_argument("gamma must be non-negative");
    for (std::size_t k = 0; k < num_topics; ++k) {
      similarity_(k, k) = 1.0;
      organic_(k, k) = 1.0;
      transition_(k, k) = 1.0;
    }
  }

  /// Recomputes, in order: active mask, similarities, organic and reinforced
  /// transitions. Returns the topics newly deactivated by this call.
  std::vector<std::size_t> refresh(const DenseMatrix& phi, std::span<const double> sizes) {
    const std::size_t K = num_topics();
    if (phi.rows() != K || sizes.size() != K) {
      throw std::invalid_argument("TopicNetwork::refresh: dimension mismatch");
    }
    std::vector<std::size_t> pruned;
    for (std::size_t k = 0; k < K; ++k) {
      if (active_[k] && sizes[k] < threshold_) {
        active_[k] = false;
        pruned.push_back(k);
      }
      sizes_[k] = active_[k] ? sizes[k] : 0.0;
    }
    similarity_ = similarity_matrix(phi, active_);
    organic_ = build_organic(similarity_, walk_alpha_, active_, norm_);
    auto reinforced = reinforce(organic_, sizes_, gamma_);
    transition_ = std::move(reinforced.transition);
    degenerate_rows_ = std::move(reinforced.degenerate_rows);
    ++refreshes_;
    return pruned;
  }

  std::size_t num_topics() const { return active_.size(); }
  std::size_t active_count() const {
    return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), true));
  }
  bool is_active(std::size_t k) const { return active_[k]; }
  const std::vector<bool>& active() const { return active_; }

  const DenseMatrix& similarity() const { return similarity_; }
  const DenseMatrix& organic() const { return organic_; }
  const DenseMatrix& transition() const { return transition_; }
  std::span<const double> sizes() const { return sizes_; }
  const std::vector<std::size_t>& degenerate_rows() const { return degenerate_rows_; }
  std::size_t refresh_count() const { return refreshes_; }

  double walk_alpha() const { return walk_alpha_; }
  double gamma() const { return gamma_; }
  double activity_threshold() const { return threshold_; }
  OrganicNorm organic_norm() const { return norm_; }

  void walk_step(std::span<const double> assignment, std::span<double> out) const {
    divtopic::walk_step(assignment, transition_, out);
  }
  std::size_t walk_sample(std::size_t current, Rng& rng) const {
    return divtopic::walk_sample(current, transition_, rng);
  }

 private:
  double walk_alpha_ = 0.0;
  double gamma_ = 0.0;
  double threshold_ = 0.0;
  OrganicNorm norm_ = OrganicNorm::WithSelf;
  DenseMatrix similarity_;
  DenseMatrix organic_;
  DenseMatrix transition_;
  std::vector<double> sizes_;
  std::vector<bool> active_;
  std::vector<std::size_t> degenerate_rows_;
  std::size_t refreshes_ = 0;
};

}  // namespace divtopic
