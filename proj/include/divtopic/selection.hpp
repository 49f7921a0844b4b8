#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "divtopic/model.hpp"
#include "divtopic/topic_network.hpp"

namespace divtopic::selection {

struct RankedTopic {
  std::size_t topic_id = 0;
  double score = 0.0;
  double proportion = 0.0;
};

struct TopicRanking {
  std::vector<RankedTopic> items;
  /// Fewer topics than requested were available.
  bool truncated = false;
  /// False when an iterative selector hit its iteration cap.
  bool converged = true;

  std::size_t size() const { return items.size(); }
};

namespace detail {

inline std::vector<double> relevance(const TopicModel& model) {
  std::vector<double> rel(model.num_topics());
  for (std::size_t r = 0; r < rel.size(); ++r) rel[r] = model.proportion(r);
  return rel;
}

// Rows whose topics still hold mass; selection never returns a dead topic.
inline std::vector<std::size_t> live_rows(const TopicModel& model) {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < model.num_topics(); ++r) {
    if (model.sizes[r] > 0.0) rows.push_back(r);
  }
  return rows;
}

// Orders by score descending, ties by lower topic id, and keeps the first k.
inline TopicRanking rank_rows(const TopicModel& model, const std::vector<std::size_t>& rows,
                              const std::vector<double>& score, std::size_t k) {
  std::vector<std::size_t> order = rows;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return model.topic_ids[a] < model.topic_ids[b];
  });
  TopicRanking out;
  out.truncated = k > order.size();
  order.resize(std::min(k, order.size()));
  for (std::size_t r : order) out.items.push_back({model.topic_ids[r], score[r], model.proportion(r)});
  return out;
}

}  // namespace detail

/// Largest topics first; ties by lower topic id.
inline TopicRanking top_k_by_size(const TopicModel& model, std::size_t k) {
  return detail::rank_rows(model, detail::live_rows(model), model.sizes, k);
}

/// Greedy maximal marginal relevance. Relevance is the topic's token
/// proportion, redundancy its largest cosine similarity to an already selected
/// topic: pick argmax lambda * rel - (1 - lambda) * max_sim.
inline TopicRanking mmr_select(const TopicModel& model, std::size_t k, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("mmr lambda must lie in [0, 1]");
  const std::vector<double> rel = detail::relevance(model);
  std::vector<std::size_t> pool = detail::live_rows(model);
  TopicRanking out;
  out.truncated = k > pool.size();
  std::vector<double> max_sim(model.num_topics(), 0.0);
  while (out.items.size() < k && !pool.empty()) {
    const bool first = out.items.empty();
    std::size_t best_pos = 0;
    double best_score = -INFINITY;
    for (std::size_t pos = 0; pos < pool.size(); ++pos) {
      const std::size_t r = pool[pos];
      const double s = first ? rel[r] : lambda * rel[r] - (1.0 - lambda) * max_sim[r];
      const std::size_t best_row = pool[best_pos];
      if (s > best_score || (s == best_score && model.topic_ids[r] < model.topic_ids[best_row])) {
        best_score = s;
        best_pos = pos;
      }
    }
    const std::size_t pick = pool[best_pos];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best_pos));
    out.items.push_back({model.topic_ids[pick], first ? lambda * rel[pick] : best_score, model.proportion(pick)});
    for (std::size_t r : pool) {
      max_sim[r] = std::max(max_sim[r], cosine_similarity(model.phi.row(r), model.phi.row(pick)));
    }
  }
  return out;
}

enum class DivRankVariant {
  /// Visit mass accumulates pi every round.
  Cumulative,
  /// Visit mass is the current pi.
  Pointwise,
};

struct DivRankOptions {
  DivRankVariant variant = DivRankVariant::Cumulative;
  /// Self-loop weight of the organic walk.
  double alpha_dr = 0.25;
  /// Weight of the reinforced walk against the preference vector.
  double lambda_dr = 0.9;
  std::size_t iters = 1000;
  double tolerance = 1e-10;
};

struct DivRankScores {
  std::vector<double> pi;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Cumulative DivRank over a similarity graph:
///   pi'(j) = (1 - lambda) pref(j) + lambda sum_i pi(i) p0(i,j) V(j) / sum_j' p0(i,j') V(j'),
/// where V accumulates visit mass (starts at 1, grows by pi every round) or,
/// in the pointwise variant, is the current pi.
inline DivRankScores divrank_scores(const DenseMatrix& similarity, std::span<const double> preference,
                                    const DivRankOptions& options) {
  if (!(options.lambda_dr > 0.0 && options.lambda_dr < 1.0)) {
    throw std::invalid_argument("lambda_dr must lie in (0, 1)");
  }
  if (!(options.alpha_dr >= 0.0 && options.alpha_dr <= 1.0)) throw std::invalid_argument("alpha_dr must lie in [0, 1]");
  if (options.iters < 1) throw std::invalid_argument("divrank iters must be >= 1");
  const std::size_t n = preference.size();
  std::vector<double> pref(preference.begin(), preference.end());
  if (!(normalize(pref) > 0.0)) throw std::invalid_argument("preference vector has no mass");

  DenseMatrix organic(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double neighbor = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) neighbor += similarity(i, j);
    }
    if (!(neighbor > 0.0)) {
      organic(i, i) = 1.0;
      continue;
    }
    organic(i, i) = options.alpha_dr;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) organic(i, j) = (1.0 - options.alpha_dr) * similarity(i, j) / neighbor;
    }
  }

  DivRankScores out;
  out.pi = pref;
  std::vector<double> visits(n, 1.0);
  std::vector<double> next(n);
  for (std::size_t it = 1; it <= options.iters; ++it) {
    for (std::size_t j = 0; j < n; ++j) next[j] = (1.0 - options.lambda_dr) * pref[j];
    for (std::size_t i = 0; i < n; ++i) {
      double norm = 0.0;
      for (std::size_t j = 0; j < n; ++j) norm += organic(i, j) * visits[j];
      if (!(norm > 0.0)) continue;
      for (std::size_t j = 0; j < n; ++j) next[j] += options.lambda_dr * out.pi[i] * organic(i, j) * visits[j] / norm;
    }
    double change = 0.0;
    for (std::size_t j = 0; j < n; ++j) change = std::max(change, std::abs(next[j] - out.pi[j]));
    std::swap(out.pi, next);
    for (std::size_t j = 0; j < n; ++j) {
      visits[j] = options.variant == DivRankVariant::Cumulative ? visits[j] + out.pi[j] : out.pi[j];
    }
    out.iterations = it;
    if (change < options.tolerance) {
      out.converged = true;
      break;
    }
  }
  return out;
}

/// DivRank with topic proportions as the preference vector and cosine
/// similarity of word distributions as edge weights.
inline TopicRanking divrank_select(const TopicModel& model, std::size_t k, const DivRankOptions& options = {}) {
  const std::vector<std::size_t> rows = detail::live_rows(model);
  std::vector<bool> active(model.num_topics(), false);
  for (std::size_t r : rows) active[r] = true;
  DenseMatrix sim = similarity_matrix(model.phi, active);
  DenseMatrix sub(rows.size(), rows.size());
  std::vector<double> pref(rows.size());
  for (std::size_t a = 0; a < rows.size(); ++a) {
    pref[a] = model.proportion(rows[a]);
    for (std::size_t b = 0; b < rows.size(); ++b) sub(a, b) = sim(rows[a], rows[b]);
  }
  if (rows.empty()) return TopicRanking{{}, k > 0, true};
  const DivRankScores scores = divrank_scores(sub, pref, options);
  std::vector<double> score(model.num_topics(), 0.0);
  for (std::size_t a = 0; a < rows.size(); ++a) score[rows[a]] = scores.pi[a];
  TopicRanking out = detail::rank_rows(model, rows, score, k);
  out.converged = scores.converged;
  return out;
}

/// The model restricted to the ranked topics, in ranking order. Theta is
/// dropped; evaluation re-derives it by fold-in over the kept topics.
inline TopicModel restrict_model(const TopicModel& model, const TopicRanking& ranking) {
  if (ranking.items.empty()) throw std::invalid_argument("cannot restrict a model to an empty ranking");
  TopicModel out;
  out.kind = model.kind;
  out.vocab_size = model.vocab_size;
  out.num_docs = model.num_docs;
  out.iteration = model.iteration;
  out.likelihood = model.likelihood;
  out.token_total = model.token_total;
  out.phi = DenseMatrix(ranking.items.size(), model.vocab_size);
  for (std::size_t j = 0; j < ranking.items.size(); ++j) {
    const std::size_t r = model.row_of(ranking.items[j].topic_id);
    out.topic_ids.push_back(model.topic_ids[r]);
    out.sizes.push_back(model.sizes[r]);
    std::copy(model.phi.row(r).begin(), model.phi.row(r).end(), out.phi.row(j).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ranking CSV: rank,topic_id,score,proportion,top_words

inline void write_ranking(const TopicModel& model, const TopicRanking& ranking, const std::string& path,
                          const Vocabulary* vocab, std::size_t top_n = 20) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "rank,topic_id,score,proportion,top_words\n";
  for (std::size_t i = 0; i < ranking.items.size(); ++i) {
    const RankedTopic& t = ranking.items[i];
    const auto words = top_words(model.phi.row(model.row_of(t.topic_id)), top_n);
    out << i + 1 << ',' << t.topic_id << ',' << io::format_double(t.score) << ','
        << io::format_double(t.proportion) << ',' << io::csv_escape(join_words(words, vocab)) << '\n';
  }
}

inline TopicRanking read_ranking(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ranking file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || io::csv_split(line).size() < 4 || io::csv_split(line)[1] != "topic_id") {
    throw DataError(path + ":1: expected a ranking header 'rank,topic_id,score,proportion,...'");
  }
  TopicRanking ranking;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    const auto f = io::csv_split(line);
    if (f.size() < 4) throw DataError(where + ": expected at least 4 fields");
    RankedTopic t{io::parse_index(f[1], where), io::parse_double(f[2], where), io::parse_double(f[3], where)};
    for (const RankedTopic& seen : ranking.items) {
      if (seen.topic_id == t.topic_id) throw DataError(where + ": duplicate topic " + f[1]);
    }
    ranking.items.push_back(t);
  }
  return ranking;
}

}  // namespace divtopic::selection
