#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "divtopic/corpus.hpp"
#include "divtopic/model.hpp"

namespace divtopic::evaluation {

enum class Smoothing {
  /// A zero joint document count is replaced by epsilon; others are untouched.
  ZeroJoint,
  /// Epsilon is added to every joint document count.
  AddAll,
  /// No smoothing; a never co-occurring pair yields -inf.
  None,
};

inline std::string to_string(Smoothing s) {
  switch (s) {
    case Smoothing::ZeroJoint: return "zero-joint";
    case Smoothing::AddAll: return "add-all";
    case Smoothing::None: return "none";
  }
  return "?";
}

inline Smoothing parse_smoothing(const std::string& s) {
  if (s == "zero-joint") return Smoothing::ZeroJoint;
  if (s == "add-all") return Smoothing::AddAll;
  if (s == "none") return Smoothing::None;
  throw std::invalid_argument("unknown smoothing mode '" + s + "'");
}

struct PmiOptions {
  std::size_t top_n = 20;
  Smoothing smoothing = Smoothing::ZeroJoint;
  double epsilon = 1.0;
};

struct PmiResult {
  std::vector<double> per_topic;
  double mean = 0.0;
  /// Word pairs that never co-occur in the reference corpus.
  std::size_t zero_joint_pairs = 0;
};

/// log p(a,b) / (p(a) p(b)) with document-frequency probabilities.
inline double pair_pmi(const CooccurrenceStats& stats, std::uint32_t a, std::uint32_t b, const PmiOptions& opt) {
  const double D = static_cast<double>(stats.doc_count());
  double joint = static_cast<double>(stats.pair_doc_freq(a, b));
  double fa = static_cast<double>(stats.doc_freq(a));
  double fb = static_cast<double>(stats.doc_freq(b));
  switch (opt.smoothing) {
    case Smoothing::ZeroJoint:
      if (joint == 0.0) joint = opt.epsilon;
      break;
    case Smoothing::AddAll:
      joint += opt.epsilon;
      break;
    case Smoothing::None:
      break;
  }
  // A word absent from the reference corpus gets the same epsilon floor.
  if (opt.smoothing != Smoothing::None) {
    fa = std::max(fa, opt.epsilon);
    fb = std::max(fb, opt.epsilon);
  }
  return std::log(joint * D / (fa * fb));
}

/// Mean pairwise PMI of each topic's top_n words (ties by word id), averaged over topics.
inline PmiResult pmi_coherence(const DenseMatrix& topics, const Corpus& reference, const PmiOptions& opt = {}) {
  if (opt.top_n < 2) throw std::invalid_argument("PMI needs top_n >= 2");
  if (reference.num_docs() == 0) throw std::invalid_argument("PMI reference corpus is empty");
  if (topics.rows() == 0) throw std::invalid_argument("PMI needs at least one topic");
  if (topics.cols() > reference.vocab_size()) {
    throw DataError("topics span a larger vocabulary than the reference corpus");
  }
  std::vector<std::vector<std::uint32_t>> top(topics.rows());
  std::vector<std::uint32_t> all;
  for (std::size_t k = 0; k < topics.rows(); ++k) {
    top[k] = top_words(topics.row(k), opt.top_n);
    all.insert(all.end(), top[k].begin(), top[k].end());
  }
  const CooccurrenceStats stats = cooccurrence(reference, all);
  PmiResult out;
  for (const auto& words : top) {
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
      for (std::size_t j = i + 1; j < words.size(); ++j) {
        if (stats.pair_doc_freq(words[i], words[j]) == 0) ++out.zero_joint_pairs;
        total += pair_pmi(stats, words[i], words[j], opt);
        ++pairs;
      }
    }
    out.per_topic.push_back(pairs ? total / static_cast<double>(pairs) : 0.0);
  }
  out.mean = sum(out.per_topic) / static_cast<double>(out.per_topic.size());
  return out;
}

struct FoldInOptions {
  std::size_t iters = 50;
  /// Stop early once no theta entry moves more than this.
  double tolerance = 1e-12;
};

/// EM estimate of a document's topic mixture with the topics held fixed,
/// starting from uniform.
inline std::vector<double> fold_in(const DenseMatrix& phi, const Document& observed, const FoldInOptions& opt = {}) {
  const std::size_t K = phi.rows();
  std::vector<double> theta(K, 1.0 / static_cast<double>(K));
  if (observed.empty()) return theta;
  std::vector<double> next(K);
  std::vector<double> post(K);
  for (std::size_t it = 0; it < opt.iters; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (const Entry& e : observed.entries()) {
      double total = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        post[k] = theta[k] * phi(k, e.word);
        total += post[k];
      }
      if (!(total > 0.0)) continue;
      for (std::size_t k = 0; k < K; ++k) next[k] += e.count * post[k] / total;
    }
    if (!(normalize(next) > 0.0)) break;  // no observed word is covered by any topic
    double change = 0.0;
    for (std::size_t k = 0; k < K; ++k) change = std::max(change, std::abs(next[k] - theta[k]));
    theta.swap(next);
    if (change < opt.tolerance) break;
  }
  return theta;
}

struct PerplexityResult {
  double perplexity = 0.0;
  double log_likelihood = 0.0;
  std::uint64_t predict_tokens = 0;
  /// Predict tokens whose probability fell below the floor.
  std::uint64_t floored_tokens = 0;
};

/// Document-completion perplexity: theta from fold-in on the observed part,
/// then exp(-sum log p(w) / #predict tokens) over the predict parts.
inline PerplexityResult perplexity(const DenseMatrix& phi, const std::vector<HoldoutSplit>& holdout,
                                   const FoldInOptions& opt = {}, double probability_floor = 1e-12) {
  if (phi.rows() == 0) throw std::invalid_argument("perplexity needs at least one topic");
  if (holdout.empty()) throw std::invalid_argument("perplexity needs at least one held-out document");
  PerplexityResult out;
  for (const HoldoutSplit& split : holdout) {
    if (split.predict.empty()) throw DataError("held-out document with an empty predict part");
    const std::vector<double> theta = fold_in(phi, split.observed, opt);
    for (const Entry& e : split.predict.entries()) {
      if (e.word >= phi.cols()) throw DataError("held-out word outside the model vocabulary");
      double p = 0.0;
      for (std::size_t k = 0; k < phi.rows(); ++k) p += theta[k] * phi(k, e.word);
      if (p < probability_floor) {
        p = probability_floor;
        out.floored_tokens += e.count;
      }
      out.log_likelihood += e.count * std::log(p);
      out.predict_tokens += e.count;
    }
  }
  out.perplexity = std::exp(-out.log_likelihood / static_cast<double>(out.predict_tokens));
  return out;
}

struct EvalReport {
  std::string metric;
  std::size_t k_used = 0;
  std::vector<std::size_t> topic_ids;
  std::vector<double> per_topic_pmi;
  double mean_pmi = 0.0;
  double perplexity = 0.0;
  std::uint64_t floored_tokens = 0;
  std::size_t zero_joint_pairs = 0;
  /// Echo of the evaluation settings, written as key/value rows.
  std::vector<std::pair<std::string, std::string>> config;
};

/// CSV with one "key,value" row per scalar and one "topic_pmi,<id>,<value>" row per topic.
inline void write_report(const EvalReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "field,key,value\n";
  out << "metric,," << r.metric << '\n';
  out << "k_used,," << r.k_used << '\n';
  if (r.metric == "pmi") {
    out << "mean_pmi,," << io::format_double(r.mean_pmi) << '\n';
    out << "zero_joint_pairs,," << r.zero_joint_pairs << '\n';
    for (std::size_t i = 0; i < r.per_topic_pmi.size(); ++i) {
      out << "topic_pmi," << r.topic_ids[i] << ',' << io::format_double(r.per_topic_pmi[i]) << '\n';
    }
  } else {
    out << "perplexity,," << io::format_double(r.perplexity) << '\n';
    out << "floored_tokens,," << r.floored_tokens << '\n';
  }
  for (const auto& [k, v] : r.config) out << "config," << io::csv_escape(k) << ',' << io::csv_escape(v) << '\n';
}

}  // namespace divtopic::evaluation
