#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "divtopic/corpus.hpp"

namespace divtopic::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("divtopic-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Corpus from per-document (word, count) lists over an anonymous vocabulary.
inline Corpus make_corpus(std::size_t vocab_size,
                          const std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>>& docs) {
  std::vector<Document> out;
  for (const auto& d : docs) {
    std::vector<Entry> entries;
    for (auto [w, c] : d) entries.push_back({w, c});
    out.push_back(Document::from_entries(std::move(entries)));
  }
  return Corpus(Vocabulary::anonymous(vocab_size), std::move(out));
}

/// Five planted topics on disjoint 100-word blocks of a 500-word vocabulary,
/// with 2% background mass and theme sizes decaying by 0.6 per topic.
inline SyntheticCorpus planted_corpus(std::uint64_t seed, std::size_t docs = 2000, std::size_t doc_len = 100) {
  return generate_synthetic(block_topics(5, 500, 1.0, 0.02), decaying_prior(5, 0.1, 0.6), docs, doc_len, seed);
}

/// Worst row-wise total variation between `a` and `b` under the best
/// one-to-one row matching, found by trying every permutation.
inline double matched_tv(const DenseMatrix& a, const DenseMatrix& b) {
  std::vector<std::size_t> perm(b.rows());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.rows(); ++k) {
      double tv = 0.0;
      for (std::size_t w = 0; w < a.cols(); ++w) tv += std::abs(a(k, w) - b(perm[k], w));
      worst = std::max(worst, tv / 2.0);
    }
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Exact collapsed posterior p(z | w) of LDA over every assignment of the
/// given token streams to K topics. Configuration index: token t (documents
/// concatenated in order) contributes digit z_t in base K, first token least
/// significant.
inline std::vector<double> collapsed_posterior(const std::vector<std::vector<std::uint32_t>>& docs,
                                               std::size_t K, std::size_t V, const std::vector<double>& alpha,
                                               double beta) {
  std::size_t tokens = 0;
  for (const auto& d : docs) tokens += d.size();
  std::size_t configs = 1;
  for (std::size_t t = 0; t < tokens; ++t) configs *= K;
  const double A = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  std::vector<double> logp(configs);
  for (std::size_t c = 0; c < configs; ++c) {
    std::vector<std::vector<double>> n_dk(docs.size(), std::vector<double>(K, 0.0));
    std::vector<std::vector<double>> n_kw(K, std::vector<double>(V, 0.0));
    std::vector<double> n_k(K, 0.0);
    std::size_t code = c;
    for (std::size_t d = 0; d < docs.size(); ++d) {
      for (std::uint32_t w : docs[d]) {
        const std::size_t k = code % K;
        code /= K;
        n_dk[d][k] += 1;
        n_kw[k][w] += 1;
        n_k[k] += 1;
      }
    }
    double lp = 0.0;
    for (std::size_t d = 0; d < docs.size(); ++d) {
      for (std::size_t k = 0; k < K; ++k) lp += std::lgamma(n_dk[d][k] + alpha[k]) - std::lgamma(alpha[k]);
      lp -= std::lgamma(static_cast<double>(docs[d].size()) + A) - std::lgamma(A);
    }
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t w = 0; w < V; ++w) lp += std::lgamma(n_kw[k][w] + beta) - std::lgamma(beta);
      lp -= std::lgamma(n_k[k] + static_cast<double>(V) * beta) - std::lgamma(static_cast<double>(V) * beta);
    }
    logp[c] = lp;
  }
  const double top = *std::max_element(logp.begin(), logp.end());
  double total = 0.0;
  for (double& v : logp) total += (v = std::exp(v - top));
  for (double& v : logp) v /= total;
  return logp;
}

}  // namespace divtopic::testing
