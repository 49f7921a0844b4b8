#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <tuple>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "divtopic/common.hpp"

namespace divtopic {

class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> terms) : terms_(std::move(terms)) {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      if (terms_[i].empty()) {
        throw DataError("vocabulary term " + std::to_string(i + 1) + " is empty");
      }
      if (!seen.insert(terms_[i]).second) {
        throw DataError("vocabulary term '" + terms_[i] + "' is duplicated (line " +
                        std::to_string(i + 1) + ")");
      }
    }
  }

  /// Placeholder terms "w0", "w1", ... for corpora loaded without a vocab file.
  static Vocabulary anonymous(std::size_t size) {
    std::vector<std::string> terms(size);
    for (std::size_t i = 0; i < size; ++i) terms[i] = "w" + std::to_string(i);
    return Vocabulary(std::move(terms));
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary file '" + path + "'");
    std::vector<std::string> terms;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      terms.push_back(line);
    }
    // A trailing blank line is an artifact of the final newline, not a term.
    while (!terms.empty() && terms.back().empty()) terms.pop_back();
    return Vocabulary(std::move(terms));
  }

  std::size_t size() const { return terms_.size(); }
  const std::string& term(std::size_t id) const { return terms_.at(id); }
  const std::vector<std::string>& terms() const { return terms_; }

  bool operator==(const Vocabulary&) const = default;

 private:
  std::vector<std::string> terms_;
};

struct Entry {
  std::uint32_t word = 0;
  std::uint32_t count = 0;
  bool operator==(const Entry&) const = default;
};

/// Sparse bag of words: entries sorted by word id, unique, counts >= 1.
class Document {
 public:
  Document() = default;

  /// Sorts, merges duplicate word ids by summing, and validates counts.
  static Document from_entries(std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.word < b.word; });
    Document doc;
    for (const Entry& e : entries) {
      if (e.count == 0) throw DataError("document entry with non-positive count");
      if (!doc.entries_.empty() && doc.entries_.back().word == e.word) {
        doc.entries_.back().count += e.count;
      } else {
        doc.entries_.push_back(e);
      }
      doc.total_ += e.count;
    }
    return doc;
  }

  /// Builds a document from an unordered token stream of word ids.
  static Document from_tokens(std::span<const std::uint32_t> tokens) {
    std::map<std::uint32_t, std::uint32_t> counts;
    for (std::uint32_t w : tokens) ++counts[w];
    std::vector<Entry> entries;
    entries.reserve(counts.size());
    for (const auto& [w, c] : counts) entries.push_back({w, c});
    return from_entries(std::move(entries));
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::uint64_t total_tokens() const { return total_; }
  bool empty() const { return entries_.empty(); }

  /// Token stream in entry order (each word repeated `count` times).
  std::vector<std::uint32_t> tokens() const {
    std::vector<std::uint32_t> out;
    out.reserve(total_);
    for (const Entry& e : entries_) out.insert(out.end(), e.count, e.word);
    return out;
  }

  bool operator==(const Document&) const = default;

 private:
  std::vector<Entry> entries_;
  std::uint64_t total_ = 0;
};

class Corpus {
 public:
  Corpus() = default;

  /// Empty documents are dropped and counted in dropped_empty().
  Corpus(Vocabulary vocabulary, std::vector<Document> documents)
      : vocabulary_(std::move(vocabulary)) {
    documents_.reserve(documents.size());
    for (Document& doc : documents) {
      if (doc.empty()) {
        ++dropped_empty_;
        continue;
      }
      for (const Entry& e : doc.entries()) {
        if (e.word >= vocabulary_.size()) {
          throw DataError("word id " + std::to_string(e.word + 1) +
                          " is outside the vocabulary of size " +
                          std::to_string(vocabulary_.size()));
        }
      }
      token_total_ += doc.total_tokens();
      documents_.push_back(std::move(doc));
    }
  }

  const Vocabulary& vocabulary() const { return vocabulary_; }
  std::size_t vocab_size() const { return vocabulary_.size(); }
  const std::vector<Document>& documents() const { return documents_; }
  const Document& document(std::size_t d) const { return documents_[d]; }
  std::size_t num_docs() const { return documents_.size(); }
  std::uint64_t token_total() const { return token_total_; }
  std::size_t dropped_empty() const { return dropped_empty_; }
  std::size_t nnz() const {
    std::size_t n = 0;
    for (const Document& doc : documents_) n += doc.size();
    return n;
  }

  bool operator==(const Corpus& other) const {
    return vocabulary_ == other.vocabulary_ && documents_ == other.documents_;
  }

 private:
  Vocabulary vocabulary_;
  std::vector<Document> documents_;
  std::uint64_t token_total_ = 0;
  std::size_t dropped_empty_ = 0;
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

inline long long parse_integer(std::string_view field, const std::string& where) {
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw DataError(where + ": expected an integer, got '" + std::string(field) + "'");
  }
  return value;
}

/// Reads the "D / W / NNZ" header and the triple lines of a bag-of-words style
/// file, handing each validated (row, word, count, extra fields) to `sink`.
template <typename Sink>
void read_triples(const std::string& path, std::size_t extra_fields, Sink&& sink,
                  std::size_t& rows_out, std::size_t& vocab_out) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  long long header[3] = {0, 0, 0};
  for (long long& h : header) {
    do {
      if (!std::getline(in, line)) throw DataError(path + ": truncated header");
      ++line_no;
    } while (split_ws(line).empty());
    const auto fields = split_ws(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (fields.size() != 1) throw DataError(where + ": malformed header line");
    h = parse_integer(fields[0], where);
    if (h < 0) throw DataError(where + ": negative header value");
  }
  rows_out = static_cast<std::size_t>(header[0]);
  vocab_out = static_cast<std::size_t>(header[1]);
  const auto nnz = static_cast<std::size_t>(header[2]);
  std::size_t seen = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    if (fields.size() != 3 + extra_fields) {
      throw DataError(where + ": malformed line, expected " + std::to_string(3 + extra_fields) +
                      " fields");
    }
    const long long row = parse_integer(fields[0], where);
    const long long word = parse_integer(fields[1], where);
    const long long count = parse_integer(fields[2], where);
    if (row < 1 || row > header[0]) {
      throw DataError(where + ": document id " + std::to_string(row) + " out of range [1, " +
                      std::to_string(header[0]) + "]");
    }
    if (word < 1 || word > header[1]) {
      throw DataError(where + ": word id " + std::to_string(word) + " out of range [1, " +
                      std::to_string(header[1]) + "]");
    }
    if (count < 1) throw DataError(where + ": non-positive count " + std::to_string(count));
    sink(static_cast<std::size_t>(row - 1), static_cast<std::uint32_t>(word - 1),
         static_cast<std::uint32_t>(count), std::span<const std::string_view>(fields).subspan(3),
         where);
    ++seen;
  }
  if (seen != nnz) {
    throw DataError(path + ": header declares " + std::to_string(nnz) + " triples, found " +
                    std::to_string(seen));
  }
}

}  // namespace detail

/// Loads a UCI-style bag-of-words file. When `vocab_path` is empty the
/// vocabulary is anonymous with the size declared in the header.
inline Corpus load_bow(const std::string& docs_path, const std::string& vocab_path = {}) {
  std::vector<std::vector<Entry>> rows;
  std::size_t num_rows = 0;
  std::size_t vocab_size = 0;
  std::vector<std::pair<std::size_t, Entry>> triples;
  detail::read_triples(
      docs_path, 0,
      [&](std::size_t row, std::uint32_t word, std::uint32_t count, auto, const std::string&) {
        triples.push_back({row, {word, count}});
      },
      num_rows, vocab_size);
  rows.resize(num_rows);
  for (auto& [row, entry] : triples) rows[row].push_back(entry);

  Vocabulary vocab = vocab_path.empty() ? Vocabulary::anonymous(vocab_size)
                                        : Vocabulary::load(vocab_path);
  if (vocab.size() != vocab_size) {
    throw DataError(docs_path + ": header declares vocabulary size " + std::to_string(vocab_size) +
                    " but '" + vocab_path + "' has " + std::to_string(vocab.size()) + " terms");
  }
  std::vector<Document> docs;
  docs.reserve(rows.size());
  for (auto& r : rows) docs.push_back(Document::from_entries(std::move(r)));
  return Corpus(std::move(vocab), std::move(docs));
}

inline void write_bow(const Corpus& corpus, const std::string& docs_path) {
  std::ofstream out(docs_path);
  if (!out) throw DataError("cannot write '" + docs_path + "'");
  out << corpus.num_docs() << '\n' << corpus.vocab_size() << '\n' << corpus.nnz() << '\n';
  for (std::size_t d = 0; d < corpus.num_docs(); ++d) {
    for (const Entry& e : corpus.document(d).entries()) {
      out << d + 1 << ' ' << e.word + 1 << ' ' << e.count << '\n';
    }
  }
  if (!out) throw DataError("write failed for '" + docs_path + "'");
}

inline void write_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const std::string& t : vocab.terms()) out << t << '\n';
}

// ---------------------------------------------------------------------------
// Held-out document completion split

struct HoldoutSplit {
  std::size_t source_doc = 0;
  Document observed;
  Document predict;
};

struct HoldoutResult {
  Corpus train;
  std::vector<HoldoutSplit> holdout;
};

/// Holds out `holdout_docs` seeded-random documents. Each one's token stream is
/// shuffled and cut at floor(word_fraction * length); documents whose predict
/// part would be empty are skipped.
inline HoldoutResult split_holdout_count(const Corpus& corpus, std::size_t holdout_docs,
                                         double word_fraction, std::uint64_t seed) {
  if (!(word_fraction > 0.0 && word_fraction < 1.0)) {
    throw std::invalid_argument("word_fraction must lie in (0, 1)");
  }
  if (holdout_docs < 1 || holdout_docs >= corpus.num_docs()) {
    throw DataError("corpus of " + std::to_string(corpus.num_docs()) +
                    " documents is too small to hold out " + std::to_string(holdout_docs));
  }
  Rng rng(seed);
  std::vector<std::size_t> order(corpus.num_docs());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[uniform_index(rng, i)]);
  }
  std::vector<char> held(corpus.num_docs(), 0);
  for (std::size_t i = 0; i < holdout_docs; ++i) held[order[i]] = 1;

  HoldoutResult result;
  std::vector<Document> train_docs;
  train_docs.reserve(corpus.num_docs() - holdout_docs);
  for (std::size_t d = 0; d < corpus.num_docs(); ++d) {
    const Document& doc = corpus.document(d);
    if (!held[d]) {
      train_docs.push_back(doc);
      continue;
    }
    std::vector<std::uint32_t> tokens = doc.tokens();
    for (std::size_t i = tokens.size(); i > 1; --i) {
      std::swap(tokens[i - 1], tokens[uniform_index(rng, i)]);
    }
    const auto cut = static_cast<std::size_t>(
        std::floor(word_fraction * static_cast<double>(tokens.size()) + 1e-9));
    if (cut >= tokens.size()) continue;
    HoldoutSplit split;
    split.source_doc = d;
    split.observed = Document::from_tokens(std::span(tokens).first(cut));
    split.predict = Document::from_tokens(std::span(tokens).subspan(cut));
    result.holdout.push_back(std::move(split));
  }
  result.train = Corpus(corpus.vocabulary(), std::move(train_docs));
  return result;
}

inline HoldoutResult split_holdout(const Corpus& corpus, double doc_fraction, double word_fraction,
                                   std::uint64_t seed) {
  if (!(doc_fraction > 0.0 && doc_fraction < 1.0)) {
    throw std::invalid_argument("doc_fraction must lie in (0, 1)");
  }
  const auto count = static_cast<std::size_t>(
      std::llround(doc_fraction * static_cast<double>(corpus.num_docs())));
  return split_holdout_count(corpus, count, word_fraction, seed);
}

/// Holdout file: bag-of-words layout with a fourth column, 'o' (observed) or
/// 'p' (predict). Header: split count, vocabulary size, line count.
inline void write_holdout(const std::vector<HoldoutSplit>& splits, std::size_t vocab_size,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  std::size_t lines = 0;
  for (const HoldoutSplit& s : splits) lines += s.observed.size() + s.predict.size();
  out << splits.size() << '\n' << vocab_size << '\n' << lines << '\n';
  for (std::size_t i = 0; i < splits.size(); ++i) {
    for (const Entry& e : splits[i].observed.entries()) {
      out << i + 1 << ' ' << e.word + 1 << ' ' << e.count << " o\n";
    }
    for (const Entry& e : splits[i].predict.entries()) {
      out << i + 1 << ' ' << e.word + 1 << ' ' << e.count << " p\n";
    }
  }
}

inline std::vector<HoldoutSplit> read_holdout(const std::string& path, std::size_t* vocab_size = nullptr) {
  std::vector<std::vector<Entry>> observed;
  std::vector<std::vector<Entry>> predict;
  std::vector<std::tuple<std::size_t, Entry, bool>> lines;
  std::size_t rows = 0;
  std::size_t vocab = 0;
  detail::read_triples(
      path, 1,
      [&](std::size_t row, std::uint32_t word, std::uint32_t count,
          std::span<const std::string_view> extra, const std::string& where) {
        if (extra[0] != "o" && extra[0] != "p") {
          throw DataError(where + ": part must be 'o' or 'p'");
        }
        lines.emplace_back(row, Entry{word, count}, extra[0] == "o");
      },
      rows, vocab);
  observed.resize(rows);
  predict.resize(rows);
  for (auto& [row, entry, is_observed] : lines) {
    (is_observed ? observed : predict)[row].push_back(entry);
  }
  std::vector<HoldoutSplit> splits(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    splits[i].source_doc = i;
    splits[i].observed = Document::from_entries(std::move(observed[i]));
    splits[i].predict = Document::from_entries(std::move(predict[i]));
    if (splits[i].predict.empty()) {
      throw DataError(path + ": split " + std::to_string(i + 1) + " has an empty predict part");
    }
  }
  if (vocab_size) *vocab_size = vocab;
  return splits;
}

// ---------------------------------------------------------------------------
// Document co-occurrence

/// Document and pairwise joint document frequencies over a fixed word set.
class CooccurrenceStats {
 public:
  CooccurrenceStats(std::size_t doc_count, std::vector<std::uint32_t> words)
      : doc_count_(doc_count), words_(std::move(words)), doc_freq_(words_.size(), 0),
        pair_freq_(words_.size(), words_.size(), 0) {
    for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
  }

  std::size_t doc_count() const { return doc_count_; }
  const std::vector<std::uint32_t>& words() const { return words_; }

  std::int64_t doc_freq(std::uint32_t w) const { return doc_freq_[slot(w)]; }
  std::int64_t pair_doc_freq(std::uint32_t a, std::uint32_t b) const {
    return pair_freq_(slot(a), slot(b));
  }

  // Used while scanning the reference corpus.
  void add_document(std::span<const std::size_t> present_slots) {
    for (std::size_t i = 0; i < present_slots.size(); ++i) {
      const std::size_t a = present_slots[i];
      ++doc_freq_[a];
      ++pair_freq_(a, a);
      for (std::size_t j = i + 1; j < present_slots.size(); ++j) {
        const std::size_t b = present_slots[j];
        ++pair_freq_(a, b);
        ++pair_freq_(b, a);
      }
    }
  }

  std::optional<std::size_t> find(std::uint32_t w) const {
    const auto it = index_.find(w);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::size_t slot(std::uint32_t w) const {
    const auto it = index_.find(w);
    if (it == index_.end()) {
      throw std::out_of_range("word " + std::to_string(w) + " not in the co-occurrence set");
    }
    return it->second;
  }

  std::size_t doc_count_;
  std::vector<std::uint32_t> words_;
  std::unordered_map<std::uint32_t, std::size_t> index_;
  std::vector<std::int64_t> doc_freq_;
  CountMatrix pair_freq_;
};

inline CooccurrenceStats cooccurrence(const Corpus& corpus, std::span<const std::uint32_t> word_set) {
  if (word_set.empty()) throw std::invalid_argument("cooccurrence word set is empty");
  std::vector<std::uint32_t> words(word_set.begin(), word_set.end());
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  for (std::uint32_t w : words) {
    if (w >= corpus.vocab_size()) {
      throw std::out_of_range("word id " + std::to_string(w) + " outside the vocabulary");
    }
  }
  CooccurrenceStats stats(corpus.num_docs(), words);
  std::vector<std::size_t> present;
  for (const Document& doc : corpus.documents()) {
    present.clear();
    for (const Entry& e : doc.entries()) {
      if (auto slot = stats.find(e.word)) present.push_back(*slot);
    }
    stats.add_document(present);
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Synthetic corpora

struct SyntheticCorpus {
  Corpus corpus;
  DenseMatrix topics;     // K x V generating word distributions
  DenseMatrix doc_topic;  // D x K generating mixtures
  std::vector<double> doc_topic_prior;
  std::uint64_t seed = 0;
};

/// Documents drawn from the LDA generative story: theta ~ Dir(prior), then for
/// every token a topic from theta and a word from that topic. `prior` holds one
/// concentration per topic.
inline SyntheticCorpus generate_synthetic(const DenseMatrix& true_topics, const std::vector<double>& prior,
                                          std::size_t n_docs, std::size_t doc_len,
                                          std::uint64_t seed) {
  const std::size_t K = true_topics.rows();
  const std::size_t V = true_topics.cols();
  if (K == 0 || V == 0) throw std::invalid_argument("need at least one topic and one word");
  if (prior.size() != K) throw std::invalid_argument("need one prior concentration per topic");
  for (double a : prior) {
    if (!(a > 0.0)) throw std::invalid_argument("prior concentrations must be positive");
  }

  SyntheticCorpus out;
  out.topics = true_topics;
  out.doc_topic_prior = prior;
  out.seed = seed;
  std::vector<std::vector<double>> cumulative(K, std::vector<double>(V));
  for (std::size_t k = 0; k < K; ++k) {
    double acc = 0.0;
    for (std::size_t w = 0; w < V; ++w) {
      const double p = true_topics(k, w);
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw DataError("topic " + std::to_string(k) + " has an invalid probability");
      }
      acc += p;
      cumulative[k][w] = acc;
    }
    if (!(acc > 0.0)) throw DataError("topic " + std::to_string(k) + " has zero total mass");
    auto row = out.topics.row(k);
    normalize(row);
  }

  Rng rng(seed);
  out.doc_topic = DenseMatrix(n_docs, K);
  std::vector<Document> docs;
  docs.reserve(n_docs);
  std::vector<std::uint32_t> tokens(doc_len);
  for (std::size_t d = 0; d < n_docs; ++d) {
    auto theta = out.doc_topic.row(d);
    dirichlet_draw(prior, rng, theta);
    for (std::size_t t = 0; t < doc_len; ++t) {
      const std::size_t k = sample_discrete(theta, 1.0, rng);
      const auto& cum = cumulative[k];
      const double u = uniform01(rng) * cum.back();
      auto it = std::upper_bound(cum.begin(), cum.end(), u);
      if (it == cum.end()) --it;
      tokens[t] = static_cast<std::uint32_t>(it - cum.begin());
    }
    docs.push_back(Document::from_tokens(tokens));
  }
  out.corpus = Corpus(Vocabulary::anonymous(V), std::move(docs));
  return out;
}

/// Symmetric-prior convenience overload.
inline SyntheticCorpus generate_synthetic(const DenseMatrix& true_topics, double doc_topic_prior,
                                          std::size_t n_docs, std::size_t doc_len, std::uint64_t seed) {
  if (!(doc_topic_prior > 0.0)) throw std::invalid_argument("doc_topic_prior must be positive");
  return generate_synthetic(true_topics, std::vector<double>(true_topics.rows(), doc_topic_prior), n_docs,
                            doc_len, seed);
}

/// Concentrations with mean `mean` whose k-th entry is proportional to
/// decay^k, so planted topics differ in expected size. decay = 1 is symmetric.
inline std::vector<double> decaying_prior(std::size_t n_topics, double mean, double decay) {
  if (n_topics == 0) throw std::invalid_argument("need at least one topic");
  if (!(mean > 0.0) || !(decay > 0.0)) throw std::invalid_argument("mean and decay must be positive");
  std::vector<double> prior(n_topics);
  double total = 0.0;
  for (std::size_t k = 0; k < n_topics; ++k) total += prior[k] = std::pow(decay, static_cast<double>(k));
  for (double& a : prior) a *= mean * static_cast<double>(n_topics) / total;
  return prior;
}

/// Well-separated planted topics: topic k puts Zipf-shaped mass on its own
/// block of V / n_topics words and `background` mass spread uniformly over the
/// whole vocabulary.
inline DenseMatrix block_topics(std::size_t n_topics, std::size_t vocab_size,
                                double zipf_exponent = 1.0, double background = 0.0) {
  if (n_topics == 0 || vocab_size < n_topics) {
    throw std::invalid_argument("need 1 <= n_topics <= vocab_size");
  }
  DenseMatrix topics(n_topics, vocab_size);
  const std::size_t block = vocab_size / n_topics;
  for (std::size_t k = 0; k < n_topics; ++k) {
    auto row = topics.row(k);
    for (std::size_t r = 0; r < block; ++r) {
      row[k * block + r] = 1.0 / std::pow(static_cast<double>(r + 1), zipf_exponent);
    }
    normalize(row);
    for (double& p : row) p = (1.0 - background) * p + background / static_cast<double>(vocab_size);
  }
  return topics;
}

}  // namespace divtopic
