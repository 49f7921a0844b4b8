#pragma once

#include <charconv>
#include <fstream>
#include <string>
#include <vector>

#include "divtopic/common.hpp"
#include "divtopic/corpus.hpp"

namespace divtopic {

/// A trained topic model as exchanged between pipeline stages. The same
/// structure (and file format) serves plsa, lda, divplsa and divlda.
struct TopicModel {
  std::string kind;
  std::size_t vocab_size = 0;
  std::size_t num_docs = 0;
  std::size_t iteration = 0;
  double likelihood = 0.0;
  double token_total = 0.0;
  /// Stable topic labels (index in the starting topic set before compaction).
  std::vector<std::size_t> topic_ids;
  /// Token mass per topic.
  std::vector<double> sizes;
  DenseMatrix phi;    // K x V
  DenseMatrix theta;  // D x K, empty when not stored

  std::size_t num_topics() const { return phi.rows(); }
  double proportion(std::size_t row) const { return token_total > 0.0 ? sizes[row] / token_total : 0.0; }

  std::size_t row_of(std::size_t topic_id) const {
    for (std::size_t r = 0; r < topic_ids.size(); ++r) {
      if (topic_ids[r] == topic_id) return r;
    }
    throw DataError("topic " + std::to_string(topic_id) + " is not present in the model (pruned?)");
  }

  bool operator==(const TopicModel&) const = default;
};

/// Indices of the n largest entries, probability descending, ties by lower index.
inline std::vector<std::uint32_t> top_words(std::span<const double> row, std::size_t n) {
  std::vector<std::uint32_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), 0u);
  n = std::min(n, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                    [&row](std::uint32_t a, std::uint32_t b) {
                      return row[a] != row[b] ? row[a] > row[b] : a < b;
                    });
  idx.resize(n);
  return idx;
}

inline std::string join_words(std::span<const std::uint32_t> words, const Vocabulary* vocab) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += (vocab && words[i] < vocab->size()) ? vocab->term(words[i]) : "w" + std::to_string(words[i]);
  }
  return out;
}

namespace io {

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError(where + ": expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

inline std::size_t parse_index(std::string_view s, const std::string& where) {
  const long long v = divtopic::detail::parse_integer(s, where);
  if (v < 0) throw DataError(where + ": negative value");
  return static_cast<std::size_t>(v);
}

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

}  // namespace io

// ---------------------------------------------------------------------------
// Model file
//
//   divtopic-model 1
//   kind <name>
//   topics <K> / vocab <V> / docs <D> / iteration <n> / likelihood <x> / token_total <x>
//   theta <0|1>
//   topic <id> <size> <phi_0> ... <phi_{V-1}>        (K lines)
//   theta_row <d> <theta_0> ... <theta_{K-1}>       (D lines when theta is 1)

inline void write_model(const TopicModel& model, const std::string& path, bool include_theta) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  using io::format_double;
  const bool theta = include_theta && !model.theta.empty();
  out << "divtopic-model 1\n"
      << "kind " << model.kind << '\n'
      << "topics " << model.num_topics() << '\n'
      << "vocab " << model.vocab_size << '\n'
      << "docs " << model.num_docs << '\n'
      << "iteration " << model.iteration << '\n'
      << "likelihood " << format_double(model.likelihood) << '\n'
      << "token_total " << format_double(model.token_total) << '\n'
      << "theta " << (theta ? 1 : 0) << '\n';
  for (std::size_t k = 0; k < model.num_topics(); ++k) {
    out << "topic " << model.topic_ids[k] << ' ' << format_double(model.sizes[k]);
    for (double p : model.phi.row(k)) out << ' ' << format_double(p);
    out << '\n';
  }
  if (theta) {
    for (std::size_t d = 0; d < model.theta.rows(); ++d) {
      out << "theta_row " << d;
      for (double p : model.theta.row(d)) out << ' ' << format_double(p);
      out << '\n';
    }
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline TopicModel read_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  auto next_fields = [&](std::size_t expected_min, const char* key) {
    if (!std::getline(in, line)) throw DataError(path + ": unexpected end of file, wanted '" + key + "'");
    ++line_no;
    auto fields = divtopic::detail::split_ws(line);
    if (fields.size() < expected_min || fields[0] != key) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected '" + key + "'");
    }
    return fields;
  };
  auto where = [&] { return path + ":" + std::to_string(line_no); };

  auto magic = next_fields(2, "divtopic-model");
  if (magic[1] != "1") throw DataError(where() + ": unsupported model format version");
  TopicModel m;
  m.kind = std::string(next_fields(2, "kind")[1]);
  const std::size_t K = io::parse_index(next_fields(2, "topics")[1], where());
  m.vocab_size = io::parse_index(next_fields(2, "vocab")[1], where());
  m.num_docs = io::parse_index(next_fields(2, "docs")[1], where());
  m.iteration = io::parse_index(next_fields(2, "iteration")[1], where());
  m.likelihood = io::parse_double(next_fields(2, "likelihood")[1], where());
  m.token_total = io::parse_double(next_fields(2, "token_total")[1], where());
  const bool theta = io::parse_index(next_fields(2, "theta")[1], where()) != 0;

  m.phi = DenseMatrix(K, m.vocab_size);
  m.topic_ids.resize(K);
  m.sizes.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto f = next_fields(3, "topic");
    if (f.size() != 3 + m.vocab_size) throw DataError(where() + ": topic row has wrong length");
    m.topic_ids[k] = io::parse_index(f[1], where());
    m.sizes[k] = io::parse_double(f[2], where());
    for (std::size_t w = 0; w < m.vocab_size; ++w) m.phi(k, w) = io::parse_double(f[3 + w], where());
  }
  if (theta) {
    m.theta = DenseMatrix(m.num_docs, K);
    for (std::size_t d = 0; d < m.num_docs; ++d) {
      auto f = next_fields(2, "theta_row");
      if (f.size() != 2 + K) throw DataError(where() + ": theta row has wrong length");
      for (std::size_t k = 0; k < K; ++k) m.theta(d, k) = io::parse_double(f[2 + k], where());
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Trace CSV: iteration,likelihood,active_count

inline void write_trace(const std::vector<TracePoint>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "iteration,likelihood,active_count\n";
  for (const TracePoint& p : trace) {
    out << p.iteration << ',' << io::format_double(p.likelihood) << ',' << p.active_count << '\n';
  }
}

inline std::vector<TracePoint> read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trace file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || io::csv_split(line) != std::vector<std::string>{"iteration", "likelihood", "active_count"}) {
    throw DataError(path + ":1: expected header 'iteration,likelihood,active_count'");
  }
  std::vector<TracePoint> trace;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    const auto f = io::csv_split(line);
    if (f.size() != 3) throw DataError(where + ": expected 3 fields");
    TracePoint p{io::parse_index(f[0], where), io::parse_double(f[1], where), io::parse_index(f[2], where)};
    if (!trace.empty() && p.iteration <= trace.back().iteration) {
      throw DataError(where + ": iterations must increase");
    }
    trace.push_back(p);
  }
  return trace;
}

}  // namespace divtopic
