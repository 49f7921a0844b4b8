#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "divtopic/corpus.hpp"
#include "divtopic/divlda.hpp"
#include "divtopic/divplsa.hpp"
#include "divtopic/evaluation.hpp"
#include "divtopic/lda.hpp"
#include "divtopic/model.hpp"
#include "divtopic/plsa.hpp"
#include "divtopic/selection.hpp"

#ifndef DIVTOPIC_VERSION
#define DIVTOPIC_VERSION "0.1.0"
#endif

namespace divtopic::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2 };

/// Options that parse but make no sense together.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a over the file bytes, as 16 hex digits.
inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "' for hashing");
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

/// Writes through a temporary sibling and renames it into place.
inline void write_atomically(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write '" + tmp + "'");
    out << contents;
    if (!out) throw DataError("write failed for '" + tmp + "'");
  }
  fs::rename(tmp, path);
}

/// Everything needed to describe and replay one invocation.
struct RunManifest {
  std::string subcommand;
  json config = json::object();
  std::uint64_t seed = 0;
  bool seed_generated = false;
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<std::pair<std::string, std::string>> outputs;
  double wall_clock_seconds = 0.0;
  std::string started_at;
  std::string version = DIVTOPIC_VERSION;

  void add_input(const std::string& path) { inputs.emplace_back(path, file_digest(path)); }
  void add_output(const std::string& path) { outputs.emplace_back(path, file_digest(path)); }

  json to_json() const {
    json j;
    j["subcommand"] = subcommand;
    j["config"] = config;
    j["seed"] = seed;
    j["seed_generated"] = seed_generated;
    json in = json::object();
    for (const auto& [p, d] : inputs) in[p] = d;
    j["inputs"] = in;
    json out = json::object();
    for (const auto& [p, d] : outputs) out[p] = d;
    j["outputs"] = out;
    j["started_at"] = started_at;
    j["wall_clock_seconds"] = wall_clock_seconds;
    j["version"] = version;
    return j;
  }

  static RunManifest from_json(const json& j) {
    RunManifest m;
    m.subcommand = j.at("subcommand").get<std::string>();
    m.config = j.at("config");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.seed_generated = j.value("seed_generated", false);
    for (const auto& [p, d] : j.at("inputs").items()) m.inputs.emplace_back(p, d.get<std::string>());
    for (const auto& [p, d] : j.at("outputs").items()) m.outputs.emplace_back(p, d.get<std::string>());
    m.started_at = j.value("started_at", "");
    m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    m.version = j.value("version", "");
    return m;
  }
};

inline RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  try {
    return RunManifest::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError(path + ": not a run manifest (" + e.what() + ")");
  }
}

namespace detail {

inline std::string timestamp_utc() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::uint64_t fresh_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

// Options excluded from the recorded config: they name the run, not its inputs.
inline bool is_meta_option(const std::string& name) {
  return name == "help" || name == "config" || name == "manifest";
}

inline json capture_config(const CLI::App& sub) {
  json config = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (is_meta_option(name)) continue;
    if (opt->get_expected_min() == 0) {
      config[name] = opt->count() > 0;
      continue;
    }
    std::vector<std::string> values;
    if (opt->count() > 0) {
      values = opt->results();
    } else if (opt->get_items_expected_max() == 1 && !opt->get_default_str().empty()) {
      values = {opt->get_default_str()};
    } else {
      continue;
    }
    if (opt->get_items_expected_max() > 1) {
      config[name] = values;
    } else {
      config[name] = values.back();
    }
  }
  return config;
}

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

/// key=value lines; '#' starts a comment. Keys may carry a leading "--".
inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    while (!key.empty() && key.front() == '-') key.erase(key.begin());
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

inline std::vector<std::string> split_values(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream in(v);
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

inline bool truthy(const std::string& v) { return v == "1" || v == "true" || v == "yes" || v == "on"; }

// True when any of the option's spellings appears among the explicit arguments.
inline bool given_explicitly(const CLI::App& sub, const CLI::Option* opt, const std::vector<std::string>& args) {
  for (const std::string& a : args) {
    if (a.size() < 2 || a[0] != '-') continue;
    const std::string name = a.substr(0, a.find('='));
    if (sub.get_option_no_throw(name) == opt) return true;
  }
  return false;
}

/// Arguments contributed by key=value pairs, skipping options already given.
inline std::vector<std::string> config_args(const CLI::App& sub,
                                            const std::vector<std::pair<std::string, std::string>>& pairs,
                                            const std::vector<std::string>& explicit_args) {
  std::vector<std::string> out;
  for (const auto& [key, value] : pairs) {
    const CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (!opt) throw UsageError("config key '" + key + "' is not an option of '" + sub.get_name() + "'");
    if (given_explicitly(sub, opt, explicit_args)) continue;
    if (opt->get_expected_min() == 0) {
      if (truthy(value)) out.push_back("--" + key);
      continue;
    }
    out.push_back("--" + key);
    if (opt->get_items_expected_max() > 1) {
      for (const std::string& v : split_values(value)) out.push_back(v);
    } else {
      out.push_back(value);
    }
  }
  return out;
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir + "': " + ec.message());
}

inline std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

inline std::string sibling(const std::string& file, const std::string& suffix) {
  fs::path p(file);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

}  // namespace detail

/// Shared state of one subcommand invocation.
struct Session {
  RunManifest manifest;
  std::optional<std::uint64_t> seed_flag;
  std::string manifest_path;
  std::string config_path;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  std::uint64_t seed() {
    if (seed_flag) {
      manifest.seed = *seed_flag;
    } else if (!manifest.seed_generated) {
      manifest.seed = detail::fresh_seed();
      manifest.seed_generated = true;
    }
    return manifest.seed;
  }

  void finish(const std::string& default_manifest) {
    manifest.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const std::string path = manifest_path.empty() ? default_manifest : manifest_path;
    write_atomically(path, manifest.to_json().dump(2) + "\n");
  }
};

namespace detail {

inline void add_common(CLI::App* sub, Session& s, bool seeded) {
  sub->add_option("--config", s.config_path, "key=value file; flags on the command line win");
  sub->add_option("--manifest", s.manifest_path, "Where to write the run manifest");
  if (seeded) sub->add_option("--seed", s.seed_flag, "RNG seed; generated and recorded when absent");
}

inline Corpus load_corpus_input(Session& s, const std::string& docs, const std::string& vocab) {
  s.manifest.add_input(docs);
  if (!vocab.empty()) s.manifest.add_input(vocab);
  return load_bow(docs, vocab);
}

inline TopicModel load_model_input(Session& s, const std::string& path) {
  s.manifest.add_input(path);
  return read_model(path);
}

inline std::optional<Vocabulary> load_vocab_input(Session& s, const std::string& path) {
  if (path.empty()) return std::nullopt;
  s.manifest.add_input(path);
  return Vocabulary::load(path);
}

inline selection::TopicRanking all_topics(const TopicModel& model) {
  return selection::top_k_by_size(model, model.num_topics());
}

// Every row of the model, in model order, as a ranking.
inline selection::TopicRanking model_order(const TopicModel& model) {
  selection::TopicRanking r;
  for (std::size_t i = 0; i < model.num_topics(); ++i) {
    r.items.push_back({model.topic_ids[i], model.proportion(i), model.proportion(i)});
  }
  return r;
}

inline selection::TopicRanking load_selection_input(Session& s, const std::string& path, const TopicModel& model) {
  if (path.empty()) return model_order(model);
  s.manifest.add_input(path);
  selection::TopicRanking r = selection::read_ranking(path);
  for (const auto& item : r.items) model.row_of(item.topic_id);
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands

struct IngestArgs {
  std::string docs, vocab, out_dir;
  std::size_t holdout_docs = 0;
  double word_fraction = 0.8;
};

inline int cmd_ingest(Session& s, const IngestArgs& a, std::ostream& out) {
  const Corpus corpus = detail::load_corpus_input(s, a.docs, a.vocab);
  detail::ensure_dir(a.out_dir);
  const std::string train_path = detail::join_path(a.out_dir, "train.bow");
  const std::string vocab_path = detail::join_path(a.out_dir, "vocab.txt");
  std::size_t held = 0;
  if (a.holdout_docs > 0) {
    const HoldoutResult split = split_holdout_count(corpus, a.holdout_docs, a.word_fraction, s.seed());
    const std::string holdout_path = detail::join_path(a.out_dir, "holdout.txt");
    write_bow(split.train, train_path);
    write_holdout(split.holdout, corpus.vocab_size(), holdout_path);
    s.manifest.add_output(train_path);
    s.manifest.add_output(holdout_path);
    held = split.holdout.size();
    out << "train documents: " << split.train.num_docs() << "\n";
  } else {
    write_bow(corpus, train_path);
    s.manifest.add_output(train_path);
    out << "train documents: " << corpus.num_docs() << "\n";
  }
  write_vocab(corpus.vocabulary(), vocab_path);
  s.manifest.add_output(vocab_path);
  out << "held-out documents: " << held << "\n"
      << "vocabulary: " << corpus.vocab_size() << "\n"
      << "dropped empty documents: " << corpus.dropped_empty() << "\n";
  s.finish(detail::join_path(a.out_dir, "manifest.json"));
  return kOk;
}

struct TrainArgs {
  std::string model, corpus, vocab, out_dir;
  std::optional<std::size_t> topics, iters, sweeps, burn_in, warmup, refresh_every, patience;
  std::optional<double> gamma, walk_alpha, tol, beta, alpha0, activity_threshold;
  std::optional<std::string> organic_norm;
  bool fixed_alpha = false;
  bool theta = false;
  std::size_t threads = 1;
};

inline int cmd_train(Session& s, const TrainArgs& a, std::ostream& out) {
  const bool is_div = a.model == "divplsa" || a.model == "divlda";
  const bool is_lda = a.model == "lda" || a.model == "divlda";
  auto forbid = [&](bool present, const char* flag) {
    if (present) throw UsageError(std::string(flag) + " does not apply to --model " + a.model);
  };
  forbid(!is_div && (a.gamma || a.walk_alpha || a.warmup || a.refresh_every || a.patience || a.organic_norm),
         "walk options");
  forbid(!is_lda && (a.sweeps || a.beta || a.alpha0 || a.fixed_alpha), "sampler options");
  forbid(is_lda && (a.iters || a.tol), "--iters/--tol");
  forbid(!is_lda && a.burn_in, "--burn-in");
  forbid(a.model != "divplsa" && a.activity_threshold.has_value(), "--activity-threshold");
  forbid(is_lda && a.threads != 1, "--threads");

  const Corpus corpus = detail::load_corpus_input(s, a.corpus, a.vocab);
  detail::ensure_dir(a.out_dir);
  const std::uint64_t seed = s.seed();
  TopicModel model;
  std::vector<TracePoint> trace;
  std::vector<std::vector<double>> sizes_trace;

  if (a.model == "plsa") {
    plsa::PlsaConfig c;
    c.num_topics = a.topics.value_or(c.num_topics);
    c.max_iters = a.iters.value_or(c.max_iters);
    c.tol = a.tol.value_or(c.tol);
    c.seed = seed;
    c.threads = a.threads;
    const plsa::PlsaResult r = plsa::train(corpus, c);
    model = plsa::to_model(r, corpus);
    trace = r.trace;
  } else if (a.model == "divplsa") {
    divplsa::DivPlsaConfig c;
    c.start_topics = a.topics.value_or(c.start_topics);
    c.gamma = a.gamma.value_or(c.gamma);
    c.walk_alpha = a.walk_alpha.value_or(c.walk_alpha);
    c.warmup_iters = a.warmup.value_or(c.warmup_iters);
    c.refresh_every = a.refresh_every.value_or(c.refresh_every);
    c.active_patience = a.patience.value_or(c.active_patience);
    c.max_iters = a.iters.value_or(c.max_iters);
    c.tol = a.tol.value_or(c.tol);
    c.activity_threshold = a.activity_threshold.value_or(c.activity_threshold);
    if (a.organic_norm) c.organic_norm = parse_organic_norm(*a.organic_norm);
    c.seed = seed;
    c.threads = a.threads;
    const divplsa::DivPlsaResult r = divplsa::train(corpus, c);
    model = divplsa::to_model(r, corpus);
    trace = r.trace.points;
    sizes_trace = r.trace.sizes;
  } else if (a.model == "lda") {
    lda::LdaConfig c;
    c.num_topics = a.topics.value_or(c.num_topics);
    c.sweeps = a.sweeps.value_or(c.sweeps);
    c.burn_in = a.burn_in.value_or(c.burn_in);
    c.beta = a.beta.value_or(c.beta);
    c.alpha0 = a.alpha0.value_or(c.alpha0);
    c.optimize_alpha = !a.fixed_alpha;
    c.seed = seed;
    const lda::LdaResult r = lda::train(corpus, c);
    model = lda::to_model(r.state, "lda", r.sweeps);
    trace = r.trace;
  } else {
    divlda::DivLdaConfig c;
    c.start_topics = a.topics.value_or(c.start_topics);
    c.gamma = a.gamma.value_or(c.gamma);
    c.walk_alpha = a.walk_alpha.value_or(c.walk_alpha);
    c.warmup_sweeps = a.warmup.value_or(c.warmup_sweeps);
    c.refresh_every = a.refresh_every.value_or(c.refresh_every);
    c.active_patience = a.patience.value_or(c.active_patience);
    c.total_sweeps = a.sweeps.value_or(c.total_sweeps);
    c.alpha_burn_in = a.burn_in.value_or(c.alpha_burn_in);
    c.beta = a.beta.value_or(c.beta);
    c.alpha0 = a.alpha0.value_or(c.alpha0);
    if (a.organic_norm) c.organic_norm = parse_organic_norm(*a.organic_norm);
    c.seed = seed;
    const divlda::DivLdaResult r = divlda::train(corpus, c);
    model = r.to_model();
    trace = r.trace;
  }

  const std::string model_path = detail::join_path(a.out_dir, "model.txt");
  const std::string trace_path = detail::join_path(a.out_dir, "trace.csv");
  write_model(model, model_path, a.theta);
  write_trace(trace, trace_path);
  s.manifest.add_output(model_path);
  s.manifest.add_output(trace_path);
  if (!sizes_trace.empty()) {
    const std::string sizes_path = detail::join_path(a.out_dir, "sizes.csv");
    std::ofstream f(sizes_path);
    f << "iteration";
    for (std::size_t k = 0; k < sizes_trace.front().size(); ++k) f << ",topic_" << k;
    f << '\n';
    for (std::size_t i = 0; i < sizes_trace.size(); ++i) {
      f << trace[i].iteration;
      for (double v : sizes_trace[i]) f << ',' << io::format_double(v);
      f << '\n';
    }
    f.close();
    s.manifest.add_output(sizes_path);
  }
  out << "model: " << a.model << "\n"
      << "topics: " << model.num_topics() << "\n"
      << "iterations: " << model.iteration << "\n"
      << "log-likelihood: " << io::format_double(model.likelihood) << "\n";
  s.finish(detail::join_path(a.out_dir, "manifest.json"));
  return kOk;
}

struct SelectArgs {
  std::string model, method, out, vocab, holdout;
  std::size_t k = 5;
  std::vector<double> lambda, alpha_dr, lambda_dr;
  bool grid = false;
  std::size_t fold_in_iters = 50;
  std::size_t top_n = 20;
};

inline int cmd_select(Session& s, const SelectArgs& a, std::ostream& out) {
  if (a.grid && a.holdout.empty()) throw UsageError("--grid needs --holdout to score the grid points");
  if (!a.grid && (a.lambda.size() > 1 || a.alpha_dr.size() > 1 || a.lambda_dr.size() > 1)) {
    throw UsageError("several parameter values given; add --grid to sweep them");
  }
  if (a.method == "topk" && (!a.lambda.empty() || !a.alpha_dr.empty() || !a.lambda_dr.empty() || a.grid)) {
    throw UsageError("--method topk takes no --lambda/--alpha-dr/--lambda-dr/--grid");
  }
  if (a.method == "mmr" && (!a.alpha_dr.empty() || !a.lambda_dr.empty())) {
    throw UsageError("--alpha-dr/--lambda-dr apply to --method divrank only");
  }
  if (a.method == "divrank" && !a.lambda.empty()) throw UsageError("--lambda applies to --method mmr only");
  if (a.k < 1) throw UsageError("--k must be >= 1");

  const TopicModel model = detail::load_model_input(s, a.model);
  const std::optional<Vocabulary> vocab = detail::load_vocab_input(s, a.vocab);

  struct Point {
    double lambda = 0, alpha_dr = 0, lambda_dr = 0;
  };
  std::vector<Point> points;
  const selection::DivRankOptions dr_defaults;
  if (a.method == "topk") {
    points.push_back({});
  } else if (a.method == "mmr") {
    std::vector<double> lambdas = a.lambda;
    if (lambdas.empty()) {
      if (a.grid) {
        for (int i = 0; i <= 10; ++i) lambdas.push_back(i / 10.0);
      } else {
        lambdas.push_back(0.5);
      }
    }
    for (double l : lambdas) points.push_back({l, 0, 0});
  } else {
    std::vector<double> alphas = a.alpha_dr;
    std::vector<double> lambdas = a.lambda_dr;
    if (alphas.empty()) alphas = a.grid ? std::vector<double>{0.1, 0.25, 0.5, 0.75, 0.9} : std::vector<double>{dr_defaults.alpha_dr};
    if (lambdas.empty()) lambdas = a.grid ? std::vector<double>{0.5, 0.7, 0.9} : std::vector<double>{dr_defaults.lambda_dr};
    for (double al : alphas) {
      for (double l : lambdas) points.push_back({0, al, l});
    }
  }

  auto run_point = [&](const Point& p) {
    if (a.method == "topk") return selection::top_k_by_size(model, a.k);
    if (a.method == "mmr") return selection::mmr_select(model, a.k, p.lambda);
    selection::DivRankOptions o;
    o.alpha_dr = p.alpha_dr;
    o.lambda_dr = p.lambda_dr;
    return selection::divrank_select(model, a.k, o);
  };

  selection::TopicRanking best = run_point(points.front());
  if (a.grid) {
    const std::vector<HoldoutSplit> holdout = read_holdout(a.holdout);
    s.manifest.add_input(a.holdout);
    evaluation::FoldInOptions fold;
    fold.iters = a.fold_in_iters;
    const std::string grid_path = detail::sibling(a.out, ".grid.csv");
    std::ofstream g(grid_path);
    if (!g) throw DataError("cannot write '" + grid_path + "'");
    g << "lambda,alpha_dr,lambda_dr,perplexity,topics\n";
    double best_pp = INFINITY;
    for (const Point& p : points) {
      const selection::TopicRanking r = run_point(p);
      const double pp = evaluation::perplexity(selection::restrict_model(model, r).phi, holdout, fold).perplexity;
      std::string ids;
      for (const auto& item : r.items) ids += (ids.empty() ? "" : " ") + std::to_string(item.topic_id);
      g << io::format_double(p.lambda) << ',' << io::format_double(p.alpha_dr) << ','
        << io::format_double(p.lambda_dr) << ',' << io::format_double(pp) << ',' << ids << '\n';
      if (pp < best_pp) {
        best_pp = pp;
        best = r;
      }
    }
    g.close();
    s.manifest.add_output(grid_path);
    out << "best grid perplexity: " << io::format_double(best_pp) << "\n";
  }
  selection::write_ranking(model, best, a.out, vocab ? &*vocab : nullptr, a.top_n);
  s.manifest.add_output(a.out);
  if (best.truncated) out << "warning: only " << best.size() << " live topics available\n";
  for (std::size_t i = 0; i < best.items.size(); ++i) {
    out << i + 1 << ". topic " << best.items[i].topic_id << " (" << std::fixed << std::setprecision(2)
        << 100.0 * best.items[i].proportion << "%)\n";
  }
  out << std::defaultfloat;
  s.finish(a.out + ".manifest.json");
  return kOk;
}

struct EvalArgs {
  std::string metric, model, selection, reference, holdout, out;
  std::size_t top_n = 20;
  std::string smoothing = "zero-joint";
  double epsilon = 1.0;
  std::size_t fold_in_iters = 50;
};

inline int cmd_eval(Session& s, const EvalArgs& a, std::ostream& out) {
  if (a.metric == "pmi" && a.reference.empty()) throw UsageError("--metric pmi needs --reference");
  if (a.metric == "perplexity" && a.holdout.empty()) throw UsageError("--metric perplexity needs --holdout");
  const evaluation::Smoothing smoothing = evaluation::parse_smoothing(a.smoothing);
  const TopicModel model = detail::load_model_input(s, a.model);
  const selection::TopicRanking ranking = detail::load_selection_input(s, a.selection, model);
  const TopicModel chosen = selection::restrict_model(model, ranking);

  evaluation::EvalReport report;
  report.metric = a.metric;
  report.k_used = chosen.num_topics();
  report.topic_ids = chosen.topic_ids;
  report.config = {{"model", a.model}, {"selection", a.selection.empty() ? "all" : a.selection}};
  if (a.metric == "pmi") {
    const Corpus reference = detail::load_corpus_input(s, a.reference, "");
    evaluation::PmiOptions o;
    o.top_n = a.top_n;
    o.smoothing = smoothing;
    o.epsilon = a.epsilon;
    const evaluation::PmiResult r = evaluation::pmi_coherence(chosen.phi, reference, o);
    report.per_topic_pmi = r.per_topic;
    report.mean_pmi = r.mean;
    report.zero_joint_pairs = r.zero_joint_pairs;
    report.config.insert(report.config.end(), {{"reference", a.reference},
                                               {"top_n", std::to_string(a.top_n)},
                                               {"smoothing", evaluation::to_string(smoothing)},
                                               {"epsilon", io::format_double(a.epsilon)}});
  } else {
    s.manifest.add_input(a.holdout);
    std::size_t holdout_vocab = 0;
    const std::vector<HoldoutSplit> holdout = read_holdout(a.holdout, &holdout_vocab);
    if (holdout_vocab != model.vocab_size) {
      throw DataError("holdout vocabulary (" + std::to_string(holdout_vocab) + ") differs from the model's (" +
                      std::to_string(model.vocab_size) + ")");
    }
    evaluation::FoldInOptions fold;
    fold.iters = a.fold_in_iters;
    const evaluation::PerplexityResult r = evaluation::perplexity(chosen.phi, holdout, fold);
    report.perplexity = r.perplexity;
    report.floored_tokens = r.floored_tokens;
    report.config.insert(report.config.end(), {{"holdout", a.holdout},
                                               {"fold_in_iters", std::to_string(a.fold_in_iters)}});
  }
  if (!a.out.empty()) {
    evaluation::write_report(report, a.out);
    s.manifest.add_output(a.out);
  }

  out << std::left << std::setw(18) << "metric" << report.metric << "\n"
      << std::setw(18) << "topics used" << report.k_used << "\n";
  if (a.metric == "pmi") {
    out << std::setw(18) << "mean PMI" << io::format_double(report.mean_pmi) << "\n"
        << std::setw(18) << "zero-joint pairs" << report.zero_joint_pairs << "\n";
    for (std::size_t i = 0; i < report.per_topic_pmi.size(); ++i) {
      out << std::setw(18) << ("  topic " + std::to_string(report.topic_ids[i]))
          << io::format_double(report.per_topic_pmi[i]) << "\n";
    }
  } else {
    out << std::setw(18) << "perplexity" << io::format_double(report.perplexity) << "\n"
        << std::setw(18) << "floored tokens" << report.floored_tokens << "\n";
  }
  s.finish(a.out.empty() ? detail::sibling(a.model, ".eval.manifest.json") : a.out + ".manifest.json");
  return kOk;
}

struct ExportTopicsArgs {
  std::string model, selection, vocab, out;
  std::size_t top_words = 20;
};

/// Topic table: rank, topic_id, proportion, top words space-joined.
inline void write_topic_table(const TopicModel& model, const selection::TopicRanking& ranking,
                              const Vocabulary* vocab, std::size_t top_n, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path + "'");
  f << "rank,topic_id,proportion,top_words\n";
  for (std::size_t i = 0; i < ranking.items.size(); ++i) {
    const std::size_t row = model.row_of(ranking.items[i].topic_id);
    const auto words = top_words(model.phi.row(row), top_n);
    f << i + 1 << ',' << model.topic_ids[row] << ',' << io::format_double(model.proportion(row)) << ','
      << io::csv_escape(join_words(words, vocab)) << '\n';
  }
}

inline int cmd_export_topics(Session& s, const ExportTopicsArgs& a, std::ostream& out) {
  if (a.top_words < 1) throw UsageError("--top-words must be >= 1");
  const TopicModel model = detail::load_model_input(s, a.model);
  const std::optional<Vocabulary> vocab = detail::load_vocab_input(s, a.vocab);
  const selection::TopicRanking ranking =
      a.selection.empty() ? detail::all_topics(model) : detail::load_selection_input(s, a.selection, model);
  write_topic_table(model, ranking, vocab ? &*vocab : nullptr, a.top_words, a.out);
  s.manifest.add_output(a.out);
  out << "exported " << ranking.size() << " topics\n";
  s.finish(a.out + ".manifest.json");
  return kOk;
}

struct ExportNetworkArgs {
  std::string model, vocab, out_dir;
  std::size_t top_words = 10;
};

inline int cmd_export_network(Session& s, const ExportNetworkArgs& a, std::ostream& out) {
  const TopicModel model = detail::load_model_input(s, a.model);
  const std::optional<Vocabulary> vocab = detail::load_vocab_input(s, a.vocab);
  detail::ensure_dir(a.out_dir);
  std::vector<bool> active(model.num_topics());
  for (std::size_t r = 0; r < model.num_topics(); ++r) active[r] = model.sizes[r] > 0.0;
  const DenseMatrix sim = similarity_matrix(model.phi, active);

  const std::string edges_path = detail::join_path(a.out_dir, "edges.csv");
  const std::string nodes_path = detail::join_path(a.out_dir, "nodes.csv");
  std::size_t edges = 0;
  {
    std::ofstream e(edges_path);
    if (!e) throw DataError("cannot write '" + edges_path + "'");
    e << "src,dst,weight\n";
    for (std::size_t i = 0; i < model.num_topics(); ++i) {
      for (std::size_t j = i + 1; j < model.num_topics(); ++j) {
        if (!active[i] || !active[j] || !(sim(i, j) > 0.0)) continue;
        e << model.topic_ids[i] << ',' << model.topic_ids[j] << ',' << io::format_double(sim(i, j)) << '\n';
        ++edges;
      }
    }
    std::ofstream n(nodes_path);
    if (!n) throw DataError("cannot write '" + nodes_path + "'");
    n << "topic_id,size,top_words\n";
    for (std::size_t i = 0; i < model.num_topics(); ++i) {
      if (!active[i]) continue;
      n << model.topic_ids[i] << ',' << io::format_double(model.sizes[i]) << ','
        << io::csv_escape(join_words(top_words(model.phi.row(i), a.top_words), vocab ? &*vocab : nullptr)) << '\n';
    }
  }
  s.manifest.add_output(edges_path);
  s.manifest.add_output(nodes_path);
  out << "nodes: " << std::count(active.begin(), active.end(), true) << ", edges: " << edges << "\n";
  s.finish(detail::join_path(a.out_dir, "manifest.json"));
  return kOk;
}

struct ReportArgs {
  std::string trace, out;
};

inline int cmd_report(Session& s, const ReportArgs& a, std::ostream& out) {
  s.manifest.add_input(a.trace);
  const std::vector<TracePoint> trace = read_trace(a.trace);
  if (a.out.empty()) {
    out << "iteration,likelihood,active_count\n";
    for (const TracePoint& p : trace) {
      out << p.iteration << ',' << io::format_double(p.likelihood) << ',' << p.active_count << '\n';
    }
    s.finish(detail::sibling(a.trace, ".report.manifest.json"));
  } else {
    write_trace(trace, a.out);
    s.manifest.add_output(a.out);
    s.finish(a.out + ".manifest.json");
  }
  return kOk;
}

struct SynthArgs {
  std::string out_dir;
  std::size_t topics = 5, vocab_size = 500, docs = 2000, doc_len = 100;
  double prior = 0.1, theme_decay = 1.0, zipf = 1.0, background = 0.0;
};

inline int cmd_synth(Session& s, const SynthArgs& a, std::ostream& out) {
  const DenseMatrix truth = block_topics(a.topics, a.vocab_size, a.zipf, a.background);
  const SyntheticCorpus syn =
      generate_synthetic(truth, decaying_prior(a.topics, a.prior, a.theme_decay), a.docs, a.doc_len, s.seed());
  detail::ensure_dir(a.out_dir);
  const std::string docs_path = detail::join_path(a.out_dir, "corpus.bow");
  const std::string vocab_path = detail::join_path(a.out_dir, "vocab.txt");
  const std::string truth_path = detail::join_path(a.out_dir, "truth.txt");
  write_bow(syn.corpus, docs_path);
  write_vocab(syn.corpus.vocabulary(), vocab_path);
  TopicModel m;
  m.kind = "truth";
  m.vocab_size = a.vocab_size;
  m.num_docs = syn.corpus.num_docs();
  m.token_total = static_cast<double>(syn.corpus.token_total());
  m.phi = syn.topics;
  for (std::size_t k = 0; k < a.topics; ++k) {
    m.topic_ids.push_back(k);
    double mass = 0.0;
    for (std::size_t d = 0; d < syn.doc_topic.rows(); ++d) mass += syn.doc_topic(d, k);
    m.sizes.push_back(mass * static_cast<double>(a.doc_len));
  }
  write_model(m, truth_path, false);
  for (const auto& p : {docs_path, vocab_path, truth_path}) s.manifest.add_output(p);
  out << "documents: " << syn.corpus.num_docs() << ", tokens: " << syn.corpus.token_total() << "\n";
  s.finish(detail::join_path(a.out_dir, "manifest.json"));
  return kOk;
}

// ---------------------------------------------------------------------------
// Entry point

namespace detail {

inline std::vector<std::string> replay_args(const RunManifest& m,
                                            const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::map<std::string, json> config;
  for (const auto& [k, v] : m.config.items()) config[k] = v;
  for (const auto& [k, v] : overrides) config[k] = v;
  config["seed"] = std::to_string(m.seed);
  std::vector<std::string> args{m.subcommand};
  for (const auto& [k, v] : config) {
    if (v.is_boolean()) {
      if (v.get<bool>()) args.push_back("--" + k);
    } else if (v.is_array()) {
      args.push_back("--" + k);
      for (const auto& item : v) args.push_back(item.get<std::string>());
    } else {
      args.push_back("--" + k);
      args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
  }
  return args;
}

}  // namespace detail

/// Parses and runs one subcommand. Exit codes: 0 ok, 1 usage error, 2 data error.
inline int run(const std::vector<std::string>& argv_in, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Diversified topic modeling: train, summarize and evaluate topic models", "divtopic"};
  app.require_subcommand(1);
  app.set_version_flag("--version", DIVTOPIC_VERSION);
  app.option_defaults()->always_capture_default();
  Session session;

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Load a bag-of-words corpus and split off held-out documents");
  c_ingest->add_option("--docs", ingest.docs, "Docs file (D, W, NNZ header then docID wordID count)")
      ->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--vocab", ingest.vocab, "Vocabulary file, one term per line")->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--holdout-docs", ingest.holdout_docs, "Number of documents to hold out (0 = none)");
  c_ingest->add_option("--word-fraction", ingest.word_fraction, "Observed share of each held-out document's tokens");
  c_ingest->add_option("--out-dir", ingest.out_dir, "Output directory")->required();
  detail::add_common(c_ingest, session, true);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a plsa, lda, divplsa or divlda model");
  c_train->add_option("--model", train.model, "Model family")
      ->required()->check(CLI::IsMember({"plsa", "lda", "divplsa", "divlda"}));
  c_train->add_option("--corpus", train.corpus, "Training docs file")->required()->check(CLI::ExistingFile);
  c_train->add_option("--vocab", train.vocab, "Vocabulary file")->check(CLI::ExistingFile);
  c_train->add_option("--out-dir", train.out_dir, "Output directory")->required();
  c_train->add_option("--topics,--start-topics", train.topics, "Number of (starting) topics");
  c_train->add_option("--iters,--max-iters", train.iters, "EM iterations (plsa, divplsa)");
  c_train->add_option("--tol", train.tol, "Relative likelihood tolerance (plsa, divplsa)");
  c_train->add_option("--sweeps", train.sweeps, "Gibbs sweeps (lda, divlda)");
  c_train->add_option("--burn-in", train.burn_in, "Sweeps before alpha optimization (lda, divlda)");
  c_train->add_option("--beta", train.beta, "Symmetric topic-word prior (lda, divlda)");
  c_train->add_option("--alpha0", train.alpha0, "Initial symmetric doc-topic prior; default 50/K (lda, divlda)");
  c_train->add_flag("--fixed-alpha", train.fixed_alpha, "Keep alpha at its initial value (lda)");
  c_train->add_option("--gamma", train.gamma, "Reinforcement exponent (divplsa 1.5, divlda 1.0)");
  c_train->add_option("--walk-alpha", train.walk_alpha, "Walk leave probability");
  c_train->add_option("--warmup", train.warmup, "Iterations or sweeps before the walk starts");
  c_train->add_option("--refresh-every", train.refresh_every, "Network refresh period");
  c_train->add_option("--patience", train.patience, "Stable refreshes needed to stop");
  c_train->add_option("--organic-norm", train.organic_norm, "Walk budget normalization: with-self or neighbors")
      ->check(CLI::IsMember({"with-self", "neighbors"}));
  c_train->add_option("--activity-threshold", train.activity_threshold, "Soft size below which topics die (divplsa)");
  c_train->add_option("--threads", train.threads, "Worker threads for EM accumulation; 1 is bit-reproducible")
      ->check(CLI::PositiveNumber);
  c_train->add_flag("--theta", train.theta, "Store document-topic rows in the model file");
  detail::add_common(c_train, session, true);

  SelectArgs sel;
  auto* c_select = app.add_subcommand("select", "Pick K summary topics from a trained model");
  c_select->add_option("--model", sel.model, "Model file")->required()->check(CLI::ExistingFile);
  c_select->add_option("--method", sel.method, "Selector")->required()->check(CLI::IsMember({"topk", "mmr", "divrank"}));
  c_select->add_option("--k", sel.k, "Number of topics");
  c_select->add_option("--lambda", sel.lambda, "MMR relevance weight(s)");
  c_select->add_option("--alpha-dr", sel.alpha_dr, "DivRank self-loop weight(s)");
  c_select->add_option("--lambda-dr", sel.lambda_dr, "DivRank walk weight(s) against the preference vector");
  c_select->add_flag("--grid", sel.grid, "Sweep the parameter values and keep the lowest held-out perplexity");
  c_select->add_option("--holdout", sel.holdout, "Holdout file scoring the grid")->check(CLI::ExistingFile);
  c_select->add_option("--fold-in-iters", sel.fold_in_iters, "Fold-in EM iterations for grid scoring");
  c_select->add_option("--vocab", sel.vocab, "Vocabulary for the top-word column")->check(CLI::ExistingFile);
  c_select->add_option("--top-n", sel.top_n, "Top words listed per topic");
  c_select->add_option("--out", sel.out, "Ranking CSV")->required();
  detail::add_common(c_select, session, false);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "PMI coherence or held-out perplexity of a topic selection");
  c_eval->add_option("--metric", ev.metric, "Metric")->required()->check(CLI::IsMember({"pmi", "perplexity"}));
  c_eval->add_option("--model", ev.model, "Model file")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--selection", ev.selection, "Ranking CSV; all topics when absent")->check(CLI::ExistingFile);
  c_eval->add_option("--reference", ev.reference, "Reference docs file for PMI")->check(CLI::ExistingFile);
  c_eval->add_option("--holdout", ev.holdout, "Holdout file for perplexity")->check(CLI::ExistingFile);
  c_eval->add_option("--top-n", ev.top_n, "Top words per topic for PMI");
  c_eval->add_option("--smoothing", ev.smoothing, "Joint-count smoothing")
      ->check(CLI::IsMember({"zero-joint", "add-all", "none"}));
  c_eval->add_option("--epsilon", ev.epsilon, "Smoothing pseudo-count");
  c_eval->add_option("--fold-in-iters", ev.fold_in_iters, "Fold-in EM iterations");
  c_eval->add_option("--out", ev.out, "Report CSV");
  detail::add_common(c_eval, session, false);

  ExportTopicsArgs et;
  auto* c_et = app.add_subcommand("export-topics", "Topic table with proportions and top words");
  c_et->add_option("--model", et.model, "Model file")->required()->check(CLI::ExistingFile);
  c_et->add_option("--selection", et.selection, "Ranking CSV; all topics by size when absent")->check(CLI::ExistingFile);
  c_et->add_option("--vocab", et.vocab, "Vocabulary file")->check(CLI::ExistingFile);
  c_et->add_option("--top-words", et.top_words, "Words per topic");
  c_et->add_option("--out", et.out, "Topic table CSV")->required();
  detail::add_common(c_et, session, false);

  ExportNetworkArgs en;
  auto* c_en = app.add_subcommand("export-network", "Topic similarity graph as edge and node CSVs");
  c_en->add_option("--model", en.model, "Model file")->required()->check(CLI::ExistingFile);
  c_en->add_option("--vocab", en.vocab, "Vocabulary file")->check(CLI::ExistingFile);
  c_en->add_option("--top-words", en.top_words, "Words per node");
  c_en->add_option("--out-dir", en.out_dir, "Output directory")->required();
  detail::add_common(c_en, session, false);

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "Validate a training trace and print it as CSV");
  c_rep->add_option("--trace", rep.trace, "Trace CSV")->required()->check(CLI::ExistingFile);
  c_rep->add_option("--out", rep.out, "Write here instead of stdout");
  detail::add_common(c_rep, session, false);

  SynthArgs syn;
  auto* c_syn = app.add_subcommand("synth", "Generate a corpus from planted block topics");
  c_syn->add_option("--topics", syn.topics, "Planted topics");
  c_syn->add_option("--vocab-size", syn.vocab_size, "Vocabulary size");
  c_syn->add_option("--docs", syn.docs, "Documents");
  c_syn->add_option("--doc-len", syn.doc_len, "Tokens per document");
  c_syn->add_option("--prior", syn.prior, "Mean Dirichlet concentration of document mixtures");
  c_syn->add_option("--theme-decay", syn.theme_decay, "Concentration of topic k scales with decay^k; 1 is symmetric");
  c_syn->add_option("--zipf", syn.zipf, "Zipf exponent inside each topic's block");
  c_syn->add_option("--background", syn.background, "Mass spread uniformly over the vocabulary");
  c_syn->add_option("--out-dir", syn.out_dir, "Output directory")->required();
  detail::add_common(c_syn, session, true);

  std::string replay_manifest;
  std::vector<std::string> replay_set;
  auto* c_replay = app.add_subcommand("replay", "Re-run the invocation recorded in a manifest");
  c_replay->add_option("--manifest", replay_manifest, "Manifest to replay")->required()->check(CLI::ExistingFile);
  c_replay->add_option("--set", replay_set, "key=value overrides, e.g. out-dir=other");

  std::vector<std::string> args(argv_in.begin() + (argv_in.empty() ? 0 : 1), argv_in.end());
  CLI::App* active = nullptr;
  try {
    // Fold a --config file into the arguments before parsing so that the
    // usual validation applies and explicit flags win.
    if (!args.empty()) {
      auto it = std::find(args.begin(), args.end(), std::string("--config"));
      std::string cfg;
      if (it != args.end() && std::next(it) != args.end()) {
        cfg = *std::next(it);
      } else {
        for (const auto& a : args) {
          if (a.rfind("--config=", 0) == 0) cfg = a.substr(9);
        }
      }
      CLI::App* sub = app.get_subcommand_no_throw(args.front());
      if (!cfg.empty() && sub) {
        std::vector<std::string> rest(args.begin() + 1, args.end());
        std::vector<std::string> extra = detail::config_args(*sub, detail::read_config_file(cfg), rest);
        args.insert(args.begin() + 1, extra.begin(), extra.end());
      }
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    for (CLI::App* sub : app.get_subcommands()) active = sub;
    err << (active ? active->help() : app.help());
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  }

  active = app.get_subcommands().front();
  try {
    if (active == c_replay) {
      std::vector<std::pair<std::string, std::string>> overrides;
      for (const std::string& kv : replay_set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
      }
      std::vector<std::string> next{"divtopic"};
      for (std::string& a : detail::replay_args(read_manifest(replay_manifest), overrides)) next.push_back(std::move(a));
      return run(next, out, err);
    }
    session.manifest.subcommand = active->get_name();
    session.manifest.config = detail::capture_config(*active);
    session.manifest.started_at = detail::timestamp_utc();
    if (!session.config_path.empty()) session.manifest.add_input(session.config_path);
    if (active == c_ingest) return cmd_ingest(session, ingest, out);
    if (active == c_train) return cmd_train(session, train, out);
    if (active == c_select) return cmd_select(session, sel, out);
    if (active == c_eval) return cmd_eval(session, ev, out);
    if (active == c_et) return cmd_export_topics(session, et, out);
    if (active == c_en) return cmd_export_network(session, en, out);
    if (active == c_rep) return cmd_report(session, rep, out);
    return cmd_synth(session, syn, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace divtopic::cli
