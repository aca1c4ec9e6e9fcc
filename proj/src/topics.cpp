#include "persrank/topics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "persrank/errors.hpp"
#include "persrank/rng.hpp"

namespace persrank::topics {

namespace {

// Document frequencies over distinct terms per document.
std::map<std::string, int> doc_frequencies(const corpus::DocumentTable& docs) {
  std::map<std::string, int> df;
  for (const auto& doc : docs.docs()) {
    std::set<std::string> seen(doc.tokens.begin(), doc.tokens.end());
    for (const auto& term : seen) ++df[term];
  }
  return df;
}

void build_vocabulary(const corpus::DocumentTable& docs, const TopicModelConfig& cfg,
                      TopicModelState& state) {
  auto df = doc_frequencies(docs);
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [term, count] : df) {
    if (count >= cfg.min_doc_freq) kept.emplace_back(term, count);
  }
  const std::size_t drop =
      static_cast<std::size_t>(cfg.drop_top_frac * static_cast<double>(kept.size()));
  if (drop > 0) {
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    kept.erase(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(drop));
  }
  if (kept.empty()) throw DataError("train_lda: empty vocabulary after frequency filtering");
  std::sort(kept.begin(), kept.end());
  state.vocabulary.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    state.vocabulary.push_back(kept[i].first);
    state.term_index.emplace(kept[i].first, static_cast<int>(i));
  }
}

inline int sample_topic(const std::vector<int>& n_dk, const std::vector<int>& n_wk,
                        const std::vector<long long>& n_k, double alpha, double beta,
                        double v_beta, int T, Rng& rng, std::vector<double>& scratch) {
  double total = 0.0;
  for (int k = 0; k < T; ++k) {
    const double p = (n_dk[k] + alpha) * (n_wk[k] + beta) /
                     (static_cast<double>(n_k[k]) + v_beta);
    total += p;
    scratch[k] = total;
  }
  const double u = rng.uniform01() * total;
  for (int k = 0; k < T; ++k) {
    if (u < scratch[k]) return k;
  }
  return T - 1;
}

std::vector<double> smoothed_distribution(const std::vector<int>& counts, double alpha, int T) {
  long long n = 0;
  for (int c : counts) n += c;
  const double denom = static_cast<double>(n) + T * alpha;
  std::vector<double> dist(static_cast<std::size_t>(T));
  for (int k = 0; k < T; ++k) dist[static_cast<std::size_t>(k)] = (counts[k] + alpha) / denom;
  return dist;
}

}  // namespace

TopicModelState train_lda(const corpus::DocumentTable& docs, const TopicModelConfig& config,
                          const SweepObserver& on_sweep) {
  if (docs.empty()) throw DataError("train_lda: empty corpus");
  if (config.T < 2) throw DataError("train_lda: T must be at least 2");
  if (config.resolved_alpha() <= 0.0 || config.beta <= 0.0) {
    throw DataError("train_lda: priors must be positive");
  }
  if (config.iterations < 1) throw DataError("train_lda: iterations must be >= 1");

  TopicModelState state;
  state.config = config;
  build_vocabulary(docs, config, state);
  const int V = state.vocab_size();
  const int T = config.T;
  if (T > V) {
    throw DataError("train_lda: T=" + std::to_string(T) + " exceeds vocabulary size " +
                    std::to_string(V));
  }

  const double alpha = config.resolved_alpha();
  const double beta = config.beta;
  const double v_beta = V * beta;

  state.word_topic.assign(static_cast<std::size_t>(V), std::vector<int>(T, 0));
  state.topic_totals.assign(static_cast<std::size_t>(T), 0);
  Rng rng(derive_seed(config.seed, 0x1da));

  for (const auto& doc : docs.docs()) {
    state.doc_index.emplace(doc.doc_id, static_cast<int>(state.doc_ids.size()));
    state.doc_ids.push_back(doc.doc_id);
    std::vector<int> terms;
    terms.reserve(doc.tokens.size());
    for (const auto& tok : doc.tokens) {
      auto it = state.term_index.find(tok);
      if (it != state.term_index.end()) terms.push_back(it->second);
    }
    std::vector<int> labels(terms.size());
    std::vector<int> n_dk(static_cast<std::size_t>(T), 0);
    for (std::size_t pos = 0; pos < terms.size(); ++pos) {
      const int z = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(T)));
      labels[pos] = z;
      ++n_dk[static_cast<std::size_t>(z)];
      ++state.word_topic[static_cast<std::size_t>(terms[pos])][static_cast<std::size_t>(z)];
      ++state.topic_totals[static_cast<std::size_t>(z)];
    }
    state.doc_terms.push_back(std::move(terms));
    state.assignments.push_back(std::move(labels));
    state.doc_topic.push_back(std::move(n_dk));
  }

  std::vector<double> scratch(static_cast<std::size_t>(T));
  const std::size_t D = state.doc_terms.size();
  for (int sweep = 0; sweep < config.iterations; ++sweep) {
    for (std::size_t d = 0; d < D; ++d) {
      auto& n_dk = state.doc_topic[d];
      const auto& terms = state.doc_terms[d];
      auto& labels = state.assignments[d];
      for (std::size_t pos = 0; pos < terms.size(); ++pos) {
        const int w = terms[pos];
        const int old_z = labels[pos];
        auto& n_wk = state.word_topic[static_cast<std::size_t>(w)];
        --n_dk[static_cast<std::size_t>(old_z)];
        --n_wk[static_cast<std::size_t>(old_z)];
        --state.topic_totals[static_cast<std::size_t>(old_z)];
        const int z = sample_topic(n_dk, n_wk, state.topic_totals, alpha, beta, v_beta, T,
                                   rng, scratch);
        labels[pos] = z;
        ++n_dk[static_cast<std::size_t>(z)];
        ++n_wk[static_cast<std::size_t>(z)];
        ++state.topic_totals[static_cast<std::size_t>(z)];
      }
    }
    state.loglik_per_sweep.push_back(log_likelihood(state));
    if (on_sweep) on_sweep(state, sweep + 1);
  }
  return state;
}

void check_count_tables(const TopicModelState& state) {
  const int T = state.config.T;
  const int V = state.vocab_size();
  std::vector<long long> col_sums(static_cast<std::size_t>(T), 0);
  for (int w = 0; w < V; ++w) {
    for (int k = 0; k < T; ++k) {
      const int c = state.word_topic[static_cast<std::size_t>(w)][static_cast<std::size_t>(k)];
      if (c < 0) throw NumericError("negative word-topic count");
      col_sums[static_cast<std::size_t>(k)] += c;
    }
  }
  for (int k = 0; k < T; ++k) {
    if (col_sums[static_cast<std::size_t>(k)] != state.topic_totals[static_cast<std::size_t>(k)]) {
      throw NumericError("word_topic column sum disagrees with topic_totals at topic " +
                         std::to_string(k));
    }
  }
  if (!state.has_assignments) return;
  // Rebuild every table from the raw assignments and require exact equality.
  std::vector<std::vector<int>> wt(static_cast<std::size_t>(V), std::vector<int>(T, 0));
  std::vector<long long> totals(static_cast<std::size_t>(T), 0);
  for (std::size_t d = 0; d < state.doc_terms.size(); ++d) {
    std::vector<int> dk(static_cast<std::size_t>(T), 0);
    for (std::size_t pos = 0; pos < state.doc_terms[d].size(); ++pos) {
      const int w = state.doc_terms[d][pos];
      const int z = state.assignments[d][pos];
      ++wt[static_cast<std::size_t>(w)][static_cast<std::size_t>(z)];
      ++dk[static_cast<std::size_t>(z)];
      ++totals[static_cast<std::size_t>(z)];
    }
    long long row = 0;
    for (int k = 0; k < T; ++k) {
      if (dk[static_cast<std::size_t>(k)] != state.doc_topic[d][static_cast<std::size_t>(k)]) {
        throw NumericError("doc_topic row disagrees with assignments for doc " +
                           state.doc_ids[d]);
      }
      row += dk[static_cast<std::size_t>(k)];
    }
    if (row != static_cast<long long>(state.doc_terms[d].size())) {
      throw NumericError("doc_topic row sum disagrees with token count for doc " +
                         state.doc_ids[d]);
    }
  }
  if (wt != state.word_topic || totals != state.topic_totals) {
    throw NumericError("count tables disagree with assignments");
  }
}

double log_likelihood(const TopicModelState& state) {
  const int T = state.config.T;
  const int V = state.vocab_size();
  const double alpha = state.config.resolved_alpha();
  const double beta = state.config.beta;
  const double lg_beta = std::lgamma(beta);
  const double lg_alpha = std::lgamma(alpha);

  double ll = T * (std::lgamma(V * beta) - V * lg_beta);
  for (int k = 0; k < T; ++k) {
    double acc = 0.0;
    for (int w = 0; w < V; ++w) {
      const int c = state.word_topic[static_cast<std::size_t>(w)][static_cast<std::size_t>(k)];
      acc += c == 0 ? lg_beta : std::lgamma(c + beta);
    }
    ll += acc - std::lgamma(static_cast<double>(state.topic_totals[static_cast<std::size_t>(k)]) +
                            V * beta);
  }
  if (!state.has_assignments) return ll;
  const std::size_t D = state.doc_topic.size();
  ll += static_cast<double>(D) * (std::lgamma(T * alpha) - T * lg_alpha);
  for (std::size_t d = 0; d < D; ++d) {
    long long n_d = 0;
    for (int k = 0; k < T; ++k) {
      const int c = state.doc_topic[d][static_cast<std::size_t>(k)];
      n_d += c;
      ll += c == 0 ? lg_alpha : std::lgamma(c + alpha);
    }
    ll -= std::lgamma(static_cast<double>(n_d) + T * alpha);
  }
  return ll;
}

DocumentTopics infer_doc_topics(const TopicModelState& state, const corpus::Document& doc) {
  const int T = state.config.T;
  const double alpha = state.config.resolved_alpha();

  auto it = state.doc_index.find(doc.doc_id);
  if (it != state.doc_index.end()) {
    const auto row = static_cast<std::size_t>(it->second);
    if (state.has_assignments) {
      return {smoothed_distribution(state.doc_topic[row], alpha, T), false};
    }
    if (row < state.stored_doc_dists.size()) {
      return {state.stored_doc_dists[row], false};
    }
  }

  std::vector<int> terms;
  terms.reserve(doc.tokens.size());
  for (const auto& tok : doc.tokens) {
    auto term = state.term_index.find(tok);
    if (term != state.term_index.end()) terms.push_back(term->second);
  }
  if (terms.empty()) {
    return {std::vector<double>(static_cast<std::size_t>(T), 1.0 / T), true};
  }

  std::uint64_t h = fnv1a64(doc.doc_id);
  for (const auto& tok : doc.tokens) h = fnv1a64(tok, h);
  Rng rng(derive_seed(state.config.seed, h));

  const double beta = state.config.beta;
  const double v_beta = state.vocab_size() * beta;
  std::vector<int> n_dk(static_cast<std::size_t>(T), 0);
  std::vector<int> labels(terms.size());
  for (std::size_t pos = 0; pos < terms.size(); ++pos) {
    const int z = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(T)));
    labels[pos] = z;
    ++n_dk[static_cast<std::size_t>(z)];
  }

  constexpr int kSweeps = 20;
  constexpr int kAveraged = 10;
  std::vector<double> mean(static_cast<std::size_t>(T), 0.0);
  std::vector<double> scratch(static_cast<std::size_t>(T));
  for (int sweep = 0; sweep < kSweeps; ++sweep) {
    for (std::size_t pos = 0; pos < terms.size(); ++pos) {
      const int w = terms[pos];
      const int old_z = labels[pos];
      --n_dk[static_cast<std::size_t>(old_z)];
      const int z = sample_topic(n_dk, state.word_topic[static_cast<std::size_t>(w)],
                                 state.topic_totals, alpha, beta, v_beta, T, rng, scratch);
      labels[pos] = z;
      ++n_dk[static_cast<std::size_t>(z)];
    }
    if (sweep >= kSweeps - kAveraged) {
      auto dist = smoothed_distribution(n_dk, alpha, T);
      for (int k = 0; k < T; ++k) mean[static_cast<std::size_t>(k)] += dist[static_cast<std::size_t>(k)];
    }
  }
  for (double& v : mean) v /= kAveraged;
  return {std::move(mean), false};
}

CoherenceReport coherence(const TopicModelState& state, const corpus::DocumentTable& docs,
                          int top_k) {
  if (top_k < 2) throw DataError("coherence: top_k must be >= 2");
  const int T = state.config.T;
  const int V = state.vocab_size();
  const int k_eff = std::min(top_k, V);

  CoherenceReport report;
  report.top_words.resize(static_cast<std::size_t>(T));
  std::vector<std::vector<int>> top_ids(static_cast<std::size_t>(T));
  std::vector<int> order(static_cast<std::size_t>(V));
  for (int k = 0; k < T; ++k) {
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k_eff, order.end(), [&](int a, int b) {
      const int ca = state.word_topic[static_cast<std::size_t>(a)][static_cast<std::size_t>(k)];
      const int cb = state.word_topic[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
      if (ca != cb) return ca > cb;
      return a < b;
    });
    top_ids[static_cast<std::size_t>(k)].assign(order.begin(), order.begin() + k_eff);
    for (int w : top_ids[static_cast<std::size_t>(k)]) {
      report.top_words[static_cast<std::size_t>(k)].push_back(
          state.vocabulary[static_cast<std::size_t>(w)]);
    }
  }

  // Postings (sorted doc row lists) for every selected word.
  std::map<int, std::vector<int>> postings;
  for (const auto& ids : top_ids) {
    for (int w : ids) postings.emplace(w, std::vector<int>{});
  }
  const auto& all_docs = docs.docs();
  for (std::size_t d = 0; d < all_docs.size(); ++d) {
    std::set<std::string> seen(all_docs[d].tokens.begin(), all_docs[d].tokens.end());
    for (auto& [w, rows] : postings) {
      if (seen.count(state.vocabulary[static_cast<std::size_t>(w)])) {
        rows.push_back(static_cast<int>(d));
      }
    }
  }
  auto co_count = [&](int a, int b) {
    const auto& pa = postings[a];
    const auto& pb = postings[b];
    std::size_t i = 0, j = 0, n = 0;
    while (i < pa.size() && j < pb.size()) {
      if (pa[i] == pb[j]) { ++n; ++i; ++j; }
      else if (pa[i] < pb[j]) ++i;
      else ++j;
    }
    return n;
  };

  double total = 0.0;
  for (int k = 0; k < T; ++k) {
    const auto& ids = top_ids[static_cast<std::size_t>(k)];
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 1; i < ids.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        const std::size_t d_j = postings[ids[j]].size();
        if (d_j == 0) {
          throw DataError("coherence: top word '" +
                          state.vocabulary[static_cast<std::size_t>(ids[j])] +
                          "' appears in zero documents");
        }
        const std::size_t d_ij = co_count(ids[i], ids[j]);
        acc += std::log((static_cast<double>(d_ij) + 1.0) / static_cast<double>(d_j));
        ++pairs;
      }
    }
    const double score = pairs ? acc / static_cast<double>(pairs) : 0.0;
    report.per_topic.push_back(score);
    total += score;
  }
  report.mean = T > 0 ? total / T : 0.0;
  return report;
}

void save_model(const TopicModelState& state, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file '" + path + "'");
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "lda-model 1\n";
  out << "T " << state.config.T << '\n';
  out << "alpha " << fmt(state.config.resolved_alpha()) << '\n';
  out << "beta " << fmt(state.config.beta) << '\n';
  out << "iterations " << state.config.iterations << '\n';
  out << "seed " << state.config.seed << '\n';
  out << "V " << state.vocab_size() << '\n';
  out << "D " << state.doc_count() << '\n';
  for (const auto& term : state.vocabulary) out << "term " << term << '\n';
  for (int w = 0; w < state.vocab_size(); ++w) {
    out << "counts";
    for (int k = 0; k < state.config.T; ++k) {
      out << ' ' << state.word_topic[static_cast<std::size_t>(w)][static_cast<std::size_t>(k)];
    }
    out << '\n';
  }
  const double alpha = state.config.resolved_alpha();
  for (int d = 0; d < state.doc_count(); ++d) {
    out << "doc " << state.doc_ids[static_cast<std::size_t>(d)];
    std::vector<double> dist;
    if (state.has_assignments) {
      dist = smoothed_distribution(state.doc_topic[static_cast<std::size_t>(d)], alpha,
                                   state.config.T);
    } else {
      dist = state.stored_doc_dists[static_cast<std::size_t>(d)];
    }
    for (double v : dist) out << ' ' << fmt(v);
    out << '\n';
  }
  if (!out) throw DataError("failed writing model file '" + path + "'");
}

TopicModelState load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  std::string header, key;
  int version = 0;
  in >> header >> version;
  if (header != "lda-model" || version != 1) {
    throw DataError("'" + path + "' is not a version-1 lda model file");
  }
  TopicModelState state;
  state.has_assignments = false;
  int v_count = 0, d_count = 0;
  in >> key >> state.config.T >> key >> state.config.alpha >> key >> state.config.beta >>
      key >> state.config.iterations >> key >> state.config.seed >> key >> v_count >> key >>
      d_count;
  if (!in || state.config.T < 1 || v_count < 1 || d_count < 0) {
    throw DataError("malformed model header in '" + path + "'");
  }
  const int T = state.config.T;
  for (int w = 0; w < v_count; ++w) {
    std::string term;
    in >> key >> term;
    if (!in || key != "term") throw DataError("malformed vocabulary in '" + path + "'");
    state.term_index.emplace(term, w);
    state.vocabulary.push_back(std::move(term));
  }
  state.word_topic.assign(static_cast<std::size_t>(v_count), std::vector<int>(T, 0));
  state.topic_totals.assign(static_cast<std::size_t>(T), 0);
  for (int w = 0; w < v_count; ++w) {
    in >> key;
    if (!in || key != "counts") throw DataError("malformed count table in '" + path + "'");
    for (int k = 0; k < T; ++k) {
      int c = 0;
      in >> c;
      state.word_topic[static_cast<std::size_t>(w)][static_cast<std::size_t>(k)] = c;
      state.topic_totals[static_cast<std::size_t>(k)] += c;
    }
  }
  for (int d = 0; d < d_count; ++d) {
    std::string doc_id;
    in >> key >> doc_id;
    if (!in || key != "doc") throw DataError("malformed doc rows in '" + path + "'");
    std::vector<double> dist(static_cast<std::size_t>(T));
    for (auto& v : dist) in >> v;
    state.doc_index.emplace(doc_id, d);
    state.doc_ids.push_back(std::move(doc_id));
    state.stored_doc_dists.push_back(std::move(dist));
  }
  if (!in) throw DataError("truncated model file '" + path + "'");
  return state;
}

}  // namespace persrank::topics
