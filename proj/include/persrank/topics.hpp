#ifndef PERSRANK_TOPICS_HPP_
#define PERSRANK_TOPICS_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "persrank/corpus.hpp"

namespace persrank::topics {

struct TopicModelConfig {
  int T = 50;
  double alpha = 0.0;  // <= 0 selects the 50/T default
  double beta = 0.01;
  int iterations = 500;
  std::uint64_t seed = 7;
  // Vocabulary filtering: drop terms in fewer than min_doc_freq documents,
  // then the drop_top_frac fraction with the highest document frequency.
  int min_doc_freq = 5;
  double drop_top_frac = 0.005;

  double resolved_alpha() const { return alpha > 0.0 ? alpha : 50.0 / T; }
};

struct DocumentTopics {
  std::vector<double> t_d;  // length T, sums to 1
  bool oov = false;         // no in-vocabulary tokens; uniform fallback
};

struct TopicModelState {
  TopicModelConfig config;
  std::vector<std::string> vocabulary;  // index -> term, sorted
  std::map<std::string, int> term_index;

  std::vector<std::string> doc_ids;  // training-doc row order
  std::map<std::string, int> doc_index;

  // Count tables. word_topic is V x T, doc_topic is D x T.
  std::vector<std::vector<int>> word_topic;
  std::vector<std::vector<int>> doc_topic;
  std::vector<long long> topic_totals;

  // Per-document in-vocabulary term ids and their current topic labels.
  std::vector<std::vector<int>> doc_terms;
  std::vector<std::vector<int>> assignments;
  bool has_assignments = true;  // false for models loaded from disk

  std::vector<double> loglik_per_sweep;

  // Distributions carried by a loaded model file (training docs only).
  std::vector<std::vector<double>> stored_doc_dists;

  int vocab_size() const { return static_cast<int>(vocabulary.size()); }
  int doc_count() const { return static_cast<int>(doc_ids.size()); }
};

using SweepObserver = std::function<void(const TopicModelState&, int sweep)>;

// Collapsed Gibbs sampling for `config.iterations` full sweeps. Deterministic
// given the seed. The observer, when given, runs after every sweep.
TopicModelState train_lda(const corpus::DocumentTable& docs, const TopicModelConfig& config,
                          const SweepObserver& on_sweep = {});

// Training docs: smoothed count ratio (n_{d,i} + alpha) / (n_d + T*alpha).
// Unseen docs: 20 Gibbs sweeps against frozen word-topic counts, averaging
// the smoothed distributions of the last 10 sweeps.
DocumentTopics infer_doc_topics(const TopicModelState& state, const corpus::Document& doc);

// Throws NumericError if the count-table identities are violated.
void check_count_tables(const TopicModelState& state);

// Collapsed joint log p(w, z) under the symmetric priors.
double log_likelihood(const TopicModelState& state);

struct CoherenceReport {
  std::vector<double> per_topic;
  double mean = 0.0;
  std::vector<std::vector<std::string>> top_words;  // per topic, rank order
};

// UMass coherence over the top_k words of each topic, with document
// co-occurrence counts taken from `docs`.
CoherenceReport coherence(const TopicModelState& state, const corpus::DocumentTable& docs,
                          int top_k = 10);

void save_model(const TopicModelState& state, const std::string& path);
TopicModelState load_model(const std::string& path);

}  // namespace persrank::topics

#endif  // PERSRANK_TOPICS_HPP_
