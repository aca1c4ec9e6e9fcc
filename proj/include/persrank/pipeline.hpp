#ifndef PERSRANK_PIPELINE_HPP_
#define PERSRANK_PIPELINE_HPP_

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "persrank/corpus.hpp"
#include "persrank/embeddings.hpp"
#include "persrank/evaluation.hpp"
#include "persrank/matching.hpp"
#include "persrank/profiles.hpp"
#include "persrank/ranker.hpp"
#include "persrank/synthetic.hpp"
#include "persrank/topics.hpp"

namespace persrank::pipeline {

// Feature source backed by the full stack: user profiles, document topic
// distributions, an embedding provider, and the kernel bank. Results are
// memoized per (user, query, doc). With ablate_interest the theta block is
// zeroed, giving the semantic-only model.
class PipelineFeatureSource : public ranker::FeatureSource {
 public:
  PipelineFeatureSource(std::map<std::string, std::vector<double>> profiles,
                        std::map<std::string, std::vector<double>> doc_topics,
                        std::map<std::string, corpus::TokenList> doc_tokens,
                        const embeddings::EmbeddingProvider& provider,
                        matching::KernelBank bank, bool ablate_interest = false);

  std::vector<double> features(const std::string& user_id, const corpus::Query& query,
                               const std::string& doc_id) const override;
  std::size_t feature_dim() const override;

 private:
  std::map<std::string, std::vector<double>> profiles_;
  std::map<std::string, std::vector<double>> doc_topics_;
  std::map<std::string, corpus::TokenList> doc_tokens_;
  const embeddings::EmbeddingProvider& provider_;
  matching::KernelBank bank_;
  bool ablate_interest_;
  mutable std::map<std::string, std::vector<double>> cache_;
};

struct RunConfig {
  std::string out_dir;
  // Data source: `log_path`/`docs_path` when both set, otherwise `synth`.
  synthetic::SyntheticSpec synth;
  std::string log_path;
  std::string docs_path;

  corpus::TokenizerConfig tokenizer;
  double history_fraction = 0.38;

  // Desk-scale defaults; the type defaults (T=50, 500 sweeps, 12 layers,
  // dim 768) suit full-size corpora and external encoder caches.
  topics::TopicModelConfig lda{.T = 8, .iterations = 200, .min_doc_freq = 2};
  embeddings::SyntheticProviderConfig embedding{.layers = 3, .dim = 32};
  ranker::TrainConfig train;
  matching::KernelBank bank = matching::KernelBank::default_bank();

  bool ablate_interest = false;
  bool multiset_profiles = false;
  bool force = false;
  std::uint64_t seed = 7;  // drives every stage seed
};

struct StageStatus {
  std::string name;
  bool skipped = false;
};

struct RunResult {
  evaluation::MetricReport report;
  std::vector<StageStatus> stages;
  std::string report_path;
};

// Executes generate -> ingest -> train-lda -> infer-topics -> profiles ->
// scatter -> cache-embeddings -> train -> evaluate -> heatmaps, writing every
// artifact under out_dir. Stages whose outputs exist are skipped unless
// `force` is set.
RunResult run_pipeline(const RunConfig& config);

struct SweepRow {
  int T = 0;
  double coherence = 0.0;
  evaluation::MetricReport metrics;
  bool ok = false;
  std::string error;
};

// Trains one topic model per candidate T and runs the ranking pipeline on
// the given split corpus, in memory. Rows that fail carry the error and the
// sweep continues.
std::vector<SweepRow> sweep_topic_count(const corpus::SplitCorpus& split_corpus,
                                        const corpus::DocumentTable& docs,
                                        const std::vector<int>& candidate_ts,
                                        const RunConfig& base_config);

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

// Shared wiring helpers (also used by the CLI subcommands).
corpus::DocumentTable clicked_history_docs(const corpus::SplitCorpus& split_corpus,
                                           const corpus::DocumentTable& docs);
std::map<std::string, std::vector<double>> infer_all_doc_topics(
    const topics::TopicModelState& model, const corpus::DocumentTable& docs);
std::vector<profiles::UserProfile> build_all_profiles(
    const corpus::SplitCorpus& split_corpus,
    const std::map<std::string, std::vector<double>>& doc_topics, int topic_count,
    bool multiset);
std::vector<embeddings::CachePair> collect_cache_pairs(const corpus::SplitCorpus& split_corpus,
                                                       const corpus::DocumentTable& docs);

}  // namespace persrank::pipeline

#endif  // PERSRANK_PIPELINE_HPP_
