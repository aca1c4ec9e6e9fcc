#ifndef PERSRANK_RANKER_HPP_
#define PERSRANK_RANKER_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "persrank/corpus.hpp"
#include "persrank/evaluation.hpp"
#include "persrank/matching.hpp"
#include "persrank/rng.hpp"

namespace persrank::ranker {

// Affine scoring head over the concatenated [theta; phi] feature vector.
struct ScoringHead {
  std::vector<double> weights;
  double bias = 0.0;
};

double score(const ScoringHead& head, std::span<const double> features);

double hinge_loss(double s_pos, double s_neg, double margin);

// Supplies the concatenated feature vector for a (user, query, doc) triple.
class FeatureSource {
 public:
  virtual ~FeatureSource() = default;
  virtual std::vector<double> features(const std::string& user_id, const corpus::Query& query,
                                       const std::string& doc_id) const = 0;
  virtual std::size_t feature_dim() const = 0;
};

struct TrainConfig {
  int epochs = 10;
  int batches_per_epoch = 16;
  int pairs_per_batch = 8;
  double learning_rate = 1e-3;
  enum class Optimizer { kAdam, kSgd };
  Optimizer optimizer = Optimizer::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double margin = 1.0;
  std::uint64_t seed = 7;
  // When set, batches_per_epoch scales so one epoch covers roughly the
  // number of eligible train impressions instead of the fixed batch count.
  bool scale_with_corpus = false;
};

struct TrainingPair {
  std::size_t impression = 0;  // index into the train partition
  std::string positive;
  std::string negative;
};

// One epoch's batches: batches_per_epoch x pairs_per_batch pairs sampled
// uniformly over eligible impressions, then uniformly over the clicked and
// unclicked candidates within the impression.
std::vector<std::vector<TrainingPair>> sample_pairs(
    const std::vector<corpus::Impression>& train, const TrainConfig& config, Rng& rng);

struct EpochStats {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double validation_mrr = 0.0;
  int pairs = 0;
};

struct TrainResult {
  ScoringHead head;  // weights of the best validation-MRR epoch
  std::vector<EpochStats> log;
  int best_epoch = 0;
};

TrainResult train(const corpus::SplitCorpus& corpus, const FeatureSource& features,
                  const TrainConfig& config);

struct RankedDoc {
  std::string doc_id;
  double score = 0.0;
};

// Descending score; ties broken by ascending doc_id.
std::vector<RankedDoc> rank(const ScoringHead& head, const FeatureSource& features,
                            const std::string& user_id, const corpus::Query& query,
                            const std::vector<std::string>& candidates);

// Ranks every impression in the partition and aggregates the four metrics.
evaluation::MetricReport evaluate_partition(const ScoringHead& head,
                                            const FeatureSource& features,
                                            const std::vector<corpus::Impression>& partition);

// Text checkpoint carrying the head plus the shape it was trained for.
struct HeadCheckpoint {
  ScoringHead head;
  matching::KernelBank bank;
  int embedding_layers = 0;
  int topic_count = 0;
};

void save_head(const HeadCheckpoint& checkpoint, const std::string& path);
HeadCheckpoint load_head(const std::string& path);

}  // namespace persrank::ranker

#endif  // PERSRANK_RANKER_HPP_
