#include "persrank/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "persrank/errors.hpp"

namespace persrank::ranker {

double score(const ScoringHead& head, std::span<const double> features) {
  if (head.weights.size() != features.size()) {
    throw DataError("score: feature length " + std::to_string(features.size()) +
                    " does not match head dimension " + std::to_string(head.weights.size()));
  }
  double s = head.bias;
  for (std::size_t i = 0; i < features.size(); ++i) s += head.weights[i] * features[i];
  return s;
}

double hinge_loss(double s_pos, double s_neg, double margin) {
  if (!(margin > 0.0)) throw DataError("hinge_loss: margin must be positive");
  return std::max(0.0, margin - s_pos + s_neg);
}

std::vector<std::vector<TrainingPair>> sample_pairs(
    const std::vector<corpus::Impression>& train, const TrainConfig& config, Rng& rng) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].has_click() && train[i].has_unclicked()) eligible.push_back(i);
  }
  if (eligible.empty()) {
    throw DataError("sample_pairs: no impression has both a clicked and an unclicked candidate");
  }

  int batches = config.batches_per_epoch;
  if (config.scale_with_corpus) {
    const int needed = static_cast<int>(
        (eligible.size() + static_cast<std::size_t>(config.pairs_per_batch) - 1) /
        static_cast<std::size_t>(config.pairs_per_batch));
    batches = std::max(batches, needed);
  }

  std::vector<std::vector<TrainingPair>> epoch;
  epoch.reserve(static_cast<std::size_t>(batches));
  for (int b = 0; b < batches; ++b) {
    std::vector<TrainingPair> batch;
    batch.reserve(static_cast<std::size_t>(config.pairs_per_batch));
    for (int p = 0; p < config.pairs_per_batch; ++p) {
      const std::size_t idx = eligible[rng.uniform_index(eligible.size())];
      const auto& imp = train[idx];
      std::vector<std::string> unclicked;
      unclicked.reserve(imp.candidates.size());
      for (const auto& c : imp.candidates) {
        if (!imp.clicked.count(c)) unclicked.push_back(c);
      }
      std::vector<std::string> clicked(imp.clicked.begin(), imp.clicked.end());
      TrainingPair pair;
      pair.impression = idx;
      pair.positive = clicked[rng.uniform_index(clicked.size())];
      pair.negative = unclicked[rng.uniform_index(unclicked.size())];
      batch.push_back(std::move(pair));
    }
    epoch.push_back(std::move(batch));
  }
  return epoch;
}

namespace {

ScoringHead init_head(std::size_t dim, Rng& rng) {
  ScoringHead head;
  head.weights.resize(dim);
  for (auto& w : head.weights) w = rng.uniform(-0.01, 0.01);
  head.bias = 0.0;
  return head;
}

}  // namespace

TrainResult train(const corpus::SplitCorpus& corpus, const FeatureSource& features,
                  const TrainConfig& config) {
  if (config.epochs < 1 || config.batches_per_epoch < 1 || config.pairs_per_batch < 1) {
    throw DataError("train: epoch/batch/pair counts must be >= 1");
  }
  if (!(config.learning_rate >= 0.0)) throw DataError("train: learning_rate must be >= 0");

  Rng rng(derive_seed(config.seed, 0x7ea1));
  const std::size_t dim = features.feature_dim();
  ScoringHead head = init_head(dim, rng);

  std::vector<double> adam_m(dim, 0.0), adam_v(dim, 0.0);
  long long adam_t = 0;
  std::vector<double> grad(dim);

  TrainResult result;
  double best_mrr = -1.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = sample_pairs(corpus.train, config, rng);
    double loss_sum = 0.0;
    int pair_count = 0;

    for (const auto& batch : batches) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (const auto& pair : batch) {
        const auto& imp = corpus.train[pair.impression];
        const auto f_pos = features.features(imp.query.user_id, imp.query, pair.positive);
        const auto f_neg = features.features(imp.query.user_id, imp.query, pair.negative);
        const double s_pos = score(head, f_pos);
        const double s_neg = score(head, f_neg);
        const double loss = hinge_loss(s_pos, s_neg, config.margin);
        if (!std::isfinite(loss)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             " (user " + imp.query.user_id + ", pos " + pair.positive +
                             ", neg " + pair.negative + ")");
        }
        loss_sum += loss;
        ++pair_count;
        if (loss > 0.0) {
          // d loss / d w = f_neg - f_pos; the bias cancels in the margin.
          for (std::size_t i = 0; i < dim; ++i) grad[i] += f_neg[i] - f_pos[i];
        }
      }
      const double scale = 1.0 / static_cast<double>(batch.size());
      if (config.optimizer == TrainConfig::Optimizer::kAdam) {
        ++adam_t;
        const double b1 = config.adam_beta1;
        const double b2 = config.adam_beta2;
        const double corr1 = 1.0 - std::pow(b1, static_cast<double>(adam_t));
        const double corr2 = 1.0 - std::pow(b2, static_cast<double>(adam_t));
        for (std::size_t i = 0; i < dim; ++i) {
          const double g = grad[i] * scale;
          adam_m[i] = b1 * adam_m[i] + (1.0 - b1) * g;
          adam_v[i] = b2 * adam_v[i] + (1.0 - b2) * g * g;
          const double m_hat = adam_m[i] / corr1;
          const double v_hat = adam_v[i] / corr2;
          head.weights[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
        }
      } else {
        for (std::size_t i = 0; i < dim; ++i) {
          head.weights[i] -= config.learning_rate * grad[i] * scale;
        }
      }
    }

    const auto val = evaluate_partition(head, features, corpus.validation);
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = pair_count ? loss_sum / pair_count : 0.0;
    stats.validation_mrr = val.mrr;
    stats.pairs = pair_count;
    result.log.push_back(stats);

    if (val.mrr > best_mrr) {
      best_mrr = val.mrr;
      result.head = head;
      result.best_epoch = epoch;
    }
  }
  return result;
}

std::vector<RankedDoc> rank(const ScoringHead& head, const FeatureSource& features,
                            const std::string& user_id, const corpus::Query& query,
                            const std::vector<std::string>& candidates) {
  if (candidates.empty()) throw DataError("rank: empty candidate list");
  std::vector<RankedDoc> ranked;
  ranked.reserve(candidates.size());
  for (const auto& doc_id : candidates) {
    ranked.push_back({doc_id, score(head, features.features(user_id, query, doc_id))});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedDoc& a, const RankedDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  return ranked;
}

evaluation::MetricReport evaluate_partition(const ScoringHead& head,
                                            const FeatureSource& features,
                                            const std::vector<corpus::Impression>& partition) {
  evaluation::MetricAccumulator acc;
  for (const auto& imp : partition) {
    if (!imp.has_click()) {
      acc.add({}, {});  // counted as excluded
      continue;
    }
    const auto ranked = rank(head, features, imp.query.user_id, imp.query, imp.candidates);
    std::vector<std::string> ranking;
    ranking.reserve(ranked.size());
    for (const auto& r : ranked) ranking.push_back(r.doc_id);
    acc.add(ranking, imp.clicked);
  }
  return acc.report();
}

void save_head(const HeadCheckpoint& checkpoint, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "scoring-head 1\n";
  out << "dim " << checkpoint.head.weights.size() << '\n';
  out << "T " << checkpoint.topic_count << '\n';
  out << "L " << checkpoint.embedding_layers << '\n';
  out << "kernel_mus";
  for (double mu : checkpoint.bank.mus) out << ' ' << fmt(mu);
  out << "\nkernel_sigmas";
  for (double s : checkpoint.bank.sigmas) out << ' ' << fmt(s);
  out << "\nweights";
  for (double w : checkpoint.head.weights) out << ' ' << fmt(w);
  out << "\nbias " << fmt(checkpoint.head.bias) << '\n';
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

HeadCheckpoint load_head(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::string header;
  int version = 0;
  in >> header >> version;
  if (header != "scoring-head" || version != 1) {
    throw DataError("'" + path + "' is not a version-1 scoring-head checkpoint");
  }
  HeadCheckpoint ckpt;
  std::string key;
  std::size_t dim = 0;
  in >> key >> dim;
  if (key != "dim") throw DataError("malformed checkpoint '" + path + "'");
  in >> key >> ckpt.topic_count;
  in >> key >> ckpt.embedding_layers;
  in >> key;
  if (key != "kernel_mus") throw DataError("malformed checkpoint '" + path + "'");
  {
    std::string line;
    std::getline(in, line);
    std::istringstream row(line);
    double v;
    while (row >> v) ckpt.bank.mus.push_back(v);
  }
  in >> key;
  if (key != "kernel_sigmas") throw DataError("malformed checkpoint '" + path + "'");
  {
    std::string line;
    std::getline(in, line);
    std::istringstream row(line);
    double v;
    while (row >> v) ckpt.bank.sigmas.push_back(v);
  }
  in >> key;
  if (key != "weights") throw DataError("malformed checkpoint '" + path + "'");
  {
    std::string line;
    std::getline(in, line);
    std::istringstream row(line);
    double v;
    while (row >> v) ckpt.head.weights.push_back(v);
  }
  in >> key >> ckpt.head.bias;
  if (!in || key != "bias") throw DataError("malformed checkpoint '" + path + "'");
  if (ckpt.head.weights.size() != dim) {
    throw DataError("checkpoint '" + path + "' declares dim " + std::to_string(dim) +
                    " but carries " + std::to_string(ckpt.head.weights.size()) + " weights");
  }
  const std::size_t z = ckpt.bank.mus.size();
  if (z == 0 || ckpt.bank.sigmas.size() != z || ckpt.embedding_layers < 1 ||
      ckpt.topic_count < 1) {
    throw DataError("checkpoint '" + path + "' has malformed shape metadata");
  }
  if (dim != z + static_cast<std::size_t>(ckpt.embedding_layers) * z) {
    throw DataError("checkpoint '" + path + "' dim " + std::to_string(dim) +
                    " does not equal Z + L*Z for Z=" + std::to_string(z) +
                    ", L=" + std::to_string(ckpt.embedding_layers));
  }
  return ckpt;
}

}  // namespace persrank::ranker
