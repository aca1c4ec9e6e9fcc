#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "persrank/errors.hpp"
#include "persrank/ranker.hpp"
#include "persrank/rng.hpp"

using namespace persrank;
using namespace persrank::ranker;

namespace {

// Feature source backed by a fixed per-doc table; user and query are ignored.
class TableFeatures : public FeatureSource {
 public:
  TableFeatures(std::map<std::string, std::vector<double>> table, std::size_t dim)
      : table_(std::move(table)), dim_(dim) {}

  std::vector<double> features(const std::string&, const corpus::Query&,
                               const std::string& doc_id) const override {
    return table_.at(doc_id);
  }
  std::size_t feature_dim() const override { return dim_; }

 private:
  std::map<std::string, std::vector<double>> table_;
  std::size_t dim_;
};

corpus::Impression make_imp(const std::string& user, std::int64_t ts,
                            std::vector<std::string> candidates,
                            std::set<std::string> clicked) {
  corpus::Impression imp;
  imp.query.user_id = user;
  imp.query.timestamp = ts;
  imp.query.tokens = {"q"};
  imp.candidates = std::move(candidates);
  imp.clicked = std::move(clicked);
  return imp;
}

// Separable setup: positive docs carry +1 in the first coordinate.
corpus::SplitCorpus separable_corpus(int train_n, int val_n) {
  corpus::SplitCorpus sc;
  for (int i = 0; i < train_n; ++i) {
    sc.train.push_back(make_imp("u", i, {"pos", "neg"}, {"pos"}));
  }
  for (int i = 0; i < val_n; ++i) {
    sc.validation.push_back(make_imp("u", 1000 + i, {"pos", "neg"}, {"pos"}));
  }
  return sc;
}

TableFeatures separable_features() {
  return TableFeatures({{"pos", {1.0, 0.3}}, {"neg", {-1.0, 0.3}}}, 2);
}

}  // namespace

TEST_CASE("score is the affine map") {
  ScoringHead zero{{0.0, 0.0, 0.0}, 0.0};
  CHECK(score(zero, std::vector<double>{5, -3, 2}) == 0.0);

  ScoringHead selector{{0.0, 1.0, 0.0}, 0.25};
  CHECK(score(selector, std::vector<double>{5, -3, 2}) == doctest::Approx(-2.75));

  Rng rng(3);
  ScoringHead head;
  std::vector<double> features;
  for (int i = 0; i < 10; ++i) {
    head.weights.push_back(rng.gaussian());
    features.push_back(rng.gaussian());
  }
  head.bias = rng.gaussian();
  long double want = head.bias;  // independent accumulation in extended precision
  for (int i = 9; i >= 0; --i) want += static_cast<long double>(head.weights[static_cast<std::size_t>(i)]) * features[static_cast<std::size_t>(i)];
  CHECK(score(head, features) == doctest::Approx(static_cast<double>(want)).epsilon(1e-12));

  CHECK_THROWS_AS(score(selector, std::vector<double>{1.0}), DataError);
}

TEST_CASE("hinge loss hand cases and convexity") {
  CHECK(hinge_loss(2.0, 0.5, 1.0) == 0.0);   // satisfied margin
  CHECK(hinge_loss(0.7, 0.7, 1.0) == 1.0);   // tie gives the margin
  CHECK(hinge_loss(0.2, 0.5, 1.0) == doctest::Approx(1.3));
  CHECK_THROWS_AS(hinge_loss(0.0, 0.0, 0.0), DataError);

  // Midpoint convexity in (s_pos, s_neg).
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const double a1 = rng.uniform(-3, 3), b1 = rng.uniform(-3, 3);
    const double a2 = rng.uniform(-3, 3), b2 = rng.uniform(-3, 3);
    const double mid = hinge_loss((a1 + a2) / 2, (b1 + b2) / 2, 1.0);
    CHECK(mid <= (hinge_loss(a1, b1, 1.0) + hinge_loss(a2, b2, 1.0)) / 2 + 1e-12);
  }
}

TEST_CASE("sample_pairs produces 16 batches of 8 by default") {
  std::vector<corpus::Impression> train = {
      make_imp("u", 1, {"a", "b", "c"}, {"a"}),
      make_imp("u", 2, {"d", "e"}, {"e"}),
  };
  Rng rng(1);
  const auto batches = sample_pairs(train, TrainConfig{}, rng);
  REQUIRE(batches.size() == 16);
  int pairs = 0;
  for (const auto& batch : batches) {
    CHECK(batch.size() == 8);
    pairs += static_cast<int>(batch.size());
    for (const auto& pair : batch) {
      const auto& imp = train[pair.impression];
      CHECK(imp.clicked.count(pair.positive) == 1);
      CHECK(imp.clicked.count(pair.negative) == 0);
      CHECK(std::find(imp.candidates.begin(), imp.candidates.end(), pair.negative) !=
            imp.candidates.end());
    }
  }
  CHECK(pairs == 128);
}

TEST_CASE("an impression with one click and one non-click forces the pair") {
  std::vector<corpus::Impression> train = {make_imp("u", 1, {"a", "b"}, {"b"})};
  Rng rng(5);
  const auto batches = sample_pairs(train, TrainConfig{}, rng);
  for (const auto& batch : batches) {
    for (const auto& pair : batch) {
      CHECK(pair.positive == "b");
      CHECK(pair.negative == "a");
    }
  }
}

TEST_CASE("impression sampling is close to uniform") {
  std::vector<corpus::Impression> train = {
      make_imp("u", 1, {"a", "b"}, {"a"}),
      make_imp("u", 2, {"c", "d"}, {"c"}),
  };
  TrainConfig cfg;
  cfg.batches_per_epoch = 125;  // 1000 pairs
  Rng rng(17);
  const auto batches = sample_pairs(train, cfg, rng);
  int first = 0, total = 0;
  for (const auto& batch : batches) {
    for (const auto& pair : batch) {
      first += pair.impression == 0 ? 1 : 0;
      ++total;
    }
  }
  CHECK(total == 1000);
  CHECK(first > 450);
  CHECK(first < 550);
}

TEST_CASE("scale_with_corpus grows an epoch to cover the train partition") {
  std::vector<corpus::Impression> train;
  for (int i = 0; i < 200; ++i) {
    train.push_back(make_imp("u", i, {"a", "b"}, {"a"}));
  }
  TrainConfig cfg;
  cfg.scale_with_corpus = true;
  Rng rng(2);
  const auto batches = sample_pairs(train, cfg, rng);
  CHECK(batches.size() == 25);  // ceil(200 / 8) > the default 16

  // Small corpora keep the configured batch count.
  train.resize(40);
  Rng rng2(2);
  CHECK(sample_pairs(train, cfg, rng2).size() == 16);
}

TEST_CASE("sample_pairs rejects a corpus with no usable impression") {
  std::vector<corpus::Impression> train = {
      make_imp("u", 1, {"a"}, {"a"}),       // no unclicked
      make_imp("u", 2, {"b", "c"}, {}),     // no clicked
  };
  Rng rng(1);
  CHECK_THROWS_AS(sample_pairs(train, TrainConfig{}, rng), DataError);
}

TEST_CASE("training separable features reaches validation MRR 1.0") {
  const auto sc = separable_corpus(20, 10);
  const auto features = separable_features();
  TrainConfig cfg;
  cfg.seed = 3;
  const auto result = train(sc, features, cfg);
  REQUIRE(result.log.size() == 10);
  CHECK(result.log.back().pairs == 128);
  double best = 0.0;
  for (const auto& row : result.log) best = std::max(best, row.validation_mrr);
  CHECK(best == 1.0);
  const auto val = evaluate_partition(result.head, features, sc.validation);
  CHECK(val.mrr == 1.0);
}

TEST_CASE("sgd also separates the toy corpus") {
  const auto sc = separable_corpus(20, 10);
  const auto features = separable_features();
  TrainConfig cfg;
  cfg.optimizer = TrainConfig::Optimizer::kSgd;
  cfg.learning_rate = 0.05;
  cfg.seed = 4;
  const auto result = train(sc, features, cfg);
  CHECK(evaluate_partition(result.head, features, sc.validation).mrr == 1.0);
  const auto again = train(sc, features, cfg);
  CHECK(result.head.weights == again.head.weights);
}

TEST_CASE("zero learning rate returns the initialization") {
  const auto sc = separable_corpus(10, 5);
  const auto features = separable_features();
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.seed = 9;
  cfg.epochs = 5;
  const auto five = train(sc, features, cfg);
  cfg.epochs = 1;
  const auto one = train(sc, features, cfg);
  CHECK(five.head.weights == one.head.weights);  // init never moves
  CHECK(five.head.bias == 0.0);
  for (double w : five.head.weights) {
    CHECK(std::abs(w) <= 0.01);
  }
}

TEST_CASE("training is bit-reproducible under a fixed seed") {
  const auto sc = separable_corpus(15, 6);
  const auto features = separable_features();
  TrainConfig cfg;
  cfg.seed = 21;
  const auto a = train(sc, features, cfg);
  const auto b = train(sc, features, cfg);
  CHECK(a.head.weights == b.head.weights);
  CHECK(a.head.bias == b.head.bias);
  CHECK(a.best_epoch == b.best_epoch);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].mean_loss == b.log[i].mean_loss);
    CHECK(a.log[i].validation_mrr == b.log[i].validation_mrr);
  }

  cfg.seed = 22;
  const auto c = train(sc, features, cfg);
  CHECK(a.head.weights != c.head.weights);
}

TEST_CASE("the returned head is the argmax of logged validation MRR") {
  const auto sc = separable_corpus(20, 10);
  const auto features = separable_features();
  TrainConfig cfg;
  cfg.seed = 33;
  const auto result = train(sc, features, cfg);
  double best = -1.0;
  int best_epoch = 0;
  for (const auto& row : result.log) {
    if (row.validation_mrr > best) {
      best = row.validation_mrr;
      best_epoch = row.epoch;
    }
  }
  CHECK(result.best_epoch == best_epoch);
  const auto val = evaluate_partition(result.head, features, sc.validation);
  CHECK(val.mrr == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central finite differences") {
  Rng rng(101);
  const std::size_t dim = 12;
  const double margin = 1.0;
  const double h = 1e-5;
  double max_rel_err = 0.0;

  for (int pair = 0; pair < 20; ++pair) {
    ScoringHead head;
    for (std::size_t i = 0; i < dim; ++i) head.weights.push_back(rng.uniform(-0.5, 0.5));
    head.bias = rng.uniform(-0.5, 0.5);
    std::vector<double> f_pos(dim), f_neg(dim);
    for (auto& v : f_pos) v = rng.gaussian();
    for (auto& v : f_neg) v = rng.gaussian();

    const double s_pos = score(head, f_pos);
    const double s_neg = score(head, f_neg);
    // Keep the sample away from the hinge kink so the derivative exists.
    if (std::abs(margin - s_pos + s_neg) < 0.05) {
      --pair;
      continue;
    }
    const bool active = hinge_loss(s_pos, s_neg, margin) > 0.0;

    // Whole-gradient comparison: ||g_a - g_n||_inf / max(1, ||g||_inf).
    double diff_inf = 0.0;
    double grad_inf = 0.0;
    for (std::size_t i = 0; i <= dim; ++i) {
      const double analytic =
          i == dim ? 0.0 : (active ? f_neg[i] - f_pos[i] : 0.0);
      auto loss_at = [&](double delta) {
        ScoringHead moved = head;
        if (i == dim) {
          moved.bias += delta;
        } else {
          moved.weights[i] += delta;
        }
        return hinge_loss(score(moved, f_pos), score(moved, f_neg), margin);
      };
      const double numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
      diff_inf = std::max(diff_inf, std::abs(analytic - numeric));
      grad_inf = std::max({grad_inf, std::abs(analytic), std::abs(numeric)});
    }
    max_rel_err = std::max(max_rel_err, diff_inf / std::max(1.0, grad_inf));
  }
  CHECK(max_rel_err < 1e-4);
}

TEST_CASE("rank orders by score with doc_id tie-break") {
  TableFeatures features({{"d1", {0.3}}, {"d2", {0.9}}, {"d3", {0.1}}}, 1);
  ScoringHead head{{1.0}, 0.0};
  corpus::Query q;

  const auto single = rank(head, features, "u", q, {"d2"});
  REQUIRE(single.size() == 1);
  CHECK(single[0].doc_id == "d2");

  const auto ranked = rank(head, features, "u", q, {"d1", "d2", "d3"});
  CHECK(ranked[0].doc_id == "d2");
  CHECK(ranked[1].doc_id == "d1");
  CHECK(ranked[2].doc_id == "d3");

  TableFeatures tied({{"b", {0.5}}, {"a", {0.5}}}, 1);
  const auto tie = rank(head, tied, "u", q, {"b", "a"});
  CHECK(tie[0].doc_id == "a");
  CHECK(tie[1].doc_id == "b");

  CHECK_THROWS_AS(rank(head, features, "u", q, {}), DataError);
}

TEST_CASE("a constant bias shift moves scores but not rankings") {
  Rng rng(77);
  std::map<std::string, std::vector<double>> table;
  std::vector<std::string> ids;
  for (int i = 0; i < 8; ++i) {
    const auto id = "d" + std::to_string(i);
    table[id] = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
    ids.push_back(id);
  }
  TableFeatures features(table, 3);
  ScoringHead head{{0.4, -0.2, 0.7}, 0.1};
  ScoringHead shifted = head;
  shifted.bias += 2.5;
  corpus::Query q;
  const auto a = rank(head, features, "u", q, ids);
  const auto b = rank(shifted, features, "u", q, ids);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].doc_id == b[i].doc_id);
    CHECK(b[i].score == doctest::Approx(a[i].score + 2.5).epsilon(1e-12));
  }
}

TEST_CASE("checkpoint round trip reproduces scores exactly") {
  Rng rng(55);
  HeadCheckpoint ckpt;
  ckpt.bank = matching::KernelBank::default_bank();
  ckpt.embedding_layers = 3;
  ckpt.topic_count = 8;
  const std::size_t dim = ckpt.bank.size() * 4;  // Z + L*Z
  for (std::size_t i = 0; i < dim; ++i) ckpt.head.weights.push_back(rng.gaussian());
  ckpt.head.bias = rng.gaussian();

  const auto path = std::filesystem::temp_directory_path() / "persrank_head_roundtrip.ckpt";
  save_head(ckpt, path.string());
  const auto loaded = load_head(path.string());
  CHECK(loaded.head.weights == ckpt.head.weights);
  CHECK(loaded.head.bias == ckpt.head.bias);
  CHECK(loaded.bank.mus == ckpt.bank.mus);
  CHECK(loaded.bank.sigmas == ckpt.bank.sigmas);
  CHECK(loaded.embedding_layers == 3);
  CHECK(loaded.topic_count == 8);

  std::vector<double> probe(dim);
  for (auto& v : probe) v = rng.gaussian();
  CHECK(score(loaded.head, probe) == score(ckpt.head, probe));
  std::filesystem::remove(path);
}

TEST_CASE("editing the checkpoint bias shifts all scores by that amount") {
  HeadCheckpoint ckpt;
  ckpt.bank.mus = {0.0};
  ckpt.bank.sigmas = {1.0};
  ckpt.embedding_layers = 1;
  ckpt.topic_count = 2;
  ckpt.head.weights = {0.5, -0.5};
  ckpt.head.bias = 0.25;
  const auto path = std::filesystem::temp_directory_path() / "persrank_head_bias.ckpt";
  save_head(ckpt, path.string());

  auto shifted = load_head(path.string());
  shifted.head.bias += 1.0;
  save_head(shifted, path.string());
  const auto loaded = load_head(path.string());
  const std::vector<double> probe = {3.0, 4.0};
  CHECK(score(loaded.head, probe) == doctest::Approx(score(ckpt.head, probe) + 1.0).epsilon(1e-15));
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint shape guards reject inconsistent files") {
  HeadCheckpoint ckpt;
  ckpt.bank = matching::KernelBank::default_bank();
  ckpt.embedding_layers = 2;
  ckpt.topic_count = 4;
  ckpt.head.weights.assign(ckpt.bank.size() * 3, 0.1);
  const auto path = std::filesystem::temp_directory_path() / "persrank_head_guard.ckpt";
  save_head(ckpt, path.string());

  // Corrupt the declared layer count: dim no longer equals Z + L*Z.
  auto broken = ckpt;
  broken.embedding_layers = 5;
  CHECK_THROWS_AS((save_head(broken, path.string()), load_head(path.string())), DataError);

  std::ofstream out(path);
  out << "scoring-head 2\n";
  out.close();
  CHECK_THROWS_AS(load_head(path.string()), DataError);
  std::filesystem::remove(path);
}
