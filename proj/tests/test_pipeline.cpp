#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "persrank/errors.hpp"
#include "persrank/pipeline.hpp"

using namespace persrank;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

synthetic::SyntheticSpec tiny_spec(std::uint64_t seed) {
  synthetic::SyntheticSpec spec;
  spec.user_count = 12;
  spec.true_topic_count = 3;
  spec.vocab_size = 120;
  spec.docs_per_user = 10;
  spec.candidates_per_impression = 4;
  spec.click_noise = 0.05;
  spec.seed = seed;
  spec.doc_len = 15;
  spec.query_len = 3;
  return spec;
}

pipeline::RunConfig tiny_run(const fs::path& dir, std::uint64_t seed) {
  pipeline::RunConfig cfg;
  cfg.out_dir = dir.string();
  cfg.synth = tiny_spec(seed);
  cfg.lda.T = 3;
  cfg.lda.iterations = 60;
  cfg.lda.min_doc_freq = 1;
  cfg.lda.drop_top_frac = 0.0;
  cfg.embedding.layers = 2;
  cfg.embedding.dim = 16;
  cfg.train.epochs = 4;
  cfg.seed = seed;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("persrank_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("synthetic generation is deterministic and click-consistent") {
  const auto spec = tiny_spec(42);
  const auto a = synthetic::generate_synthetic(spec);
  const auto b = synthetic::generate_synthetic(spec);

  TempDir dir("synth_det");
  synthetic::write_synthetic(a, (dir.path / "log_a.tsv").string(),
                             (dir.path / "docs_a.tsv").string());
  synthetic::write_synthetic(b, (dir.path / "log_b.tsv").string(),
                             (dir.path / "docs_b.tsv").string());
  CHECK(slurp(dir.path / "log_a.tsv") == slurp(dir.path / "log_b.tsv"));
  CHECK(slurp(dir.path / "docs_a.tsv") == slurp(dir.path / "docs_b.tsv"));

  auto different = spec;
  different.seed = 43;
  const auto c = synthetic::generate_synthetic(different);
  synthetic::write_synthetic(c, (dir.path / "log_c.tsv").string(),
                             (dir.path / "docs_c.tsv").string());
  CHECK(slurp(dir.path / "log_a.tsv") != slurp(dir.path / "log_c.tsv"));

  for (const auto& imp : a.impressions) {
    REQUIRE(imp.clicked.size() == 1);
    REQUIRE_FALSE(imp.candidates.empty());
  }
}

TEST_CASE("noiseless users click only own-topic documents") {
  auto spec = tiny_spec(7);
  spec.click_noise = 0.0;
  const auto corpus = synthetic::generate_synthetic(spec);

  std::map<std::string, int> user_pref;
  for (std::size_t u = 0; u < corpus.user_ids.size(); ++u) {
    user_pref[corpus.user_ids[u]] = corpus.user_topic[u];
  }
  std::map<std::string, int> doc_topic;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    doc_topic[corpus.documents.docs()[d].doc_id] = corpus.doc_topic[d];
  }
  for (const auto& imp : corpus.impressions) {
    for (const auto& clicked : imp.clicked) {
      CHECK(doc_topic.at(clicked) == user_pref.at(imp.query.user_id));
    }
  }
}

TEST_CASE("generator rejects a vocabulary smaller than the topic count") {
  auto spec = tiny_spec(1);
  spec.vocab_size = 3;
  spec.general_fraction = 0.9;
  CHECK_THROWS_AS(synthetic::generate_synthetic(spec), DataError);
}

TEST_CASE("run_pipeline produces a full artifact tree and a valid report") {
  TempDir dir("run_small");
  const auto cfg = tiny_run(dir.path, 5);
  const auto result = pipeline::run_pipeline(cfg);

  for (const auto& name :
       {"log.tsv", "docs.tsv", "lda.model", "doc_topics.tsv", "profiles.tsv", "scatter.csv",
        "emb.bin", "head.ckpt", "training_log.csv", "report.csv", "report.txt"}) {
    CAPTURE(name);
    CHECK(fs::exists(dir.path / name));
  }
  for (const auto& name : {"docs.tsv", "history.tsv", "train.tsv", "validation.tsv",
                           "test.tsv", "meta.tsv"}) {
    CAPTURE(name);
    CHECK(fs::exists(dir.path / "corpus" / name));
  }
  CHECK(fs::exists(dir.path / "heatmaps/interest.csv"));
  CHECK(fs::exists(dir.path / "heatmaps/semantic.csv"));

  CHECK(result.report.query_count > 0);
  CHECK(result.report.map >= 0.0);
  CHECK(result.report.map <= 1.0);
  CHECK(result.report.mrr >= 0.0);
  CHECK(result.report.mrr <= 1.0);
  CHECK(result.report.a_clk >= 1.0);
  for (const auto& stage : result.stages) {
    CAPTURE(stage.name);
    CHECK_FALSE(stage.skipped);
  }

  // Pipeline contract: every artifact satisfies its consumer.
  const auto split_corpus = corpus::load_split((dir.path / "corpus").string());
  std::ifstream docs_in(dir.path / "corpus/docs.tsv");
  const auto docs = corpus::read_document_table(docs_in, "docs");
  const auto model = topics::load_model((dir.path / "lda.model").string());
  CHECK(model.config.T == 3);
  std::ifstream prof_in(dir.path / "profiles.tsv");
  const auto profs = profiles::read_profiles(prof_in, "profiles");
  CHECK(profs.size() == split_corpus.history.size());
  for (const auto& p : profs) CHECK(p.p_u.size() == 3);
  const embeddings::CacheReader reader((dir.path / "emb.bin").string());
  CHECK(reader.layer_count() == 2);
  CHECK(reader.dim() == 16);
  const auto head = ranker::load_head((dir.path / "head.ckpt").string());
  CHECK(head.topic_count == 3);
  CHECK(head.embedding_layers == 2);
  CHECK(head.head.weights.size() == 11 + 2 * 11);

  // Every ranked pair is served by the cache.
  for (const auto* part : {&split_corpus.train, &split_corpus.validation, &split_corpus.test}) {
    for (const auto& imp : *part) {
      for (const auto& doc_id : imp.candidates) {
        CHECK_NOTHROW(reader.embed_pair(imp.query.tokens, doc_id, {}));
      }
    }
  }
}

TEST_CASE("run_pipeline is idempotent and deterministic") {
  TempDir dir_a("run_det_a");
  TempDir dir_b("run_det_b");
  const auto cfg_a = tiny_run(dir_a.path, 11);
  const auto cfg_b = tiny_run(dir_b.path, 11);

  const auto first = pipeline::run_pipeline(cfg_a);
  const auto report_bytes = slurp(dir_a.path / "report.csv");

  // Second run with no force: every stage skips, artifacts untouched.
  const auto again = pipeline::run_pipeline(cfg_a);
  for (const auto& stage : again.stages) {
    CAPTURE(stage.name);
    CHECK(stage.skipped);
  }
  CHECK(slurp(dir_a.path / "report.csv") == report_bytes);
  // The skipped stage reports back the CSV's 6-decimal values.
  CHECK(again.report.map == doctest::Approx(first.report.map).epsilon(1e-5));

  // Fresh directory, same config: byte-identical outputs.
  pipeline::run_pipeline(cfg_b);
  CHECK(slurp(dir_b.path / "report.csv") == report_bytes);
  CHECK(slurp(dir_b.path / "log.tsv") == slurp(dir_a.path / "log.tsv"));
  CHECK(slurp(dir_b.path / "profiles.tsv") == slurp(dir_a.path / "profiles.tsv"));
  CHECK(slurp(dir_b.path / "head.ckpt") == slurp(dir_a.path / "head.ckpt"));

  // Force rebuilds everything to the same bytes.
  auto forced = cfg_a;
  forced.force = true;
  const auto rebuilt = pipeline::run_pipeline(forced);
  for (const auto& stage : rebuilt.stages) CHECK_FALSE(stage.skipped);
  CHECK(slurp(dir_a.path / "report.csv") == report_bytes);
}

TEST_CASE("ablated runs write separate artifacts") {
  TempDir dir("run_ablate");
  auto cfg = tiny_run(dir.path, 13);
  pipeline::run_pipeline(cfg);
  cfg.ablate_interest = true;
  const auto ablated = pipeline::run_pipeline(cfg);
  CHECK(fs::exists(dir.path / "head_ablated.ckpt"));
  CHECK(fs::exists(dir.path / "report_ablated.csv"));
  CHECK(slurp(dir.path / "report_ablated.csv").find("semantic-only") != std::string::npos);
  CHECK(ablated.report.query_count > 0);
  // Shared upstream stages were reused.
  bool saw_skipped_lda = false;
  for (const auto& stage : ablated.stages) {
    if (stage.name == "train-lda") saw_skipped_lda = stage.skipped;
  }
  CHECK(saw_skipped_lda);
}

TEST_CASE("feature source substitutes providers transparently") {
  // The matching features depend on providers only through returned vectors:
  // a cache reader and the synthetic provider it was built from agree.
  TempDir dir("provider_sub");
  embeddings::SyntheticProviderConfig ecfg;
  ecfg.layers = 2;
  ecfg.dim = 12;
  ecfg.seed = 3;
  embeddings::SyntheticProvider direct(ecfg);

  const corpus::TokenList query = {"alpha", "beta"};
  const corpus::TokenList doc_tokens = {"gamma", "alpha", "delta"};
  const auto cache_path = (dir.path / "pairs.bin").string();
  embeddings::write_embedding_cache({{query, "doc", doc_tokens}}, direct, cache_path);
  embeddings::CacheReader cached(cache_path);

  std::map<std::string, std::vector<double>> profile = {{"u", {0.6, 0.4}}};
  std::map<std::string, std::vector<double>> doc_topics = {{"doc", {0.3, 0.7}}};
  std::map<std::string, corpus::TokenList> tokens = {{"doc", doc_tokens}};
  const auto bank = matching::KernelBank::default_bank();

  pipeline::PipelineFeatureSource from_direct(profile, doc_topics, tokens, direct, bank);
  pipeline::PipelineFeatureSource from_cache(profile, doc_topics, tokens, cached, bank);
  corpus::Query q;
  q.tokens = query;
  q.user_id = "u";
  CHECK(from_direct.features("u", q, "doc") == from_cache.features("u", q, "doc"));
  CHECK(from_direct.feature_dim() == 11 * 3);

  pipeline::PipelineFeatureSource ablated(profile, doc_topics, tokens, direct, bank, true);
  const auto feat = ablated.features("u", q, "doc");
  for (std::size_t z = 0; z < bank.size(); ++z) CHECK(feat[z] == 0.0);
  CHECK_THROWS_WITH_AS(ablated.features("u", q, "nope"), doctest::Contains("nope"), DataError);
  CHECK_THROWS_WITH_AS(ablated.features("ghost", q, "doc"), doctest::Contains("ghost"),
                       DataError);
}

TEST_CASE("stage failures halt with the stage name and cause") {
  TempDir dir("run_bad");
  auto cfg = tiny_run(dir.path, 3);
  cfg.lda.T = 1;  // rejected by the topic-model trainer
  CHECK_THROWS_WITH_AS(pipeline::run_pipeline(cfg), doctest::Contains("stage train-lda"),
                       DataError);
}

TEST_CASE("sweep_topic_count emits one row per candidate and survives failures") {
  const auto corpus_data = synthetic::generate_synthetic(tiny_spec(19));
  auto imps = corpus_data.impressions;
  const auto split_corpus = corpus::split(imps, 0.38);

  pipeline::RunConfig cfg;
  cfg.lda.iterations = 40;
  cfg.lda.min_doc_freq = 1;
  cfg.lda.drop_top_frac = 0.0;
  cfg.embedding.layers = 2;
  cfg.embedding.dim = 12;
  cfg.train.epochs = 2;
  cfg.seed = 19;

  const auto rows =
      pipeline::sweep_topic_count(split_corpus, corpus_data.documents, {1, 3}, cfg);
  REQUIRE(rows.size() == 2);
  CHECK_FALSE(rows[0].ok);  // T=1 is rejected by the trainer
  CHECK(rows[0].error.find("T") != std::string::npos);
  CHECK(rows[1].ok);
  CHECK(rows[1].T == 3);
  CHECK(rows[1].metrics.query_count > 0);

  std::ostringstream csv;
  pipeline::write_sweep_csv(rows, csv);
  CHECK(csv.str().find("error") != std::string::npos);
  CHECK(csv.str().find("\n3,") != std::string::npos);

  CHECK_THROWS_AS(
      pipeline::sweep_topic_count(split_corpus, corpus_data.documents, {}, cfg), DataError);
}
