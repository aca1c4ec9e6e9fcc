#include "persrank/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "persrank/errors.hpp"
#include "persrank/rng.hpp"

namespace persrank::pipeline {

namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

bool all_exist(const std::vector<std::string>& paths) {
  return std::all_of(paths.begin(), paths.end(),
                     [](const std::string& p) { return fs::exists(p); });
}

void write_doc_topics(const std::map<std::string, std::vector<double>>& doc_topics,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  char buf[64];
  for (const auto& [doc_id, dist] : doc_topics) {
    out << doc_id;
    for (double v : dist) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << '\t' << buf;
    }
    out << '\n';
  }
}

std::map<std::string, std::vector<double>> read_doc_topics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::map<std::string, std::vector<double>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string doc_id;
    row >> doc_id;
    std::vector<double> dist;
    double v = 0.0;
    while (row >> v) dist.push_back(v);
    if (doc_id.empty() || dist.empty()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed doc-topics row");
    }
    out.emplace(std::move(doc_id), std::move(dist));
  }
  return out;
}

evaluation::MetricReport parse_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);  // header
  if (!std::getline(in, line)) throw DataError("empty report '" + path + "'");
  evaluation::MetricReport report;
  const auto first_comma = line.find(',');
  if (first_comma == std::string::npos) throw DataError("malformed report '" + path + "'");
  if (std::sscanf(line.c_str() + first_comma, ",%lf,%lf,%lf,%lf", &report.map, &report.mrr,
                  &report.p_at_1, &report.a_clk) != 4) {
    throw DataError("malformed report '" + path + "'");
  }
  return report;
}

}  // namespace

PipelineFeatureSource::PipelineFeatureSource(
    std::map<std::string, std::vector<double>> profiles,
    std::map<std::string, std::vector<double>> doc_topics,
    std::map<std::string, corpus::TokenList> doc_tokens,
    const embeddings::EmbeddingProvider& provider, matching::KernelBank bank,
    bool ablate_interest)
    : profiles_(std::move(profiles)),
      doc_topics_(std::move(doc_topics)),
      doc_tokens_(std::move(doc_tokens)),
      provider_(provider),
      bank_(std::move(bank)),
      ablate_interest_(ablate_interest) {}

std::size_t PipelineFeatureSource::feature_dim() const {
  return bank_.size() * (1 + static_cast<std::size_t>(provider_.layer_count()));
}

std::vector<double> PipelineFeatureSource::features(const std::string& user_id,
                                                    const corpus::Query& query,
                                                    const std::string& doc_id) const {
  std::string key = user_id;
  key.push_back('\x1f');
  key += hex64(embeddings::query_hash(query.tokens));
  key.push_back('\x1f');
  key += doc_id;
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;

  auto profile = profiles_.find(user_id);
  if (profile == profiles_.end()) {
    throw DataError("no profile for user '" + user_id + "'");
  }
  auto topics_it = doc_topics_.find(doc_id);
  if (topics_it == doc_topics_.end()) {
    throw DataError("no topic distribution for doc '" + doc_id + "'");
  }
  auto tokens_it = doc_tokens_.find(doc_id);
  if (tokens_it == doc_tokens_.end()) {
    throw DataError("no document text for doc '" + doc_id + "'");
  }

  std::vector<double> feat;
  feat.reserve(feature_dim());
  if (ablate_interest_) {
    feat.assign(bank_.size(), 0.0);
  } else {
    auto theta = matching::interest_features(profile->second, topics_it->second, bank_);
    feat = std::move(theta.theta);
  }
  auto [q_emb, d_emb] = provider_.embed_pair(query.tokens, doc_id, tokens_it->second);
  auto phi = matching::semantic_features(q_emb, d_emb, bank_);
  feat.insert(feat.end(), phi.phi.begin(), phi.phi.end());

  auto [it, inserted] = cache_.emplace(std::move(key), std::move(feat));
  return it->second;
}

corpus::DocumentTable clicked_history_docs(const corpus::SplitCorpus& split_corpus,
                                           const corpus::DocumentTable& docs) {
  corpus::DocumentTable table;
  std::set<std::string> seen;
  for (const auto& [user, imps] : split_corpus.history) {
    for (const auto& imp : imps) {
      for (const auto& doc_id : imp.clicked) {
        if (seen.insert(doc_id).second) table.add(docs.at(doc_id));
      }
    }
  }
  return table;
}

std::map<std::string, std::vector<double>> infer_all_doc_topics(
    const topics::TopicModelState& model, const corpus::DocumentTable& docs) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& doc : docs.docs()) {
    out.emplace(doc.doc_id, topics::infer_doc_topics(model, doc).t_d);
  }
  return out;
}

std::vector<profiles::UserProfile> build_all_profiles(
    const corpus::SplitCorpus& split_corpus,
    const std::map<std::string, std::vector<double>>& doc_topics, int topic_count,
    bool multiset) {
  std::vector<profiles::UserProfile> out;
  for (const auto& [user, imps] : split_corpus.history) {
    profiles::ClickHistory history;
    history.user_id = user;
    if (multiset) {
      for (const auto& imp : imps) {
        history.docs.insert(history.docs.end(), imp.clicked.begin(), imp.clicked.end());
      }
    } else {
      history.docs = split_corpus.clicked_history_docs(user);
    }
    out.push_back(profiles::build_profile(history, doc_topics, topic_count, multiset));
  }
  return out;
}

std::vector<embeddings::CachePair> collect_cache_pairs(const corpus::SplitCorpus& split_corpus,
                                                       const corpus::DocumentTable& docs) {
  std::vector<embeddings::CachePair> pairs;
  for (const auto* partition :
       {&split_corpus.train, &split_corpus.validation, &split_corpus.test}) {
    for (const auto& imp : *partition) {
      for (const auto& doc_id : imp.candidates) {
        pairs.push_back({imp.query.tokens, doc_id, docs.at(doc_id).tokens});
      }
    }
  }
  return pairs;
}

RunResult run_pipeline(const RunConfig& config) {
  if (config.out_dir.empty()) throw DataError("run_pipeline: out_dir is required");
  fs::create_directories(config.out_dir);
  fs::create_directories(config.out_dir + "/corpus");
  fs::create_directories(config.out_dir + "/heatmaps");

  RunResult result;
  auto stage = [&](const std::string& name, const std::vector<std::string>& outputs,
                   const std::function<void()>& build) {
    const bool skip = !config.force && all_exist(outputs);
    if (!skip) {
      try {
        build();
      } catch (const NumericError& e) {
        throw NumericError("stage " + name + ": " + e.what());
      } catch (const std::exception& e) {
        throw DataError("stage " + name + ": " + e.what());
      }
    }
    result.stages.push_back({name, skip});
    return !skip;
  };

  const std::string suffix = config.ablate_interest ? "_ablated" : "";
  const std::string log_path = config.out_dir + "/log.tsv";
  const std::string docs_path = config.out_dir + "/docs.tsv";
  const std::string corpus_dir = config.out_dir + "/corpus";
  const std::string model_path = config.out_dir + "/lda.model";
  const std::string doc_topics_path = config.out_dir + "/doc_topics.tsv";
  const std::string profiles_path = config.out_dir + "/profiles.tsv";
  const std::string scatter_path = config.out_dir + "/scatter.csv";
  const std::string cache_path = config.out_dir + "/emb.bin";
  const std::string head_path = config.out_dir + "/head" + suffix + ".ckpt";
  const std::string train_log_path = config.out_dir + "/training_log" + suffix + ".csv";
  const std::string report_path = config.out_dir + "/report" + suffix + ".csv";
  const std::string report_table_path = config.out_dir + "/report" + suffix + ".txt";

  // Source data.
  std::string src_log = config.log_path;
  std::string src_docs = config.docs_path;
  const bool use_synthetic = src_log.empty() || src_docs.empty();
  if (use_synthetic) {
    stage("generate", {log_path, docs_path}, [&] {
      synthetic::SyntheticSpec spec = config.synth;
      spec.seed = derive_seed(config.seed, 1);
      write_synthetic(synthetic::generate_synthetic(spec), log_path, docs_path);
    });
    src_log = log_path;
    src_docs = docs_path;
  }

  // Ingest and split.
  corpus::DocumentTable docs;
  corpus::SplitCorpus split_corpus;
  const std::vector<std::string> corpus_files = {
      corpus_dir + "/docs.tsv",  corpus_dir + "/history.tsv", corpus_dir + "/train.tsv",
      corpus_dir + "/validation.tsv", corpus_dir + "/test.tsv"};
  const bool ingested = stage("ingest", corpus_files, [&] {
    auto data = corpus::ingest(src_log, src_docs, config.tokenizer);
    auto sc = corpus::split(std::move(data.impressions), config.history_fraction);
    corpus::save_split(sc, corpus_dir);
    std::ofstream out(corpus_dir + "/docs.tsv");
    if (!out) throw DataError("cannot write '" + corpus_dir + "/docs.tsv'");
    corpus::write_document_table(data.documents, out);
    docs = std::move(data.documents);
    split_corpus = std::move(sc);
  });
  if (!ingested) {
    std::ifstream in(corpus_dir + "/docs.tsv");
    docs = corpus::read_document_table(in, corpus_dir + "/docs.tsv", config.tokenizer);
    split_corpus = corpus::load_split(corpus_dir, config.tokenizer);
  }

  // Topic model over clicked history documents.
  topics::TopicModelState model;
  const bool trained_lda = stage("train-lda", {model_path}, [&] {
    auto lda_cfg = config.lda;
    lda_cfg.seed = derive_seed(config.seed, 2);
    model = topics::train_lda(clicked_history_docs(split_corpus, docs), lda_cfg);
    topics::save_model(model, model_path);
  });
  if (!trained_lda) model = topics::load_model(model_path);

  // Topic distributions for every document.
  std::map<std::string, std::vector<double>> doc_topics;
  const bool inferred = stage("infer-topics", {doc_topics_path}, [&] {
    doc_topics = infer_all_doc_topics(model, docs);
    write_doc_topics(doc_topics, doc_topics_path);
  });
  if (!inferred) doc_topics = read_doc_topics(doc_topics_path);

  // User profiles.
  std::vector<profiles::UserProfile> user_profiles;
  const bool built_profiles = stage("build-profiles", {profiles_path}, [&] {
    user_profiles =
        build_all_profiles(split_corpus, doc_topics, model.config.T, config.multiset_profiles);
    std::ofstream out(profiles_path);
    if (!out) throw DataError("cannot write '" + profiles_path + "'");
    profiles::write_profiles(user_profiles, out);
  });
  if (!built_profiles) {
    std::ifstream in(profiles_path);
    user_profiles = profiles::read_profiles(in, profiles_path);
  }

  stage("export-scatter", {scatter_path}, [&] {
    std::ofstream out(scatter_path);
    if (!out) throw DataError("cannot write '" + scatter_path + "'");
    profiles::write_scatter_csv(profiles::export_profile_scatter(user_profiles), out);
  });

  // Embedding cache for every (query, candidate) pair to be scored.
  stage("cache-embeddings", {cache_path}, [&] {
    auto emb_cfg = config.embedding;
    emb_cfg.seed = derive_seed(config.seed, 3);
    embeddings::SyntheticProvider provider(emb_cfg);
    embeddings::write_embedding_cache(collect_cache_pairs(split_corpus, docs), provider,
                                      cache_path);
  });
  embeddings::CacheReader provider(cache_path);

  std::map<std::string, std::vector<double>> profile_map;
  for (const auto& p : user_profiles) profile_map.emplace(p.user_id, p.p_u);
  std::map<std::string, corpus::TokenList> token_map;
  for (const auto& doc : docs.docs()) token_map.emplace(doc.doc_id, doc.tokens);

  PipelineFeatureSource features(profile_map, doc_topics, token_map, provider, config.bank,
                                 config.ablate_interest);

  // Scoring head.
  ranker::HeadCheckpoint checkpoint;
  const bool trained_head = stage("train", {head_path, train_log_path}, [&] {
    auto train_cfg = config.train;
    train_cfg.seed = derive_seed(config.seed, 4);
    auto trained = ranker::train(split_corpus, features, train_cfg);
    checkpoint = {trained.head, config.bank, provider.layer_count(), model.config.T};
    ranker::save_head(checkpoint, head_path);
    std::ofstream out(train_log_path);
    if (!out) throw DataError("cannot write '" + train_log_path + "'");
    char buf[160];
    out << "epoch,mean_loss,validation_mrr,pairs,is_best\n";
    for (const auto& row : trained.log) {
      std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%d,%d", row.epoch, row.mean_loss,
                    row.validation_mrr, row.pairs, row.epoch == trained.best_epoch ? 1 : 0);
      out << buf << '\n';
    }
  });
  if (!trained_head) checkpoint = ranker::load_head(head_path);

  // Evaluation on the test partition.
  const bool evaluated = stage("evaluate", {report_path}, [&] {
    result.report = ranker::evaluate_partition(checkpoint.head, features, split_corpus.test);
    std::vector<evaluation::ReportRow> rows = {
        {config.ablate_interest ? "semantic-only" : "full", result.report}};
    std::ofstream csv(report_path);
    if (!csv) throw DataError("cannot write '" + report_path + "'");
    evaluation::write_report_csv(rows, csv);
    std::ofstream table(report_table_path);
    evaluation::write_report_table(rows, table);
  });
  if (!evaluated) result.report = parse_report_csv(report_path);
  result.report_path = report_path;

  // Kernel heatmaps for the first clicked test impression.
  stage("export-heatmaps",
        {config.out_dir + "/heatmaps/interest.csv", config.out_dir + "/heatmaps/semantic.csv"},
        [&] {
          const corpus::Impression* picked = nullptr;
          for (const auto& imp : split_corpus.test) {
            if (imp.has_click()) {
              picked = &imp;
              break;
            }
          }
          if (!picked) {
            warn("export-heatmaps: no clicked test impression, skipping export");
            return;
          }
          std::vector<matching::HeatmapDoc> heat_docs;
          for (const auto& doc_id : picked->candidates) {
            heat_docs.push_back({doc_id, token_map.at(doc_id), doc_topics.at(doc_id)});
          }
          const auto tables = matching::export_kernel_heatmaps(
              profile_map.at(picked->query.user_id), picked->query.tokens, heat_docs, provider,
              config.bank);
          std::ofstream interest(config.out_dir + "/heatmaps/interest.csv");
          matching::write_interest_heatmap_csv(tables, interest);
          std::ofstream semantic(config.out_dir + "/heatmaps/semantic.csv");
          matching::write_semantic_heatmap_csv(tables, semantic);
        });

  return result;
}

std::vector<SweepRow> sweep_topic_count(const corpus::SplitCorpus& split_corpus,
                                        const corpus::DocumentTable& docs,
                                        const std::vector<int>& candidate_ts,
                                        const RunConfig& base_config) {
  if (candidate_ts.empty()) throw DataError("sweep_topic_count: no candidate topic counts");
  std::vector<SweepRow> rows;
  embeddings::SyntheticProviderConfig emb_cfg = base_config.embedding;
  emb_cfg.seed = derive_seed(base_config.seed, 3);
  embeddings::SyntheticProvider provider(emb_cfg);

  for (int t : candidate_ts) {
    SweepRow row;
    row.T = t;
    try {
      auto lda_cfg = base_config.lda;
      lda_cfg.T = t;
      lda_cfg.seed = derive_seed(base_config.seed, 2);
      const auto training_docs = clicked_history_docs(split_corpus, docs);
      const auto model = topics::train_lda(training_docs, lda_cfg);
      row.coherence = topics::coherence(model, training_docs).mean;

      const auto doc_topics = infer_all_doc_topics(model, docs);
      const auto user_profiles =
          build_all_profiles(split_corpus, doc_topics, t, base_config.multiset_profiles);
      std::map<std::string, std::vector<double>> profile_map;
      for (const auto& p : user_profiles) profile_map.emplace(p.user_id, p.p_u);
      std::map<std::string, corpus::TokenList> token_map;
      for (const auto& doc : docs.docs()) token_map.emplace(doc.doc_id, doc.tokens);

      PipelineFeatureSource features(profile_map, doc_topics, token_map, provider,
                                     base_config.bank, base_config.ablate_interest);
      auto train_cfg = base_config.train;
      train_cfg.seed = derive_seed(base_config.seed, 4);
      const auto trained = ranker::train(split_corpus, features, train_cfg);
      row.metrics = ranker::evaluate_partition(trained.head, features, split_corpus.test);
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  char buf[192];
  out << "T,coherence,MAP,MRR,P@1,A.Clk,status\n";
  for (const auto& row : rows) {
    if (row.ok) {
      std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f,%.6f,ok", row.T, row.coherence,
                    row.metrics.map, row.metrics.mrr, row.metrics.p_at_1, row.metrics.a_clk);
      out << buf << '\n';
    } else {
      out << row.T << ",,,,,," << "error: " << row.error << '\n';
    }
  }
}

}  // namespace persrank::pipeline
