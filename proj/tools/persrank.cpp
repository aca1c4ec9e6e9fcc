// Command-line front end wiring the full pipeline: ingest, topic modeling,
// profiles, embedding caches, training, evaluation, and analysis exports.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "persrank/corpus.hpp"
#include "persrank/embeddings.hpp"
#include "persrank/errors.hpp"
#include "persrank/evaluation.hpp"
#include "persrank/matching.hpp"
#include "persrank/pipeline.hpp"
#include "persrank/profiles.hpp"
#include "persrank/ranker.hpp"
#include "persrank/synthetic.hpp"
#include "persrank/topics.hpp"

namespace fs = std::filesystem;
using namespace persrank;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(text);
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

corpus::DocumentTable load_docs(const std::string& path,
                                const corpus::TokenizerConfig& cfg = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open document table '" + path + "'");
  return corpus::read_document_table(in, path, cfg);
}

std::vector<profiles::UserProfile> load_profiles(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open profiles file '" + path + "'");
  return profiles::read_profiles(in, path);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

struct ProviderOptions {
  std::string kind = "synthetic";  // synthetic | file
  std::string cache_path;
  embeddings::SyntheticProviderConfig synth{.layers = 3, .dim = 32};

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--provider", kind, "Embedding provider: synthetic or file")
        ->check(CLI::IsMember({"synthetic", "file"}));
    cmd->add_option("--emb", cache_path, "Embedding cache file (switches provider to file)");
    cmd->add_option("--emb-layers", synth.layers, "Synthetic provider layer count");
    cmd->add_option("--emb-dim", synth.dim, "Synthetic provider embedding width");
    cmd->add_option("--emb-window", synth.window, "Synthetic context half-width");
  }

  std::unique_ptr<embeddings::EmbeddingProvider> open(std::uint64_t seed) const {
    if (kind == "file" || !cache_path.empty()) {
      if (cache_path.empty()) throw DataError("--emb is required when --provider file");
      return std::make_unique<embeddings::CacheReader>(cache_path);
    }
    auto cfg = synth;
    cfg.seed = seed;
    return std::make_unique<embeddings::SyntheticProvider>(cfg);
  }
};

// Corpus dir + model + profiles + provider wired into a feature source.
struct FeatureStack {
  corpus::SplitCorpus split;
  corpus::DocumentTable docs;
  topics::TopicModelState model;
  std::unique_ptr<embeddings::EmbeddingProvider> provider;
  std::unique_ptr<pipeline::PipelineFeatureSource> features;
  matching::KernelBank bank = matching::KernelBank::default_bank();

  void build(const std::string& corpus_dir, const std::string& model_path,
             const std::string& profiles_path, const ProviderOptions& choice,
             std::uint64_t seed, bool ablate_interest) {
    split = corpus::load_split(corpus_dir);
    docs = load_docs(corpus_dir + "/docs.tsv");
    model = topics::load_model(model_path);
    provider = choice.open(seed);

    std::map<std::string, std::vector<double>> profile_map;
    for (const auto& p : load_profiles(profiles_path)) profile_map.emplace(p.user_id, p.p_u);
    std::map<std::string, corpus::TokenList> token_map;
    for (const auto& doc : docs.docs()) token_map.emplace(doc.doc_id, doc.tokens);
    features = std::make_unique<pipeline::PipelineFeatureSource>(
        std::move(profile_map), pipeline::infer_all_doc_topics(model, docs),
        std::move(token_map), *provider, bank, ablate_interest);
  }
};

void register_commands(CLI::App& app, std::uint64_t& seed, bool& force) {
  app.add_option("--seed", seed, "Global RNG seed")->capture_default_str();
  app.add_flag("--force", force, "Rebuild pipeline artifacts even when present");

  // ---- generate-synthetic ----
  {
    auto* cmd = app.add_subcommand("generate-synthetic",
                                   "Write a synthetic click log and document table");
    auto spec = std::make_shared<synthetic::SyntheticSpec>();
    auto out_dir = std::make_shared<std::string>("synth");
    cmd->add_option("--out", *out_dir, "Output directory")->capture_default_str();
    cmd->add_option("--users", spec->user_count)->capture_default_str();
    cmd->add_option("--topics", spec->true_topic_count)->capture_default_str();
    cmd->add_option("--vocab", spec->vocab_size)->capture_default_str();
    cmd->add_option("--docs-per-user", spec->docs_per_user)->capture_default_str();
    cmd->add_option("--candidates", spec->candidates_per_impression)->capture_default_str();
    cmd->add_option("--noise", spec->click_noise)->capture_default_str();
    cmd->add_option("--general-fraction", spec->general_fraction)->capture_default_str();
    cmd->add_option("--doc-len", spec->doc_len)->capture_default_str();
    cmd->add_option("--query-len", spec->query_len)->capture_default_str();
    cmd->callback([&seed, spec, out_dir] {
      spec->seed = seed;
      fs::create_directories(*out_dir);
      const auto corpus_data = synthetic::generate_synthetic(*spec);
      synthetic::write_synthetic(corpus_data, *out_dir + "/log.tsv", *out_dir + "/docs.tsv");
      std::cout << "wrote " << corpus_data.impressions.size() << " impressions over "
                << corpus_data.documents.size() << " docs to " << *out_dir << "\n";
    });
  }

  // ---- ingest ----
  {
    auto* cmd = app.add_subcommand("ingest", "Ingest a click log and split it for training");
    auto log_path = std::make_shared<std::string>();
    auto docs_path = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    auto fraction = std::make_shared<double>(0.38);
    auto tokenizer = std::make_shared<corpus::TokenizerConfig>();
    cmd->add_option("--log", *log_path, "Click-log TSV")->required();
    cmd->add_option("--docs", *docs_path, "Document table TSV")->required();
    cmd->add_option("--out", *out_dir, "Output corpus directory")->required();
    cmd->add_option("--history-fraction", *fraction)->capture_default_str();
    cmd->add_option("--max-query-len", tokenizer->max_query_len)->capture_default_str();
    cmd->add_option("--max-doc-len", tokenizer->max_doc_len)->capture_default_str();
    cmd->callback([log_path, docs_path, out_dir, fraction, tokenizer] {
      fs::create_directories(*out_dir);
      auto data = corpus::ingest(*log_path, *docs_path, *tokenizer);
      const auto split_corpus = corpus::split(std::move(data.impressions), *fraction);
      corpus::save_split(split_corpus, *out_dir);
      auto out = open_out(*out_dir + "/docs.tsv");
      corpus::write_document_table(data.documents, out);
      std::cout << "corpus: " << split_corpus.history.size() << " users, "
                << split_corpus.train.size() << " train / " << split_corpus.validation.size()
                << " validation / " << split_corpus.test.size() << " test impressions";
      if (!split_corpus.cold_start_users.empty()) {
        std::cout << " (" << split_corpus.cold_start_users.size() << " cold-start users)";
      }
      std::cout << "\n";
    });
  }

  // ---- train-lda ----
  {
    auto* cmd = app.add_subcommand("train-lda", "Train the topic model on a document table");
    auto docs_path = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>("lda.model");
    auto cfg = std::make_shared<topics::TopicModelConfig>();
    cmd->add_option("--docs", *docs_path, "Document table TSV")->required();
    cmd->add_option("--out", *out_path)->capture_default_str();
    cmd->add_option("--topics", cfg->T)->capture_default_str();
    cmd->add_option("--iters", cfg->iterations)->capture_default_str();
    cmd->add_option("--alpha", cfg->alpha, "Document-topic prior (default 50/T)");
    cmd->add_option("--beta", cfg->beta)->capture_default_str();
    cmd->add_option("--min-df", cfg->min_doc_freq)->capture_default_str();
    cmd->add_option("--drop-top-frac", cfg->drop_top_frac)->capture_default_str();
    cmd->callback([&seed, docs_path, out_path, cfg] {
      cfg->seed = seed;
      const auto docs = load_docs(*docs_path);
      const auto state = topics::train_lda(docs, *cfg);
      topics::save_model(state, *out_path);
      std::cout << "trained T=" << cfg->T << " on " << docs.size() << " docs (vocabulary "
                << state.vocab_size() << "), model written to " << *out_path << "\n";
    });
  }

  // ---- coherence ----
  {
    auto* cmd = app.add_subcommand("coherence", "Topic coherence of a trained model");
    auto model_path = std::make_shared<std::string>();
    auto docs_path = std::make_shared<std::string>();
    auto top_k = std::make_shared<int>(10);
    cmd->add_option("--model", *model_path)->required();
    cmd->add_option("--docs", *docs_path, "Document table for co-occurrence counts")->required();
    cmd->add_option("--topk", *top_k)->capture_default_str();
    cmd->callback([model_path, docs_path, top_k] {
      const auto model = topics::load_model(*model_path);
      const auto docs = load_docs(*docs_path);
      const auto report = topics::coherence(model, docs, *top_k);
      for (std::size_t t = 0; t < report.per_topic.size(); ++t) {
        std::cout << "topic " << t << ": " << report.per_topic[t] << " |";
        for (const auto& word : report.top_words[t]) std::cout << ' ' << word;
        std::cout << "\n";
      }
      std::cout << "mean coherence: " << report.mean << "\n";
    });
  }

  // ---- build-profiles ----
  {
    auto* cmd = app.add_subcommand("build-profiles", "Build user profiles from history clicks");
    auto model_path = std::make_shared<std::string>();
    auto corpus_dir = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>("profiles.tsv");
    auto multiset = std::make_shared<bool>(false);
    cmd->add_option("--model", *model_path)->required();
    cmd->add_option("--history", *corpus_dir, "Corpus directory with history.tsv")->required();
    cmd->add_option("--out", *out_path)->capture_default_str();
    cmd->add_flag("--multiset", *multiset, "Weight repeated clicks");
    cmd->callback([model_path, corpus_dir, out_path, multiset] {
      const auto model = topics::load_model(*model_path);
      const auto split_corpus = corpus::load_split(*corpus_dir);
      const auto docs = load_docs(*corpus_dir + "/docs.tsv");
      const auto doc_topics = pipeline::infer_all_doc_topics(model, docs);
      const auto profs =
          pipeline::build_all_profiles(split_corpus, doc_topics, model.config.T, *multiset);
      auto out = open_out(*out_path);
      profiles::write_profiles(profs, out);
      std::size_t cold = 0;
      for (const auto& p : profs) cold += p.cold_start ? 1 : 0;
      std::cout << "wrote " << profs.size() << " profiles (" << cold << " cold-start) to "
                << *out_path << "\n";
    });
  }

  // ---- export-scatter ----
  {
    auto* cmd = app.add_subcommand("export-scatter", "PCA projection of user profiles");
    auto profiles_path = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>("scatter.csv");
    cmd->add_option("--profiles", *profiles_path)->required();
    cmd->add_option("--out", *out_path)->capture_default_str();
    cmd->callback([profiles_path, out_path] {
      const auto scatter = profiles::export_profile_scatter(load_profiles(*profiles_path));
      auto out = open_out(*out_path);
      profiles::write_scatter_csv(scatter, out);
      std::cout << "wrote " << scatter.points.size() << " points to " << *out_path
                << (scatter.degenerate ? " (degenerate)" : "") << "\n";
    });
  }

  // ---- cache-embeddings ----
  {
    auto* cmd = app.add_subcommand("cache-embeddings", "Precompute an embedding cache");
    auto pairs_path = std::make_shared<std::string>();
    auto corpus_dir = std::make_shared<std::string>();
    auto docs_path = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>("emb.bin");
    auto provider = std::make_shared<ProviderOptions>();
    cmd->add_option("--pairs", *pairs_path, "TSV of query_text<TAB>doc_id rows");
    cmd->add_option("--corpus", *corpus_dir, "Corpus directory (all split pairs)");
    cmd->add_option("--docs", *docs_path, "Document table (defaults to <corpus>/docs.tsv)");
    cmd->add_option("--out", *out_path)->capture_default_str();
    provider->add_flags(cmd);
    cmd->callback([&seed, pairs_path, corpus_dir, docs_path, out_path, provider] {
      if (pairs_path->empty() == corpus_dir->empty()) {
        throw CLI::ValidationError("cache-embeddings", "give exactly one of --pairs, --corpus");
      }
      std::vector<embeddings::CachePair> pairs;
      if (!corpus_dir->empty()) {
        const auto split_corpus = corpus::load_split(*corpus_dir);
        const auto docs = load_docs(*corpus_dir + "/docs.tsv");
        pairs = pipeline::collect_cache_pairs(split_corpus, docs);
      } else {
        if (docs_path->empty()) throw DataError("--docs is required with --pairs");
        const auto docs = load_docs(*docs_path);
        std::ifstream in(*pairs_path);
        if (!in) throw DataError("cannot open pairs file '" + *pairs_path + "'");
        std::string line;
        std::size_t line_no = 0;
        corpus::TokenizerConfig tok;
        while (std::getline(in, line)) {
          ++line_no;
          if (line.empty()) continue;
          const auto tab = line.find('\t');
          if (tab == std::string::npos) {
            throw DataError(*pairs_path + ":" + std::to_string(line_no) +
                            ": want query_text<TAB>doc_id");
          }
          const auto& doc = docs.at(line.substr(tab + 1));
          pairs.push_back(
              {corpus::tokenize(line.substr(0, tab), tok.max_query_len), doc.doc_id, doc.tokens});
        }
      }
      auto synthetic_provider = provider->open(seed);
      embeddings::write_embedding_cache(pairs, *synthetic_provider, *out_path);
      std::cout << "cached " << pairs.size() << " pairs to " << *out_path << "\n";
    });
  }

  // ---- train ----
  {
    auto* cmd = app.add_subcommand("train", "Train the scoring head");
    auto corpus_dir = std::make_shared<std::string>();
    auto model_path = std::make_shared<std::string>();
    auto profiles_path = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>("head.ckpt");
    auto log_path = std::make_shared<std::string>();
    auto provider = std::make_shared<ProviderOptions>();
    auto cfg = std::make_shared<ranker::TrainConfig>();
    auto ablate = std::make_shared<std::string>();
    cmd->add_option("--corpus", *corpus_dir)->required();
    cmd->add_option("--model", *model_path)->required();
    cmd->add_option("--profiles", *profiles_path)->required();
    cmd->add_option("--out", *out_path)->capture_default_str();
    cmd->add_option("--log-out", *log_path, "Training log CSV");
    cmd->add_option("--epochs", cfg->epochs)->capture_default_str();
    cmd->add_option("--batches", cfg->batches_per_epoch)->capture_default_str();
    cmd->add_option("--pairs-per-batch", cfg->pairs_per_batch)->capture_default_str();
    cmd->add_option("--lr", cfg->learning_rate)->capture_default_str();
    cmd->add_option("--margin", cfg->margin)->capture_default_str();
    cmd->add_option("--optimizer", [cfg](const CLI::results_t& res) {
          if (res[0] == "adam") cfg->optimizer = ranker::TrainConfig::Optimizer::kAdam;
          else if (res[0] == "sgd") cfg->optimizer = ranker::TrainConfig::Optimizer::kSgd;
          else return false;
          return true;
        }, "Optimizer: adam or sgd");
    cmd->add_flag("--scale-with-corpus", cfg->scale_with_corpus,
                  "Scale batches per epoch with corpus size");
    cmd->add_option("--ablate", *ablate, "Ablation: 'interest' zeroes the profile features")
        ->check(CLI::IsMember({"interest"}));
    provider->add_flags(cmd);
    cmd->callback([&seed, corpus_dir, model_path, profiles_path, out_path, log_path, provider,
                   cfg, ablate] {
      FeatureStack stack;
      stack.build(*corpus_dir, *model_path, *profiles_path, *provider, seed,
                  *ablate == "interest");
      cfg->seed = seed;
      const auto result = ranker::train(stack.split, *stack.features, *cfg);
      ranker::save_head({result.head, stack.bank, stack.provider->layer_count(),
                         stack.model.config.T},
                        *out_path);
      if (!log_path->empty()) {
        auto out = open_out(*log_path);
        out << "epoch,mean_loss,validation_mrr,pairs,is_best\n";
        for (const auto& row : result.log) {
          out << row.epoch << ',' << row.mean_loss << ',' << row.validation_mrr << ','
              << row.pairs << ',' << (row.epoch == result.best_epoch ? 1 : 0) << '\n';
        }
      }
      std::cout << "trained " << result.log.size() << " epochs; best validation MRR "
                << (result.log.empty() ? 0.0
                                       : result.log[static_cast<std::size_t>(result.best_epoch - 1)]
                                             .validation_mrr)
                << " at epoch " << result.best_epoch << "; head written to " << *out_path << "\n";
    });
  }

  // ---- rank ----
  {
    auto* cmd = app.add_subcommand("rank", "Rank candidate documents for a user query");
    auto head_path = std::make_shared<std::string>();
    auto corpus_dir = std::make_shared<std::string>();
    auto model_path = std::make_shared<std::string>();
    auto profiles_path = std::make_shared<std::string>();
    auto user = std::make_shared<std::string>();
    auto query_text = std::make_shared<std::string>();
    auto candidates_csv = std::make_shared<std::string>();
    auto provider = std::make_shared<ProviderOptions>();
    cmd->add_option("--head", *head_path)->required();
    cmd->add_option("--corpus", *corpus_dir)->required();
    cmd->add_option("--model", *model_path)->required();
    cmd->add_option("--profiles", *profiles_path)->required();
    cmd->add_option("--user", *user)->required();
    cmd->add_option("--query", *query_text)->required();
    cmd->add_option("--candidates", *candidates_csv, "Comma-separated doc_ids")->required();
    provider->add_flags(cmd);
    cmd->callback([&seed, head_path, corpus_dir, model_path, profiles_path, user, query_text,
                   candidates_csv, provider] {
      FeatureStack stack;
      stack.build(*corpus_dir, *model_path, *profiles_path, *provider, seed, false);
      const auto checkpoint = ranker::load_head(*head_path);
      corpus::Query query;
      query.user_id = *user;
      corpus::TokenizerConfig tok;
      query.tokens = corpus::tokenize(*query_text, tok.max_query_len);
      const auto ranked = ranker::rank(checkpoint.head, *stack.features, *user, query,
                                       split_csv(*candidates_csv));
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        std::cout << (r + 1) << '\t' << ranked[r].doc_id << '\t' << ranked[r].score << '\n';
      }
    });
  }

  // ---- evaluate ----
  {
    auto* cmd = app.add_subcommand("evaluate", "Rank a split and report MAP/MRR/P@1/A.Clk");
    auto head_path = std::make_shared<std::string>();
    auto corpus_dir = std::make_shared<std::string>();
    auto model_path = std::make_shared<std::string>();
    auto profiles_path = std::make_shared<std::string>();
    auto split_name = std::make_shared<std::string>("test");
    auto out_path = std::make_shared<std::string>();
    auto ablate = std::make_shared<std::string>();
    auto provider = std::make_shared<ProviderOptions>();
    cmd->add_option("--head", *head_path)->required();
    cmd->add_option("--corpus", *corpus_dir)->required();
    cmd->add_option("--model", *model_path)->required();
    cmd->add_option("--profiles", *profiles_path)->required();
    cmd->add_option("--split", *split_name)->check(CLI::IsMember({"train", "validation", "test"}))
        ->capture_default_str();
    cmd->add_option("--out", *out_path, "Report CSV path");
    cmd->add_option("--ablate", *ablate)->check(CLI::IsMember({"interest"}));
    provider->add_flags(cmd);
    cmd->callback([&seed, head_path, corpus_dir, model_path, profiles_path, split_name,
                   out_path, ablate, provider] {
      FeatureStack stack;
      stack.build(*corpus_dir, *model_path, *profiles_path, *provider, seed,
                  *ablate == "interest");
      const auto checkpoint = ranker::load_head(*head_path);
      const auto& partition = *split_name == "train"
                                  ? stack.split.train
                                  : (*split_name == "validation" ? stack.split.validation
                                                                 : stack.split.test);
      const auto report =
          ranker::evaluate_partition(checkpoint.head, *stack.features, partition);
      const std::vector<evaluation::ReportRow> rows = {
          {*ablate == "interest" ? "semantic-only" : "full", report}};
      evaluation::write_report_table(rows, std::cout);
      if (report.excluded > 0) {
        std::cout << report.excluded << " zero-click impressions excluded\n";
      }
      if (!out_path->empty()) {
        auto out = open_out(*out_path);
        evaluation::write_report_csv(rows, out);
      }
    });
  }

  // ---- export-heatmaps ----
  {
    auto* cmd = app.add_subcommand("export-heatmaps", "Kernel activation CSVs for one query");
    auto corpus_dir = std::make_shared<std::string>();
    auto model_path = std::make_shared<std::string>();
    auto profiles_path = std::make_shared<std::string>();
    auto user = std::make_shared<std::string>();
    auto query_text = std::make_shared<std::string>();
    auto docs_csv = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>("heatmaps");
    auto provider = std::make_shared<ProviderOptions>();
    cmd->add_option("--corpus", *corpus_dir)->required();
    cmd->add_option("--model", *model_path)->required();
    cmd->add_option("--profiles", *profiles_path)->required();
    cmd->add_option("--user", *user)->required();
    cmd->add_option("--query", *query_text)->required();
    cmd->add_option("--docs", *docs_csv, "Comma-separated doc_ids")->required();
    cmd->add_option("--out", *out_dir)->capture_default_str();
    provider->add_flags(cmd);
    cmd->callback([&seed, corpus_dir, model_path, profiles_path, user, query_text, docs_csv,
                   out_dir, provider] {
      const auto model = topics::load_model(*model_path);
      const auto docs = load_docs(*corpus_dir + "/docs.tsv");
      std::map<std::string, std::vector<double>> profile_map;
      for (const auto& p : load_profiles(*profiles_path)) profile_map.emplace(p.user_id, p.p_u);
      auto it = profile_map.find(*user);
      if (it == profile_map.end()) throw DataError("no profile for user '" + *user + "'");

      std::vector<matching::HeatmapDoc> heat_docs;
      for (const auto& doc_id : split_csv(*docs_csv)) {
        const auto& doc = docs.at(doc_id);
        heat_docs.push_back({doc_id, doc.tokens, topics::infer_doc_topics(model, doc).t_d});
      }
      corpus::TokenizerConfig tok;
      const auto query_tokens = corpus::tokenize(*query_text, tok.max_query_len);
      const auto emb_provider = provider->open(seed);
      const auto tables = matching::export_kernel_heatmaps(
          it->second, query_tokens, heat_docs, *emb_provider,
          matching::KernelBank::default_bank());
      fs::create_directories(*out_dir);
      auto interest = open_out(*out_dir + "/interest.csv");
      matching::write_interest_heatmap_csv(tables, interest);
      auto semantic = open_out(*out_dir + "/semantic.csv");
      matching::write_semantic_heatmap_csv(tables, semantic);
      std::cout << "wrote kernel heatmaps for " << heat_docs.size() << " docs to " << *out_dir
                << "\n";
    });
  }

  // ---- sweep-topics ----
  {
    auto* cmd = app.add_subcommand("sweep-topics", "Coherence and metrics per topic count");
    auto corpus_dir = std::make_shared<std::string>();
    auto ts_csv = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>();
    auto run_cfg = std::make_shared<pipeline::RunConfig>();
    cmd->add_option("--corpus", *corpus_dir)->required();
    cmd->add_option("--ts", *ts_csv, "Comma-separated topic counts")->required();
    cmd->add_option("--out", *out_path, "Sweep table CSV");
    cmd->add_option("--iters", run_cfg->lda.iterations)->capture_default_str();
    cmd->add_option("--epochs", run_cfg->train.epochs)->capture_default_str();
    cmd->callback([&seed, corpus_dir, ts_csv, out_path, run_cfg] {
      run_cfg->seed = seed;
      const auto split_corpus = corpus::load_split(*corpus_dir);
      const auto docs = load_docs(*corpus_dir + "/docs.tsv");
      std::vector<int> ts;
      for (const auto& t : split_csv(*ts_csv)) ts.push_back(std::stoi(t));
      const auto rows = pipeline::sweep_topic_count(split_corpus, docs, ts, *run_cfg);
      pipeline::write_sweep_csv(rows, std::cout);
      if (!out_path->empty()) {
        auto out = open_out(*out_path);
        pipeline::write_sweep_csv(rows, out);
      }
    });
  }

  // ---- run ----
  {
    auto* cmd = app.add_subcommand("run", "Execute the whole pipeline end to end");
    auto cfg = std::make_shared<pipeline::RunConfig>();
    auto ablate = std::make_shared<std::string>();
    cmd->add_option("--out", cfg->out_dir, "Artifact directory")->required();
    cmd->add_option("--log", cfg->log_path, "Existing click log (otherwise synthetic)");
    cmd->add_option("--docs", cfg->docs_path, "Existing document table");
    cmd->add_option("--users", cfg->synth.user_count)->capture_default_str();
    cmd->add_option("--true-topics", cfg->synth.true_topic_count)->capture_default_str();
    cmd->add_option("--vocab", cfg->synth.vocab_size)->capture_default_str();
    cmd->add_option("--docs-per-user", cfg->synth.docs_per_user)->capture_default_str();
    cmd->add_option("--candidates", cfg->synth.candidates_per_impression)->capture_default_str();
    cmd->add_option("--noise", cfg->synth.click_noise)->capture_default_str();
    cmd->add_option("--general-fraction", cfg->synth.general_fraction)->capture_default_str();
    cmd->add_option("--doc-len", cfg->synth.doc_len)->capture_default_str();
    cmd->add_option("--query-len", cfg->synth.query_len)->capture_default_str();
    cmd->add_option("--history-fraction", cfg->history_fraction)->capture_default_str();
    cmd->add_option("--topics", cfg->lda.T)->capture_default_str();
    cmd->add_option("--iters", cfg->lda.iterations)->capture_default_str();
    cmd->add_option("--alpha", cfg->lda.alpha, "Document-topic prior (default 50/T)");
    cmd->add_option("--beta", cfg->lda.beta)->capture_default_str();
    cmd->add_option("--min-df", cfg->lda.min_doc_freq)->capture_default_str();
    cmd->add_option("--drop-top-frac", cfg->lda.drop_top_frac)->capture_default_str();
    cmd->add_option("--emb-layers", cfg->embedding.layers)->capture_default_str();
    cmd->add_option("--emb-dim", cfg->embedding.dim)->capture_default_str();
    cmd->add_option("--emb-window", cfg->embedding.window)->capture_default_str();
    cmd->add_option("--epochs", cfg->train.epochs)->capture_default_str();
    cmd->add_option("--lr", cfg->train.learning_rate)->capture_default_str();
    cmd->add_option("--ablate", *ablate, "Ablation: 'interest'")
        ->check(CLI::IsMember({"interest"}));
    cmd->callback([&seed, &force, cfg, ablate] {
      cfg->seed = seed;
      cfg->force = force;
      cfg->ablate_interest = *ablate == "interest";
      const auto result = pipeline::run_pipeline(*cfg);
      for (const auto& stage : result.stages) {
        std::cout << (stage.skipped ? "skipped " : "built   ") << stage.name << "\n";
      }
      const std::vector<evaluation::ReportRow> rows = {
          {cfg->ablate_interest ? "semantic-only" : "full", result.report}};
      evaluation::write_report_table(rows, std::cout);
      std::cout << "report: " << result.report_path << "\n";
    });
  }

  // Global flags like --seed are accepted after a subcommand name too.
  for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
    sub->fallthrough();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized search ranking pipeline"};
  app.set_config("--config", "", "Read options from a config file");
  app.require_subcommand(1);

  std::uint64_t seed = 7;
  bool force = false;
  register_commands(app, seed, force);

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
