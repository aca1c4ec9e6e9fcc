#include "persrank/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "persrank/errors.hpp"
#include "persrank/rng.hpp"

namespace persrank::synthetic {

namespace {

std::string word_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "w%04d", i);
  return buf;
}

std::string doc_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "d%05d", i);
  return buf;
}

std::string user_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "u%03d", i);
  return buf;
}

double overlap_fraction(const corpus::TokenList& query, const corpus::TokenList& doc) {
  if (query.empty()) return 0.0;
  std::set<std::string> doc_terms(doc.begin(), doc.end());
  std::size_t hits = 0;
  for (const auto& q : query) {
    if (doc_terms.count(q)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(query.size());
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.user_count < 1 || spec.true_topic_count < 1 || spec.vocab_size < 1 ||
      spec.docs_per_user < 1 || spec.candidates_per_impression < 1 || spec.doc_len < 1 ||
      spec.query_len < 1) {
    throw DataError("generate_synthetic: all counts must be >= 1");
  }
  if (spec.click_noise < 0.0 || spec.click_noise >= 1.0) {
    throw DataError("generate_synthetic: click_noise must be in [0,1)");
  }
  const int general_count =
      static_cast<int>(spec.general_fraction * static_cast<double>(spec.vocab_size));
  const int block_size = (spec.vocab_size - general_count) / spec.true_topic_count;
  if (block_size < 1) {
    throw DataError("generate_synthetic: vocabulary too small for " +
                    std::to_string(spec.true_topic_count) + " topics");
  }

  SyntheticCorpus out;
  out.topic_words.resize(static_cast<std::size_t>(spec.true_topic_count));
  for (int t = 0; t < spec.true_topic_count; ++t) {
    for (int i = 0; i < block_size; ++i) {
      out.topic_words[static_cast<std::size_t>(t)].push_back(
          word_name(general_count + t * block_size + i));
    }
  }
  std::vector<std::string> general_words;
  for (int i = 0; i < general_count; ++i) general_words.push_back(word_name(i));

  Rng rng(derive_seed(spec.seed, 0x5e7));

  // Document pool: one block-topic per row, round-robin.
  const int pool_size = spec.user_count * spec.docs_per_user;
  std::vector<std::vector<int>> docs_by_topic(static_cast<std::size_t>(spec.true_topic_count));
  for (int p = 0; p < pool_size; ++p) {
    const int topic = p % spec.true_topic_count;
    corpus::Document doc;
    doc.doc_id = doc_name(p);
    doc.tokens.reserve(static_cast<std::size_t>(spec.doc_len));
    const auto& block = out.topic_words[static_cast<std::size_t>(topic)];
    for (int i = 0; i < spec.doc_len; ++i) {
      if (!general_words.empty() && rng.uniform01() < spec.general_fraction) {
        doc.tokens.push_back(general_words[rng.uniform_index(general_words.size())]);
      } else {
        doc.tokens.push_back(block[rng.uniform_index(block.size())]);
      }
    }
    out.documents.add(std::move(doc));
    out.doc_topic.push_back(topic);
    docs_by_topic[static_cast<std::size_t>(topic)].push_back(p);
  }

  for (int u = 0; u < spec.user_count; ++u) {
    out.user_ids.push_back(user_name(u));
    out.user_topic.push_back(u % spec.true_topic_count);
  }

  for (int u = 0; u < spec.user_count; ++u) {
    const int pref = out.user_topic[static_cast<std::size_t>(u)];
    const auto& pref_block = out.topic_words[static_cast<std::size_t>(pref)];
    for (int k = 0; k < spec.docs_per_user; ++k) {
      corpus::Impression imp;
      imp.query.user_id = out.user_ids[static_cast<std::size_t>(u)];
      imp.query.timestamp = 1000 + static_cast<std::int64_t>(k) * spec.user_count + u;

      // Alternate topical queries with ambiguous general-vocabulary queries;
      // the latter are only separable through the user profile.
      const bool ambiguous = !general_words.empty() && (k % 2 == 1);
      for (int i = 0; i < spec.query_len; ++i) {
        if (ambiguous) {
          imp.query.tokens.push_back(general_words[rng.uniform_index(general_words.size())]);
        } else {
          imp.query.tokens.push_back(pref_block[rng.uniform_index(pref_block.size())]);
        }
      }

      const auto& own_docs = docs_by_topic[static_cast<std::size_t>(pref)];
      std::set<int> chosen;
      chosen.insert(static_cast<int>(own_docs[rng.uniform_index(own_docs.size())]));
      while (static_cast<int>(chosen.size()) < spec.candidates_per_impression &&
             static_cast<int>(chosen.size()) < pool_size) {
        chosen.insert(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(pool_size))));
      }
      std::vector<int> order(chosen.begin(), chosen.end());
      // Deterministic shuffle.
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.uniform_index(i)]);
      }
      for (int p : order) imp.candidates.push_back(out.documents.docs()[static_cast<std::size_t>(p)].doc_id);

      double best = -1.0;
      std::size_t best_at = 0;
      for (std::size_t c = 0; c < order.size(); ++c) {
        const auto& doc = out.documents.docs()[static_cast<std::size_t>(order[c])];
        const double affinity =
            out.doc_topic[static_cast<std::size_t>(order[c])] == pref ? 2.0 : 0.0;
        const double s = affinity + overlap_fraction(imp.query.tokens, doc.tokens);
        if (s > best) {
          best = s;
          best_at = c;
        }
      }
      if (spec.click_noise > 0.0 && rng.uniform01() < spec.click_noise) {
        best_at = rng.uniform_index(order.size());
      }
      imp.clicked.insert(imp.candidates[best_at]);
      imp.file_index = out.impressions.size();
      out.impressions.push_back(std::move(imp));
    }
  }
  return out;
}

void write_synthetic(const SyntheticCorpus& corpus, const std::string& log_path,
                     const std::string& docs_path) {
  std::ofstream log_out(log_path);
  if (!log_out) throw DataError("cannot write '" + log_path + "'");
  corpus::write_click_log(corpus.impressions, log_out);
  std::ofstream docs_out(docs_path);
  if (!docs_out) throw DataError("cannot write '" + docs_path + "'");
  corpus::write_document_table(corpus.documents, docs_out);
}

}  // namespace persrank::synthetic
