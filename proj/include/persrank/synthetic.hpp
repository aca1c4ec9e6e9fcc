#ifndef PERSRANK_SYNTHETIC_HPP_
#define PERSRANK_SYNTHETIC_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "persrank/corpus.hpp"

namespace persrank::synthetic {

// Click-log generator with latent user interests. Users are assigned a
// preferred topic round-robin; documents are sampled from per-topic word
// blocks plus a shared general block; clicks follow topical affinity plus
// lexical overlap with optional noise.
struct SyntheticSpec {
  int user_count = 60;
  int true_topic_count = 5;
  int vocab_size = 400;
  int docs_per_user = 20;  // impressions per user; the doc pool scales with it
  int candidates_per_impression = 6;
  double click_noise = 0.1;
  std::uint64_t seed = 7;

  double general_fraction = 0.2;  // shared vocabulary block
  int doc_len = 30;
  int query_len = 3;
};

struct SyntheticCorpus {
  corpus::DocumentTable documents;
  std::vector<corpus::Impression> impressions;
  std::vector<int> doc_topic;                        // truth, by doc row
  std::vector<std::string> user_ids;                 // "u000", ...
  std::vector<int> user_topic;                       // truth, by user index
  std::vector<std::vector<std::string>> topic_words; // truth, per topic block
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

void write_synthetic(const SyntheticCorpus& corpus, const std::string& log_path,
                     const std::string& docs_path);

}  // namespace persrank::synthetic

#endif  // PERSRANK_SYNTHETIC_HPP_
