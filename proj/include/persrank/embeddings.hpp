#ifndef PERSRANK_EMBEDDINGS_HPP_
#define PERSRANK_EMBEDDINGS_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "persrank/corpus.hpp"

namespace persrank::embeddings {

// Per-layer contextualized token vectors, layer-major then token-major.
struct LayeredEmbeddings {
  int layers = 0;
  int dim = 0;
  int tokens = 0;
  std::vector<float> data;  // layers * tokens * dim

  std::span<const float> vec(int layer, int token) const {
    const std::size_t off =
        (static_cast<std::size_t>(layer) * static_cast<std::size_t>(tokens) +
         static_cast<std::size_t>(token)) *
        static_cast<std::size_t>(dim);
    return {data.data() + off, static_cast<std::size_t>(dim)};
  }
  float* mutable_vec(int layer, int token) {
    return data.data() +
           (static_cast<std::size_t>(layer) * static_cast<std::size_t>(tokens) +
            static_cast<std::size_t>(token)) *
               static_cast<std::size_t>(dim);
  }
};

// Stable 64-bit hash of a token sequence; the query half of a cache key.
std::uint64_t query_hash(const corpus::TokenList& tokens);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // Both results share layers and dim. Throws DataError on empty inputs or,
  // for file-backed providers, on a missing (query, doc_id) record.
  virtual std::pair<LayeredEmbeddings, LayeredEmbeddings> embed_pair(
      const corpus::TokenList& query_tokens, const std::string& doc_id,
      const corpus::TokenList& doc_tokens) const = 0;
  virtual int layer_count() const = 0;
  virtual int dim() const = 0;
};

struct SyntheticProviderConfig {
  int layers = 12;
  int dim = 768;
  std::uint64_t seed = 7;
  int window = 2;  // context-mixing half-width
};

// Deterministic stand-in for an external encoder. Layer 1 is the seeded hash
// vector of the token string; each later layer averages the previous layer
// over neighbors within `window`, re-mixes with a layer key, and
// renormalizes, so every emitted vector has unit norm.
class SyntheticProvider final : public EmbeddingProvider {
 public:
  explicit SyntheticProvider(const SyntheticProviderConfig& config);

  std::pair<LayeredEmbeddings, LayeredEmbeddings> embed_pair(
      const corpus::TokenList& query_tokens, const std::string& doc_id,
      const corpus::TokenList& doc_tokens) const override;
  int layer_count() const override { return config_.layers; }
  int dim() const override { return config_.dim; }

  LayeredEmbeddings embed_sequence(const corpus::TokenList& tokens) const;

 private:
  SyntheticProviderConfig config_;
  std::vector<float> layer_keys_;  // one unit vector per layer
};

struct CachePair {
  corpus::TokenList query;
  std::string doc_id;
  corpus::TokenList doc_tokens;
};

// Binary cache: magic, version, L, dim, record count, then per record the
// query hash, length-prefixed doc_id, m, n, and float32 vectors (query block
// then doc block, layer-major then token-major, little-endian).
void write_embedding_cache(const std::vector<CachePair>& pairs,
                           const EmbeddingProvider& provider, const std::string& path);

class CacheReader final : public EmbeddingProvider {
 public:
  explicit CacheReader(const std::string& path);

  std::pair<LayeredEmbeddings, LayeredEmbeddings> embed_pair(
      const corpus::TokenList& query_tokens, const std::string& doc_id,
      const corpus::TokenList& doc_tokens) const override;
  int layer_count() const override { return layers_; }
  int dim() const override { return dim_; }
  std::size_t pair_count() const { return records_.size(); }

 private:
  int layers_ = 0;
  int dim_ = 0;
  std::map<std::pair<std::uint64_t, std::string>, std::pair<LayeredEmbeddings, LayeredEmbeddings>>
      records_;
};

}  // namespace persrank::embeddings

#endif  // PERSRANK_EMBEDDINGS_HPP_
