#include "persrank/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "persrank/errors.hpp"
#include "persrank/rng.hpp"

namespace persrank::embeddings {

namespace {

constexpr char kMagic[8] = {'E', 'M', 'B', 'C', 'A', 'C', 'H', '1'};
constexpr std::uint32_t kVersion = 1;

void normalize(float* v, int dim, const float* fallback) {
  double norm_sq = 0.0;
  for (int i = 0; i < dim; ++i) norm_sq += static_cast<double>(v[i]) * v[i];
  if (norm_sq < 1e-24) {
    if (fallback) std::memcpy(v, fallback, static_cast<std::size_t>(dim) * sizeof(float));
    return;
  }
  const float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
  for (int i = 0; i < dim; ++i) v[i] *= inv;
}

void fill_unit_hash_vector(std::uint64_t seed, float* out, int dim) {
  Rng rng(seed);
  for (int i = 0; i < dim; ++i) out[i] = static_cast<float>(rng.gaussian());
  normalize(out, dim, nullptr);
}

// Little-endian primitives; the format is byte-defined, not host-defined.
void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
               static_cast<char>(v >> 24)};
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
  out.write(b, 8);
}

void put_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

float get_f32(std::istream& in) {
  const std::uint32_t bits = get_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

std::uint64_t query_hash(const corpus::TokenList& tokens) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& tok : tokens) {
    h = fnv1a64(tok, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
  }
  return h;
}

SyntheticProvider::SyntheticProvider(const SyntheticProviderConfig& config) : config_(config) {
  if (config_.layers < 1 || config_.dim < 1) {
    throw DataError("synthetic provider: layers and dim must be >= 1");
  }
  if (config_.window < 0) throw DataError("synthetic provider: window must be >= 0");
  layer_keys_.resize(static_cast<std::size_t>(config_.layers) *
                     static_cast<std::size_t>(config_.dim));
  for (int l = 0; l < config_.layers; ++l) {
    fill_unit_hash_vector(derive_seed(config_.seed, 0xA11CE000ULL + static_cast<std::uint64_t>(l)),
                          layer_keys_.data() + static_cast<std::size_t>(l) * config_.dim,
                          config_.dim);
  }
}

LayeredEmbeddings SyntheticProvider::embed_sequence(const corpus::TokenList& tokens) const {
  if (tokens.empty()) throw DataError("embed_pair: zero-length token sequence");
  const int n = static_cast<int>(tokens.size());
  const int dim = config_.dim;
  const int L = config_.layers;

  LayeredEmbeddings emb;
  emb.layers = L;
  emb.dim = dim;
  emb.tokens = n;
  emb.data.resize(static_cast<std::size_t>(L) * n * dim);

  // Layer 1: per-token hash vectors, context-free.
  std::vector<float> base(static_cast<std::size_t>(n) * dim);
  for (int i = 0; i < n; ++i) {
    fill_unit_hash_vector(derive_seed(config_.seed, fnv1a64(tokens[static_cast<std::size_t>(i)])),
                          base.data() + static_cast<std::size_t>(i) * dim, dim);
  }
  std::memcpy(emb.mutable_vec(0, 0), base.data(), base.size() * sizeof(float));

  std::vector<float> sum(static_cast<std::size_t>(dim));
  for (int l = 1; l < L; ++l) {
    const float* key = layer_keys_.data() + static_cast<std::size_t>(l) * dim;
    for (int i = 0; i < n; ++i) {
      const int lo = std::max(0, i - config_.window);
      const int hi = std::min(n - 1, i + config_.window);
      std::fill(sum.begin(), sum.end(), 0.0f);
      for (int j = lo; j <= hi; ++j) {
        const auto prev = emb.vec(l - 1, j);
        for (int k = 0; k < dim; ++k) sum[static_cast<std::size_t>(k)] += prev[static_cast<std::size_t>(k)];
      }
      const float scale = 1.0f / static_cast<float>(hi - lo + 1);
      float* out = emb.mutable_vec(l, i);
      // Rotate by one coordinate and blend in the layer key.
      for (int k = 0; k < dim; ++k) {
        out[k] = sum[static_cast<std::size_t>((k + 1) % dim)] * scale + 0.25f * key[k];
      }
      normalize(out, dim, base.data() + static_cast<std::size_t>(i) * dim);
    }
  }
  return emb;
}

std::pair<LayeredEmbeddings, LayeredEmbeddings> SyntheticProvider::embed_pair(
    const corpus::TokenList& query_tokens, const std::string&,
    const corpus::TokenList& doc_tokens) const {
  return {embed_sequence(query_tokens), embed_sequence(doc_tokens)};
}

void write_embedding_cache(const std::vector<CachePair>& pairs,
                           const EmbeddingProvider& provider, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embedding cache '" + path + "'");

  std::set<std::pair<std::uint64_t, std::string>> seen;
  std::vector<const CachePair*> unique;
  for (const auto& pair : pairs) {
    if (seen.emplace(query_hash(pair.query), pair.doc_id).second) unique.push_back(&pair);
  }

  out.write(kMagic, 8);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(provider.layer_count()));
  put_u32(out, static_cast<std::uint32_t>(provider.dim()));
  put_u32(out, static_cast<std::uint32_t>(unique.size()));

  for (const CachePair* pair : unique) {
    auto [q_emb, d_emb] = provider.embed_pair(pair->query, pair->doc_id, pair->doc_tokens);
    if (q_emb.layers != provider.layer_count() || q_emb.dim != provider.dim() ||
        d_emb.layers != provider.layer_count() || d_emb.dim != provider.dim()) {
      throw DataError("write_embedding_cache: provider returned mismatched dimensions for doc '" +
                      pair->doc_id + "'");
    }
    put_u64(out, query_hash(pair->query));
    put_u32(out, static_cast<std::uint32_t>(pair->doc_id.size()));
    out.write(pair->doc_id.data(), static_cast<std::streamsize>(pair->doc_id.size()));
    put_u32(out, static_cast<std::uint32_t>(q_emb.tokens));
    put_u32(out, static_cast<std::uint32_t>(d_emb.tokens));
    for (float v : q_emb.data) put_f32(out, v);
    for (float v : d_emb.data) put_f32(out, v);
  }
  if (!out) throw DataError("failed writing embedding cache '" + path + "'");
}

CacheReader::CacheReader(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding cache '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError("'" + path + "' is not an embedding cache file");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kVersion) {
    throw DataError("embedding cache '" + path + "' has unsupported version " +
                    std::to_string(version));
  }
  layers_ = static_cast<int>(get_u32(in));
  dim_ = static_cast<int>(get_u32(in));
  const std::uint32_t count = get_u32(in);
  if (!in || layers_ < 1 || dim_ < 1) throw DataError("malformed cache header in '" + path + "'");

  for (std::uint32_t r = 0; r < count; ++r) {
    const std::uint64_t qhash = get_u64(in);
    const std::uint32_t id_len = get_u32(in);
    std::string doc_id(id_len, '\0');
    in.read(doc_id.data(), id_len);
    const int m = static_cast<int>(get_u32(in));
    const int n = static_cast<int>(get_u32(in));
    if (!in || m < 1 || n < 1) {
      throw DataError("truncated cache record " + std::to_string(r) + " in '" + path + "'");
    }
    LayeredEmbeddings q_emb{layers_, dim_, m, {}};
    LayeredEmbeddings d_emb{layers_, dim_, n, {}};
    q_emb.data.resize(static_cast<std::size_t>(layers_) * m * dim_);
    d_emb.data.resize(static_cast<std::size_t>(layers_) * n * dim_);
    for (auto& v : q_emb.data) v = get_f32(in);
    for (auto& v : d_emb.data) v = get_f32(in);
    if (!in) throw DataError("truncated cache record " + std::to_string(r) + " in '" + path + "'");
    records_.emplace(std::make_pair(qhash, std::move(doc_id)),
                     std::make_pair(std::move(q_emb), std::move(d_emb)));
  }
}

std::pair<LayeredEmbeddings, LayeredEmbeddings> CacheReader::embed_pair(
    const corpus::TokenList& query_tokens, const std::string& doc_id,
    const corpus::TokenList&) const {
  if (query_tokens.empty()) throw DataError("embed_pair: zero-length token sequence");
  const std::uint64_t qhash = query_hash(query_tokens);
  auto it = records_.find({qhash, doc_id});
  if (it == records_.end()) {
    char key[32];
    std::snprintf(key, sizeof key, "%016llx", static_cast<unsigned long long>(qhash));
    throw DataError("embedding cache miss for key (query " + std::string(key) + ", doc '" +
                    doc_id + "')");
  }
  return it->second;
}

}  // namespace persrank::embeddings
