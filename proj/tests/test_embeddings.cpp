#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>

#include "persrank/embeddings.hpp"
#include "persrank/errors.hpp"

using namespace persrank;
using namespace persrank::embeddings;

namespace {

SyntheticProviderConfig cfg(int layers, int dim, std::uint64_t seed, int window) {
  SyntheticProviderConfig c;
  c.layers = layers;
  c.dim = dim;
  c.seed = seed;
  c.window = window;
  return c;
}

double norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

bool same_vec(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("synthetic provider is deterministic and shape-consistent") {
  SyntheticProvider provider(cfg(4, 16, 7, 2));
  const corpus::TokenList query = {"suzuki", "bikes"};
  const corpus::TokenList doc = {"suzuki", "motorcycles", "for", "sale"};
  const auto [q1, d1] = provider.embed_pair(query, "d1", doc);
  const auto [q2, d2] = provider.embed_pair(query, "d1", doc);
  CHECK(q1.data == q2.data);
  CHECK(d1.data == d2.data);
  CHECK(q1.layers == 4);
  CHECK(q1.dim == 16);
  CHECK(q1.tokens == 2);
  CHECK(d1.tokens == 4);

  SyntheticProvider other(cfg(4, 16, 8, 2));
  const auto [q3, d3] = other.embed_pair(query, "d1", doc);
  CHECK_FALSE(q1.data == q3.data);
}

TEST_CASE("every synthetic vector is unit norm") {
  SyntheticProvider provider(cfg(5, 24, 3, 2));
  const auto emb = provider.embed_sequence({"one", "two", "three", "one", "two"});
  for (int l = 0; l < emb.layers; ++l) {
    for (int t = 0; t < emb.tokens; ++t) {
      CHECK(norm(emb.vec(l, t)) == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("window 0 vectors depend only on the token string") {
  SyntheticProvider provider(cfg(3, 16, 9, 0));
  const auto a = provider.embed_sequence({"shared", "alpha", "beta"});
  const auto b = provider.embed_sequence({"gamma", "shared"});
  for (int l = 0; l < 3; ++l) {
    CHECK(same_vec(a.vec(l, 0), b.vec(l, 1)));
  }
}

TEST_CASE("window 2 contextualizes the same token differently from layer 2 on") {
  SyntheticProvider provider(cfg(3, 16, 9, 2));
  const auto a = provider.embed_sequence({"shared", "alpha", "beta"});
  const auto b = provider.embed_sequence({"gamma", "shared", "delta"});
  // First layer is context-free.
  CHECK(same_vec(a.vec(0, 0), b.vec(0, 1)));
  // Later layers mix distinct neighbors.
  CHECK_FALSE(same_vec(a.vec(1, 0), b.vec(1, 1)));
  CHECK_FALSE(same_vec(a.vec(2, 0), b.vec(2, 1)));
}

TEST_CASE("zero-length sequences are rejected") {
  SyntheticProvider provider(cfg(2, 8, 1, 1));
  CHECK_THROWS_AS(provider.embed_pair({}, "d", {"a"}), DataError);
  CHECK_THROWS_AS(provider.embed_pair({"a"}, "d", {}), DataError);
}

TEST_CASE("cache round trip is bit exact and covers exactly the written pairs") {
  SyntheticProvider provider(cfg(3, 12, 5, 2));
  const std::vector<CachePair> pairs = {
      {{"query", "one"}, "d1", {"alpha", "beta", "gamma"}},
      {{"query", "one"}, "d2", {"delta"}},
      {{"query", "two"}, "d1", {"alpha", "beta", "gamma"}},
  };
  const auto path = std::filesystem::temp_directory_path() / "persrank_cache_test.bin";
  write_embedding_cache(pairs, provider, path.string());

  CacheReader reader(path.string());
  CHECK(reader.layer_count() == 3);
  CHECK(reader.dim() == 12);
  CHECK(reader.pair_count() == 3);
  for (const auto& pair : pairs) {
    const auto [q_direct, d_direct] = provider.embed_pair(pair.query, pair.doc_id, pair.doc_tokens);
    const auto [q_cached, d_cached] = reader.embed_pair(pair.query, pair.doc_id, pair.doc_tokens);
    CHECK(q_direct.data == q_cached.data);
    CHECK(d_direct.data == d_cached.data);
  }
  CHECK_THROWS_WITH_AS(reader.embed_pair({"query", "one"}, "d3", {"x"}),
                       doctest::Contains("d3"), DataError);
  CHECK_THROWS_AS(reader.embed_pair({"unknown"}, "d1", {"x"}), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("duplicate pairs are stored once") {
  SyntheticProvider provider(cfg(2, 8, 5, 1));
  const std::vector<CachePair> pairs = {
      {{"q"}, "d1", {"a", "b"}},
      {{"q"}, "d1", {"a", "b"}},
  };
  const auto path = std::filesystem::temp_directory_path() / "persrank_cache_dup.bin";
  write_embedding_cache(pairs, provider, path.string());
  CacheReader reader(path.string());
  CHECK(reader.pair_count() == 1);
  std::filesystem::remove(path);
}

TEST_CASE("cache file size matches the documented layout") {
  const int layers = 12;
  const int dim = 64;
  const int m = 2;
  const int n = 3;
  SyntheticProvider provider(cfg(layers, dim, 2, 2));
  std::vector<CachePair> pairs;
  for (int i = 0; i < 100; ++i) {
    pairs.push_back({{"q", "n" + std::to_string(i)}, "doc" + std::to_string(i),
                     {"t1", "t2", "tail" + std::to_string(i)}});
  }
  const auto path = std::filesystem::temp_directory_path() / "persrank_cache_size.bin";
  write_embedding_cache(pairs, provider, path.string());

  std::uintmax_t expected = 8 + 4 + 4 + 4 + 4;  // magic, version, L, dim, count
  for (const auto& pair : pairs) {
    expected += 8 + 4 + pair.doc_id.size() + 4 + 4;  // record header
    expected += static_cast<std::uintmax_t>(m + n) * layers * dim * 4;
  }
  CHECK(std::filesystem::file_size(path) == expected);
  std::filesystem::remove(path);
}

TEST_CASE("cache reader rejects foreign files") {
  const auto path = std::filesystem::temp_directory_path() / "persrank_cache_bad.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "this is not a cache";
  }
  CHECK_THROWS_AS(CacheReader(path.string()), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("query_hash separates token boundaries") {
  CHECK(query_hash({"ab", "c"}) != query_hash({"a", "bc"}));
  CHECK(query_hash({"a", "b"}) == query_hash({"a", "b"}));
  CHECK(query_hash({}) != query_hash({""}));
}
