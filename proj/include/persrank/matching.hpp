#ifndef PERSRANK_MATCHING_HPP_
#define PERSRANK_MATCHING_HPP_

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "persrank/embeddings.hpp"

namespace persrank::matching {

// Gaussian kernel bank shared by the interest and semantic matching paths.
struct KernelBank {
  std::vector<double> mus;
  std::vector<double> sigmas;

  // 11 kernels: mu from -0.9 to 0.9 step 0.2 with sigma 0.1, plus an
  // exact-match kernel at mu = 1.0 with sigma 1e-3.
  static KernelBank default_bank();
  std::size_t size() const { return mus.size(); }
};

// Kernel outputs are floored at this value before the log.
inline constexpr double kLogFloor = 1e-10;

// dot(a,b) / (|a||b|); zero vectors yield 0 with a warning, never NaN.
double cosine(std::span<const double> a, std::span<const double> b);
double cosine(std::span<const float> a, std::span<const float> b);

struct InterestFeatures {
  std::vector<double> theta;  // length Z, all entries in [log(floor), 0]
};

InterestFeatures interest_features(std::span<const double> profile,
                                   std::span<const double> doc_topics, const KernelBank& bank);

// Pairwise cosine matrix between query and doc token vectors of one layer,
// row-major m x n.
std::vector<double> translation_matrix(const embeddings::LayeredEmbeddings& q_emb,
                                       const embeddings::LayeredEmbeddings& d_emb, int layer);

struct SemanticFeatures {
  std::vector<double> phi;  // length L * Z, layer-major, shallow first
};

SemanticFeatures semantic_features(const embeddings::LayeredEmbeddings& q_emb,
                                   const embeddings::LayeredEmbeddings& d_emb,
                                   const KernelBank& bank);

struct InterestHeatmapRow {
  std::string doc_id;
  double mu = 0.0;
  double value = 0.0;  // theta_z
};

struct SemanticHeatmapRow {
  int layer = 0;  // 1-based, shallow first
  double mu = 0.0;
  double value = 0.0;  // phi^l_z averaged over the docs
};

struct HeatmapTables {
  std::vector<InterestHeatmapRow> interest;
  std::vector<SemanticHeatmapRow> semantic;
};

struct HeatmapDoc {
  std::string doc_id;
  corpus::TokenList tokens;
  std::vector<double> topic_dist;
};

HeatmapTables export_kernel_heatmaps(std::span<const double> profile,
                                     const corpus::TokenList& query_tokens,
                                     const std::vector<HeatmapDoc>& docs,
                                     const embeddings::EmbeddingProvider& provider,
                                     const KernelBank& bank);

void write_interest_heatmap_csv(const HeatmapTables& tables, std::ostream& out);
void write_semantic_heatmap_csv(const HeatmapTables& tables, std::ostream& out);

}  // namespace persrank::matching

#endif  // PERSRANK_MATCHING_HPP_
