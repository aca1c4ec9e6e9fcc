#include "persrank/matching.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "persrank/errors.hpp"

namespace persrank::matching {

namespace {

template <typename T>
double cosine_impl(std::span<const T> a, std::span<const T> b, bool* degenerate) {
  if (a.size() != b.size()) throw DataError("cosine: length mismatch");
  if (a.empty()) throw DataError("cosine: empty vectors");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = static_cast<double>(a[i]);
    const double y = static_cast<double>(b[i]);
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c);
}

inline double kernel_value(double m, double mu, double sigma) {
  const double d = m - mu;
  return std::exp(-(d * d) / (2.0 * sigma * sigma));
}

void validate_bank(const KernelBank& bank) {
  if (bank.mus.empty() || bank.mus.size() != bank.sigmas.size()) {
    throw DataError("kernel bank: mus and sigmas must be non-empty and equal length");
  }
  for (double s : bank.sigmas) {
    if (!(s > 0.0)) throw DataError("kernel bank: sigmas must be positive");
  }
}

}  // namespace

KernelBank KernelBank::default_bank() {
  KernelBank bank;
  for (int i = 0; i < 10; ++i) {
    bank.mus.push_back(-0.9 + 0.2 * i);
    bank.sigmas.push_back(0.1);
  }
  bank.mus.push_back(1.0);
  bank.sigmas.push_back(1e-3);
  return bank;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  bool degenerate = false;
  const double c = cosine_impl(a, b, &degenerate);
  if (degenerate) warn("cosine: zero vector, similarity defined as 0");
  return c;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  bool degenerate = false;
  const double c = cosine_impl(a, b, &degenerate);
  if (degenerate) warn("cosine: zero vector, similarity defined as 0");
  return c;
}

InterestFeatures interest_features(std::span<const double> profile,
                                   std::span<const double> doc_topics, const KernelBank& bank) {
  validate_bank(bank);
  const double m = cosine(profile, doc_topics);
  InterestFeatures features;
  features.theta.reserve(bank.size());
  for (std::size_t z = 0; z < bank.size(); ++z) {
    const double k = kernel_value(m, bank.mus[z], bank.sigmas[z]);
    features.theta.push_back(std::log(std::max(k, kLogFloor)));
  }
  return features;
}

std::vector<double> translation_matrix(const embeddings::LayeredEmbeddings& q_emb,
                                       const embeddings::LayeredEmbeddings& d_emb, int layer) {
  if (q_emb.dim != d_emb.dim) throw DataError("translation_matrix: dim mismatch");
  if (layer < 0 || layer >= q_emb.layers || layer >= d_emb.layers) {
    throw DataError("translation_matrix: layer out of range");
  }
  std::vector<double> matrix(static_cast<std::size_t>(q_emb.tokens) *
                             static_cast<std::size_t>(d_emb.tokens));
  bool degenerate = false;
  for (int i = 0; i < q_emb.tokens; ++i) {
    for (int j = 0; j < d_emb.tokens; ++j) {
      matrix[static_cast<std::size_t>(i) * d_emb.tokens + j] =
          cosine_impl(q_emb.vec(layer, i), d_emb.vec(layer, j), &degenerate);
    }
  }
  if (degenerate) warn("translation_matrix: zero-vector token, entries defined as 0");
  return matrix;
}

SemanticFeatures semantic_features(const embeddings::LayeredEmbeddings& q_emb,
                                   const embeddings::LayeredEmbeddings& d_emb,
                                   const KernelBank& bank) {
  validate_bank(bank);
  if (q_emb.layers != d_emb.layers) {
    throw DataError("semantic_features: layer count mismatch between query and document");
  }
  if (q_emb.dim != d_emb.dim) throw DataError("semantic_features: dim mismatch");
  const int L = q_emb.layers;
  const int dim = q_emb.dim;
  const std::size_t Z = bank.size();

  SemanticFeatures features;
  features.phi.assign(static_cast<std::size_t>(L) * Z, 0.0);

  // Scratch reused across the whole pair; the inner loops allocate nothing.
  std::vector<double> kernel_acc(Z);
  std::vector<double> q_norms(static_cast<std::size_t>(q_emb.tokens));
  std::vector<double> d_norms(static_cast<std::size_t>(d_emb.tokens));

  for (int l = 0; l < L; ++l) {
    for (int i = 0; i < q_emb.tokens; ++i) {
      double n = 0.0;
      const auto v = q_emb.vec(l, i);
      for (int k = 0; k < dim; ++k) n += static_cast<double>(v[static_cast<std::size_t>(k)]) * v[static_cast<std::size_t>(k)];
      q_norms[static_cast<std::size_t>(i)] = std::sqrt(n);
    }
    for (int j = 0; j < d_emb.tokens; ++j) {
      double n = 0.0;
      const auto v = d_emb.vec(l, j);
      for (int k = 0; k < dim; ++k) n += static_cast<double>(v[static_cast<std::size_t>(k)]) * v[static_cast<std::size_t>(k)];
      d_norms[static_cast<std::size_t>(j)] = std::sqrt(n);
    }
    double* phi_l = features.phi.data() + static_cast<std::size_t>(l) * Z;
    for (int i = 0; i < q_emb.tokens; ++i) {
      std::fill(kernel_acc.begin(), kernel_acc.end(), 0.0);
      const float* qv = q_emb.data.data() +
                        (static_cast<std::size_t>(l) * q_emb.tokens + i) * dim;
      for (int j = 0; j < d_emb.tokens; ++j) {
        const float* dv = d_emb.data.data() +
                          (static_cast<std::size_t>(l) * d_emb.tokens + j) * dim;
        double dot = 0.0;
        for (int k = 0; k < dim; ++k) dot += static_cast<double>(qv[k]) * dv[k];
        double sim = 0.0;
        const double denom = q_norms[static_cast<std::size_t>(i)] * d_norms[static_cast<std::size_t>(j)];
        if (denom > 0.0) {
          sim = dot / denom;
          sim = sim > 1.0 ? 1.0 : (sim < -1.0 ? -1.0 : sim);
        }
        for (std::size_t z = 0; z < Z; ++z) {
          kernel_acc[z] += kernel_value(sim, bank.mus[z], bank.sigmas[z]);
        }
      }
      for (std::size_t z = 0; z < Z; ++z) {
        phi_l[z] += std::log(std::max(kernel_acc[z], kLogFloor));
      }
    }
  }
  return features;
}

HeatmapTables export_kernel_heatmaps(std::span<const double> profile,
                                     const corpus::TokenList& query_tokens,
                                     const std::vector<HeatmapDoc>& docs,
                                     const embeddings::EmbeddingProvider& provider,
                                     const KernelBank& bank) {
  validate_bank(bank);
  if (docs.empty()) throw DataError("export_kernel_heatmaps: no documents");
  HeatmapTables tables;
  const int L = provider.layer_count();
  const std::size_t Z = bank.size();
  std::vector<double> phi_mean(static_cast<std::size_t>(L) * Z, 0.0);

  for (const auto& doc : docs) {
    const auto theta = interest_features(profile, doc.topic_dist, bank);
    for (std::size_t z = 0; z < Z; ++z) {
      tables.interest.push_back({doc.doc_id, bank.mus[z], theta.theta[z]});
    }
    auto [q_emb, d_emb] = provider.embed_pair(query_tokens, doc.doc_id, doc.tokens);
    const auto phi = semantic_features(q_emb, d_emb, bank);
    for (std::size_t i = 0; i < phi.phi.size(); ++i) phi_mean[i] += phi.phi[i];
  }
  for (double& v : phi_mean) v /= static_cast<double>(docs.size());
  for (int l = 0; l < L; ++l) {
    for (std::size_t z = 0; z < Z; ++z) {
      tables.semantic.push_back({l + 1, bank.mus[z], phi_mean[static_cast<std::size_t>(l) * Z + z]});
    }
  }
  return tables;
}

void write_interest_heatmap_csv(const HeatmapTables& tables, std::ostream& out) {
  char buf[64];
  out << "doc_id,kernel_mu,value\n";
  for (const auto& row : tables.interest) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g", row.mu, row.value);
    out << row.doc_id << ',' << buf << '\n';
  }
}

void write_semantic_heatmap_csv(const HeatmapTables& tables, std::ostream& out) {
  char buf[64];
  out << "layer,kernel_mu,value\n";
  for (const auto& row : tables.semantic) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g", row.mu, row.value);
    out << row.layer << ',' << buf << '\n';
  }
}

}  // namespace persrank::matching
