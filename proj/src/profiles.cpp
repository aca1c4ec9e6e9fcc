#include "persrank/profiles.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "persrank/errors.hpp"

namespace persrank::profiles {

UserProfile build_profile(const ClickHistory& history, const TopicLookup& topic_lookup,
                          int topic_count, bool multiset) {
  if (topic_count < 1) throw DataError("build_profile: topic_count must be positive");
  UserProfile profile;
  profile.user_id = history.user_id;

  std::vector<std::string> docs = history.docs;
  if (!multiset) {
    std::set<std::string> unique(docs.begin(), docs.end());
    docs.assign(unique.begin(), unique.end());
  }
  if (docs.empty()) {
    profile.p_u.assign(static_cast<std::size_t>(topic_count), 1.0 / topic_count);
    profile.cold_start = true;
    return profile;
  }

  profile.p_u.assign(static_cast<std::size_t>(topic_count), 0.0);
  for (const auto& doc_id : docs) {
    auto it = topic_lookup.find(doc_id);
    if (it == topic_lookup.end()) {
      throw DataError("build_profile: doc_id '" + doc_id + "' has no topic distribution");
    }
    if (it->second.size() != profile.p_u.size()) {
      throw DataError("build_profile: topic vector for '" + doc_id + "' has wrong length");
    }
    for (std::size_t k = 0; k < profile.p_u.size(); ++k) profile.p_u[k] += it->second[k];
  }
  const double inv = 1.0 / static_cast<double>(docs.size());
  for (double& v : profile.p_u) v *= inv;
  return profile;
}

ScatterResult export_profile_scatter(const std::vector<UserProfile>& profiles) {
  if (profiles.size() < 2) throw DataError("export_profile_scatter: need at least 2 profiles");
  const std::size_t n = profiles.size();
  const std::size_t t = profiles.front().p_u.size();
  if (t < 2) throw DataError("export_profile_scatter: need T >= 2");
  for (const auto& p : profiles) {
    if (p.p_u.size() != t) throw DataError("export_profile_scatter: inconsistent profile lengths");
  }

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = profiles[i].p_u[j];
    }
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;

  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw NumericError("export_profile_scatter: eigen-decomposition failed");
  }

  ScatterResult result;
  const auto& values = solver.eigenvalues();  // ascending
  if (values(values.size() - 1) <= 1e-12) {
    result.degenerate = true;
    warn("export_profile_scatter: all profiles identical, projection is degenerate");
  }

  Eigen::VectorXd pc1 = solver.eigenvectors().col(static_cast<Eigen::Index>(t) - 1);
  Eigen::VectorXd pc2 = solver.eigenvectors().col(static_cast<Eigen::Index>(t) - 2);
  for (Eigen::VectorXd* pc : {&pc1, &pc2}) {
    Eigen::Index at = 0;
    pc->cwiseAbs().maxCoeff(&at);
    if ((*pc)(at) < 0.0) *pc = -*pc;
  }

  result.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = x.row(static_cast<Eigen::Index>(i));
    ScatterPoint point{profiles[i].user_id, row.dot(pc1), row.dot(pc2)};
    if (result.degenerate) point = {profiles[i].user_id, 0.0, 0.0};
    result.points.push_back(std::move(point));
  }
  return result;
}

void write_profiles(const std::vector<UserProfile>& profiles, std::ostream& out) {
  char buf[64];
  for (const auto& p : profiles) {
    out << p.user_id;
    for (double v : p.p_u) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << '\t' << buf;
    }
    out << '\n';
  }
}

std::vector<UserProfile> read_profiles(std::istream& in, const std::string& source_name) {
  std::vector<UserProfile> profiles;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    UserProfile p;
    row >> p.user_id;
    double v = 0.0;
    while (row >> v) p.p_u.push_back(v);
    if (p.user_id.empty() || p.p_u.empty()) {
      throw DataError(source_name + ":" + std::to_string(line_no) + ": malformed profile row");
    }
    profiles.push_back(std::move(p));
  }
  return profiles;
}

void write_scatter_csv(const ScatterResult& scatter, std::ostream& out) {
  char buf[64];
  out << "user_id,x,y\n";
  for (const auto& p : scatter.points) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g", p.x, p.y);
    out << p.user_id << ',' << buf << '\n';
  }
}

}  // namespace persrank::profiles
