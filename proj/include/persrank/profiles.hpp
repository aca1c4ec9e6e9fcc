#ifndef PERSRANK_PROFILES_HPP_
#define PERSRANK_PROFILES_HPP_

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace persrank::profiles {

struct ClickHistory {
  std::string user_id;
  std::vector<std::string> docs;  // clicked doc_ids from the history partition
};

struct UserProfile {
  std::string user_id;
  std::vector<double> p_u;  // length T, sums to 1
  bool cold_start = false;  // empty history, uniform fallback
};

using TopicLookup = std::map<std::string, std::vector<double>>;

// Element-wise mean of the clicked documents' topic distributions. With
// multiset=false repeated doc_ids count once. Empty history yields the
// uniform vector with the cold-start flag set. Unknown doc_ids are an error.
UserProfile build_profile(const ClickHistory& history, const TopicLookup& topic_lookup,
                          int topic_count, bool multiset = false);

struct ScatterPoint {
  std::string user_id;
  double x = 0.0;
  double y = 0.0;
};

struct ScatterResult {
  std::vector<ScatterPoint> points;
  bool degenerate = false;  // zero profile variance
};

// Projects profiles onto their top two principal components. Each
// component's sign is fixed so its largest-magnitude loading is positive.
ScatterResult export_profile_scatter(const std::vector<UserProfile>& profiles);

void write_profiles(const std::vector<UserProfile>& profiles, std::ostream& out);
std::vector<UserProfile> read_profiles(std::istream& in, const std::string& source_name);
void write_scatter_csv(const ScatterResult& scatter, std::ostream& out);

}  // namespace persrank::profiles

#endif  // PERSRANK_PROFILES_HPP_
