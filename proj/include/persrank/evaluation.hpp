#ifndef PERSRANK_EVALUATION_HPP_
#define PERSRANK_EVALUATION_HPP_

#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "persrank/corpus.hpp"

namespace persrank::evaluation {

// Ranks are 1-based throughout.

double average_precision(const std::vector<std::string>& ranking,
                         const std::set<std::string>& clicked);
double reciprocal_rank(const std::vector<std::string>& ranking,
                       const std::set<std::string>& clicked);
int precision_at_1(const std::vector<std::string>& ranking,
                   const std::set<std::string>& clicked);

struct MetricReport {
  double map = 0.0;
  double mrr = 0.0;
  double p_at_1 = 0.0;
  double a_clk = 0.0;  // pooled mean rank of all clicks; lower is better
  std::size_t query_count = 0;
  std::size_t excluded = 0;  // impressions with no clicks
};

// Accumulates per-impression metrics; zero-click impressions are excluded
// and counted. Rankings must be permutations of the impression candidates
// (checked by the caller where candidates are known).
class MetricAccumulator {
 public:
  void add(const std::vector<std::string>& ranking, const std::set<std::string>& clicked);
  MetricReport report() const;

 private:
  double ap_sum_ = 0.0;
  double rr_sum_ = 0.0;
  double p1_sum_ = 0.0;
  double click_rank_sum_ = 0.0;
  std::size_t click_count_ = 0;
  std::size_t query_count_ = 0;
  std::size_t excluded_ = 0;
};

struct ReportRow {
  std::string model;
  MetricReport metrics;
};

void write_report_csv(const std::vector<ReportRow>& rows, std::ostream& out);
void write_report_table(const std::vector<ReportRow>& rows, std::ostream& out);

}  // namespace persrank::evaluation

#endif  // PERSRANK_EVALUATION_HPP_
