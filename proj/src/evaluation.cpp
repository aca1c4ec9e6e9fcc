#include "persrank/evaluation.hpp"

#include <cstdio>
#include <ostream>

#include "persrank/errors.hpp"

namespace persrank::evaluation {

double average_precision(const std::vector<std::string>& ranking,
                         const std::set<std::string>& clicked) {
  if (clicked.empty()) throw DataError("average_precision: no clicked documents");
  double hits = 0.0;
  double acc = 0.0;
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (clicked.count(ranking[r])) {
      hits += 1.0;
      acc += hits / static_cast<double>(r + 1);
    }
  }
  return acc / static_cast<double>(clicked.size());
}

double reciprocal_rank(const std::vector<std::string>& ranking,
                       const std::set<std::string>& clicked) {
  if (clicked.empty()) throw DataError("reciprocal_rank: no clicked documents");
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (clicked.count(ranking[r])) return 1.0 / static_cast<double>(r + 1);
  }
  return 0.0;  // clicked doc absent from the ranking
}

int precision_at_1(const std::vector<std::string>& ranking,
                   const std::set<std::string>& clicked) {
  if (ranking.empty()) throw DataError("precision_at_1: empty ranking");
  return clicked.count(ranking.front()) ? 1 : 0;
}

void MetricAccumulator::add(const std::vector<std::string>& ranking,
                            const std::set<std::string>& clicked) {
  if (clicked.empty()) {
    ++excluded_;
    return;
  }
  ap_sum_ += average_precision(ranking, clicked);
  rr_sum_ += reciprocal_rank(ranking, clicked);
  p1_sum_ += precision_at_1(ranking, clicked);
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (clicked.count(ranking[r])) {
      click_rank_sum_ += static_cast<double>(r + 1);
      ++click_count_;
    }
  }
  ++query_count_;
}

MetricReport MetricAccumulator::report() const {
  MetricReport out;
  out.query_count = query_count_;
  out.excluded = excluded_;
  if (query_count_ > 0) {
    out.map = ap_sum_ / static_cast<double>(query_count_);
    out.mrr = rr_sum_ / static_cast<double>(query_count_);
    out.p_at_1 = p1_sum_ / static_cast<double>(query_count_);
  }
  if (click_count_ > 0) {
    out.a_clk = click_rank_sum_ / static_cast<double>(click_count_);
  }
  return out;
}

void write_report_csv(const std::vector<ReportRow>& rows, std::ostream& out) {
  char buf[128];
  out << "model,MAP,MRR,P@1,A.Clk\n";
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f", row.metrics.map, row.metrics.mrr,
                  row.metrics.p_at_1, row.metrics.a_clk);
    out << row.model << ',' << buf << '\n';
  }
}

void write_report_table(const std::vector<ReportRow>& rows, std::ostream& out) {
  std::size_t width = 5;
  for (const auto& row : rows) width = std::max(width, row.model.size());
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %8s  %8s  %7s", static_cast<int>(width),
                "model", "MAP", "MRR", "P@1", "A.Clk", "queries");
  out << buf << '\n';
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8.4f  %8.4f  %8.4f  %7zu",
                  static_cast<int>(width), row.model.c_str(), row.metrics.map, row.metrics.mrr,
                  row.metrics.p_at_1, row.metrics.a_clk, row.metrics.query_count);
    out << buf << '\n';
  }
}

}  // namespace persrank::evaluation
