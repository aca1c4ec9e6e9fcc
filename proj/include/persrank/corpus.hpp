#ifndef PERSRANK_CORPUS_HPP_
#define PERSRANK_CORPUS_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace persrank::corpus {

using TokenList = std::vector<std::string>;

struct TokenizerConfig {
  std::size_t max_query_len = 10;
  std::size_t max_doc_len = 500;
};

// Lowercases, splits on whitespace (ASCII plus common Unicode space code
// points), strips ASCII punctuation from each token, drops tokens that end up
// empty, and keeps the first max_len tokens.
TokenList tokenize(std::string_view text, std::size_t max_len);

struct Document {
  std::string doc_id;
  TokenList tokens;
};

class DocumentTable {
 public:
  void add(Document doc);  // throws DataError on duplicate doc_id
  const Document* find(const std::string& doc_id) const;
  const Document& at(const std::string& doc_id) const;  // throws DataError
  const std::vector<Document>& docs() const { return docs_; }
  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Query {
  TokenList tokens;
  std::string user_id;
  std::int64_t timestamp = 0;
};

struct Impression {
  Query query;
  std::vector<std::string> candidates;  // ordered as shown to the user
  std::set<std::string> clicked;        // subset of candidates
  std::size_t file_index = 0;           // original row order, used for ties

  bool has_click() const { return !clicked.empty(); }
  bool has_unclicked() const { return clicked.size() < candidates.size(); }
};

struct IngestResult {
  DocumentTable documents;
  std::vector<Impression> impressions;
};

// Click-log TSV columns:
//   user_id <TAB> timestamp <TAB> query_text <TAB> cand1,cand2,... <TAB> clicked1,...
// Document table TSV columns: doc_id <TAB> document_text
DocumentTable read_document_table(std::istream& in, const std::string& source_name,
                                  const TokenizerConfig& cfg = {});
std::vector<Impression> read_click_log(std::istream& in, const std::string& source_name,
                                       const TokenizerConfig& cfg = {});

IngestResult ingest(const std::string& log_path, const std::string& docs_path,
                    const TokenizerConfig& cfg = {});

void write_document_table(const DocumentTable& docs, std::ostream& out);
void write_click_log(const std::vector<Impression>& impressions, std::ostream& out);

struct SplitRatios {
  int train = 6;
  int validation = 1;
  int test = 1;
};

struct SplitCorpus {
  std::map<std::string, std::vector<Impression>> history;  // per user, time order
  std::vector<Impression> train;
  std::vector<Impression> validation;
  std::vector<Impression> test;
  std::vector<std::string> cold_start_users;  // users with an empty history

  // Distinct doc_ids clicked in the user's history partition.
  std::vector<std::string> clicked_history_docs(const std::string& user_id) const;
  std::vector<std::string> user_ids() const;
};

// History cut at earliest_timestamp + history_fraction * (span of all
// timestamps); each user's impressions at or before the cut become that
// user's history. The rest are ordered by (timestamp, user_id, file order)
// and sliced train:validation:test with floor counts, remainder to train.
SplitCorpus split(std::vector<Impression> impressions, double history_fraction = 0.38,
                  const SplitRatios& ratios = {});

void save_split(const SplitCorpus& corpus, const std::string& dir);
SplitCorpus load_split(const std::string& dir, const TokenizerConfig& cfg = {});

}  // namespace persrank::corpus

#endif  // PERSRANK_CORPUS_HPP_
