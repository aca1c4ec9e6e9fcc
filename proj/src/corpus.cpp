#include "persrank/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "persrank/errors.hpp"

namespace persrank::corpus {

namespace {

bool is_ascii_punct(unsigned char c) { return std::ispunct(c) != 0; }

// Multi-byte UTF-8 space code points treated as separators: NBSP, the
// en/em-space family U+2000..U+200A, line/paragraph separators, narrow NBSP,
// ideographic space, Ogham space mark.
std::size_t utf8_space_len(std::string_view s, std::size_t i) {
  const auto b = [&](std::size_t k) { return static_cast<unsigned char>(s[i + k]); };
  if (i + 1 < s.size() && b(0) == 0xC2 && b(1) == 0xA0) return 2;
  if (i + 2 < s.size()) {
    if (b(0) == 0xE2 && b(1) == 0x80 && ((b(2) >= 0x80 && b(2) <= 0x8A) || b(2) == 0xA8 || b(2) == 0xA9 || b(2) == 0xAF)) return 3;
    if (b(0) == 0xE3 && b(1) == 0x80 && b(2) == 0x80) return 3;
    if (b(0) == 0xE1 && b(1) == 0x9A && b(2) == 0x80) return 3;
  }
  return 0;
}

std::vector<std::string> split_field(const std::string& field, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(field);
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(sep);
    out += parts[i];
  }
  return out;
}

}  // namespace

TokenList tokenize(std::string_view text, std::size_t max_len) {
  TokenList tokens;
  std::string current;
  auto flush = [&]() {
    if (!current.empty() && tokens.size() < max_len) tokens.push_back(current);
    current.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c < 0x80) {
      if (std::isspace(c)) {
        flush();
      } else if (!is_ascii_punct(c)) {
        current.push_back(static_cast<char>(std::tolower(c)));
      }
      ++i;
      continue;
    }
    if (std::size_t n = utf8_space_len(text, i); n > 0) {
      flush();
      i += n;
    } else {
      current.push_back(text[i]);
      ++i;
    }
  }
  flush();
  return tokens;
}

void DocumentTable::add(Document doc) {
  auto [it, inserted] = index_.emplace(doc.doc_id, docs_.size());
  if (!inserted) throw DataError("duplicate doc_id '" + doc.doc_id + "' in document table");
  docs_.push_back(std::move(doc));
}

const Document* DocumentTable::find(const std::string& doc_id) const {
  auto it = index_.find(doc_id);
  return it == index_.end() ? nullptr : &docs_[it->second];
}

const Document& DocumentTable::at(const std::string& doc_id) const {
  const Document* doc = find(doc_id);
  if (!doc) throw DataError("unknown doc_id '" + doc_id + "'");
  return *doc;
}

DocumentTable read_document_table(std::istream& in, const std::string& source_name,
                                  const TokenizerConfig& cfg) {
  DocumentTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 2 || cols[0].empty()) {
      throw DataError(source_name + ":" + std::to_string(line_no) +
                      ": malformed document row (want doc_id<TAB>text)");
    }
    Document doc{cols[0], tokenize(cols[1], cfg.max_doc_len)};
    if (const Document* existing = table.find(doc.doc_id)) {
      // Exact repeats are deduplicated; conflicting text is an error.
      if (existing->tokens != doc.tokens) {
        throw DataError(source_name + ":" + std::to_string(line_no) + ": doc_id '" +
                        doc.doc_id + "' repeats with different text");
      }
      continue;
    }
    table.add(std::move(doc));
  }
  return table;
}

std::vector<Impression> read_click_log(std::istream& in, const std::string& source_name,
                                       const TokenizerConfig& cfg) {
  std::vector<Impression> impressions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    auto cols = split_tabs(line);
    if (cols.size() != 5 || cols[0].empty()) {
      throw DataError(where + ": malformed log row (want 5 tab-separated columns)");
    }
    Impression imp;
    imp.query.user_id = cols[0];
    try {
      std::size_t used = 0;
      imp.query.timestamp = std::stoll(cols[1], &used);
      if (used != cols[1].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(where + ": bad timestamp '" + cols[1] + "'");
    }
    imp.query.tokens = tokenize(cols[2], cfg.max_query_len);
    imp.candidates = split_field(cols[3], ',');
    if (imp.candidates.empty()) {
      throw DataError(where + ": impression has an empty candidate list");
    }
    for (const auto& clicked : split_field(cols[4], ',')) {
      if (std::find(imp.candidates.begin(), imp.candidates.end(), clicked) ==
          imp.candidates.end()) {
        throw DataError(where + ": clicked doc '" + clicked +
                        "' is not among the impression's candidates (user " +
                        imp.query.user_id + ", t=" + cols[1] + ")");
      }
      imp.clicked.insert(clicked);
    }
    imp.file_index = impressions.size();
    impressions.push_back(std::move(imp));
  }
  return impressions;
}

IngestResult ingest(const std::string& log_path, const std::string& docs_path,
                    const TokenizerConfig& cfg) {
  std::ifstream docs_in(docs_path);
  if (!docs_in) throw DataError("cannot open document table '" + docs_path + "'");
  std::ifstream log_in(log_path);
  if (!log_in) throw DataError("cannot open click log '" + log_path + "'");
  IngestResult result;
  result.documents = read_document_table(docs_in, docs_path, cfg);
  result.impressions = read_click_log(log_in, log_path, cfg);
  std::stable_sort(result.impressions.begin(), result.impressions.end(),
                   [](const Impression& a, const Impression& b) {
                     if (a.query.timestamp != b.query.timestamp)
                       return a.query.timestamp < b.query.timestamp;
                     if (a.query.user_id != b.query.user_id)
                       return a.query.user_id < b.query.user_id;
                     return a.file_index < b.file_index;
                   });
  return result;
}

void write_document_table(const DocumentTable& docs, std::ostream& out) {
  for (const auto& doc : docs.docs()) {
    out << doc.doc_id << '\t' << join(doc.tokens, ' ') << '\n';
  }
}

void write_click_log(const std::vector<Impression>& impressions, std::ostream& out) {
  for (const auto& imp : impressions) {
    std::vector<std::string> clicked(imp.clicked.begin(), imp.clicked.end());
    out << imp.query.user_id << '\t' << imp.query.timestamp << '\t'
        << join(imp.query.tokens, ' ') << '\t' << join(imp.candidates, ',') << '\t'
        << join(clicked, ',') << '\n';
  }
}

std::vector<std::string> SplitCorpus::clicked_history_docs(const std::string& user_id) const {
  std::set<std::string> seen;
  auto it = history.find(user_id);
  if (it != history.end()) {
    for (const auto& imp : it->second) {
      seen.insert(imp.clicked.begin(), imp.clicked.end());
    }
  }
  return {seen.begin(), seen.end()};
}

std::vector<std::string> SplitCorpus::user_ids() const {
  std::vector<std::string> ids;
  ids.reserve(history.size());
  for (const auto& [user, imps] : history) ids.push_back(user);
  return ids;
}

SplitCorpus split(std::vector<Impression> impressions, double history_fraction,
                  const SplitRatios& ratios) {
  if (impressions.empty()) throw DataError("split: no impressions");
  if (!(history_fraction > 0.0 && history_fraction < 1.0)) {
    throw DataError("split: history_fraction must be in (0,1)");
  }
  std::stable_sort(impressions.begin(), impressions.end(),
                   [](const Impression& a, const Impression& b) {
                     if (a.query.timestamp != b.query.timestamp)
                       return a.query.timestamp < b.query.timestamp;
                     if (a.query.user_id != b.query.user_id)
                       return a.query.user_id < b.query.user_id;
                     return a.file_index < b.file_index;
                   });

  const std::int64_t t_min = impressions.front().query.timestamp;
  const std::int64_t t_max = impressions.back().query.timestamp;
  const double cut = static_cast<double>(t_min) +
                     history_fraction * static_cast<double>(t_max - t_min);

  SplitCorpus out;
  std::vector<Impression> rest;
  std::set<std::string> all_users;
  for (auto& imp : impressions) {
    all_users.insert(imp.query.user_id);
    if (static_cast<double>(imp.query.timestamp) <= cut) {
      out.history[imp.query.user_id].push_back(std::move(imp));
    } else {
      rest.push_back(std::move(imp));
    }
  }
  for (const auto& user : all_users) {
    auto it = out.history.find(user);
    if (it == out.history.end()) {
      out.history[user] = {};  // retained but flagged
      out.cold_start_users.push_back(user);
    }
  }

  const std::size_t n = rest.size();
  const int total = ratios.train + ratios.validation + ratios.test;
  if (total <= 0 || ratios.train <= 0 || ratios.validation < 0 || ratios.test < 0) {
    throw DataError("split: bad ratios");
  }
  const std::size_t n_val = n * static_cast<std::size_t>(ratios.validation) /
                            static_cast<std::size_t>(total);
  const std::size_t n_test =
      n * static_cast<std::size_t>(ratios.test) / static_cast<std::size_t>(total);
  const std::size_t n_train = n - n_val - n_test;  // remainder goes to train

  out.train.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.validation.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_train),
                        rest.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), rest.end());
  return out;
}

namespace {

void write_partition(const std::vector<Impression>& imps, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_click_log(imps, out);
}

std::vector<Impression> read_partition(const std::string& path, const TokenizerConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_click_log(in, path, cfg);
}

}  // namespace

void save_split(const SplitCorpus& corpus, const std::string& dir) {
  std::vector<Impression> history_flat;
  for (const auto& [user, imps] : corpus.history) {
    history_flat.insert(history_flat.end(), imps.begin(), imps.end());
  }
  write_partition(history_flat, dir + "/history.tsv");
  write_partition(corpus.train, dir + "/train.tsv");
  write_partition(corpus.validation, dir + "/validation.tsv");
  write_partition(corpus.test, dir + "/test.tsv");
  std::ofstream meta(dir + "/meta.tsv");
  if (!meta) throw DataError("cannot write '" + dir + "/meta.tsv'");
  for (const auto& user : corpus.cold_start_users) meta << "cold_start\t" << user << '\n';
  for (const auto& [user, imps] : corpus.history)
    meta << "user\t" << user << '\t' << imps.size() << '\n';
}

SplitCorpus load_split(const std::string& dir, const TokenizerConfig& cfg) {
  SplitCorpus out;
  for (auto& imp : read_partition(dir + "/history.tsv", cfg)) {
    out.history[imp.query.user_id].push_back(std::move(imp));
  }
  out.train = read_partition(dir + "/train.tsv", cfg);
  out.validation = read_partition(dir + "/validation.tsv", cfg);
  out.test = read_partition(dir + "/test.tsv", cfg);
  std::ifstream meta(dir + "/meta.tsv");
  if (meta) {
    std::string line;
    while (std::getline(meta, line)) {
      auto cols = split_tabs(line);
      if (cols.size() >= 2 && cols[0] == "cold_start") {
        out.cold_start_users.push_back(cols[1]);
        out.history.emplace(cols[1], std::vector<Impression>{});
      } else if (cols.size() >= 2 && cols[0] == "user") {
        out.history.emplace(cols[1], std::vector<Impression>{});
      }
    }
  }
  return out;
}

}  // namespace persrank::corpus
