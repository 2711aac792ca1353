#include "mwgen/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "mwgen/error.hpp"
#include "mwgen/stopwords_data.hpp"

namespace mwgen {

namespace {

constexpr std::string_view kMarks = ".,!?;:'\"";

bool is_mark(char c) { return kMarks.find(c) != std::string_view::npos; }

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

// Tokens ranked by count, ties broken by first occurrence.
std::vector<std::pair<std::string, std::size_t>> rank_tokens(std::span<const Tokens> docs) {
  std::unordered_map<std::string, std::size_t> position;
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (const Tokens& doc : docs) {
    for (const std::string& tok : doc) {
      auto [it, fresh] = position.try_emplace(tok, ranked.size());
      if (fresh) ranked.emplace_back(tok, 0);
      ++ranked[it->second].second;
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return ranked;
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_mark(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

bool is_punctuation(std::string_view token) {
  return token.size() == 1 && is_mark(token[0]);
}

Vocab::Vocab() {
  append("<pad>", 0);
  append("<unk>", 0);
  append("<s>", 0);
  append("</s>", 0);
}

void Vocab::append(const std::string& token, std::size_t count) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
  counts_.push_back(count);
}

Vocab Vocab::build(std::span<const Tokens> documents, std::size_t max_size) {
  Vocab vocab;
  for (const auto& [tok, count] : rank_tokens(documents)) {
    if (vocab.size() - kReserved >= max_size) break;
    if (vocab.index_.count(tok)) continue;
    vocab.append(tok, count);
  }
  return vocab;
}

Vocab Vocab::from_tokens(std::span<const std::string> tokens, std::span<const std::size_t> counts) {
  if (tokens.size() != counts.size()) throw Error("vocab: token and count lists differ in length");
  if (tokens.size() < static_cast<std::size_t>(kReserved)) throw Error("vocab: missing reserved tokens");
  Vocab vocab;
  for (int i = 0; i < kReserved; ++i) {
    if (tokens[i] != vocab.tokens_[i]) throw Error("vocab: reserved token mismatch at id " + std::to_string(i));
  }
  for (std::size_t i = kReserved; i < tokens.size(); ++i) {
    if (vocab.index_.count(tokens[i])) throw Error("vocab: duplicate token '" + tokens[i] + "'");
    vocab.append(tokens[i], counts[i]);
  }
  return vocab;
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error("vocab: unknown id " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::size_t Vocab::count(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? 0 : counts_[static_cast<std::size_t>(it->second)];
}

TokenIds Vocab::encode(std::span<const std::string> tokens) const {
  TokenIds ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocab::decode(std::span<const int> ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

bool FreqStats::excluded(const std::string& token) const {
  return stopwords.count(token) > 0 || top_k.count(token) > 0;
}

std::size_t FreqStats::doc_count(const std::string& token) const {
  auto it = doc_counts.find(token);
  return it == doc_counts.end() ? 0 : it->second;
}

void FreqStats::refresh_extrema() {
  min_doc_count = max_doc_count = 0;
  bool first = true;
  for (const auto& [tok, n] : doc_counts) {
    if (first || n < min_doc_count) min_doc_count = n;
    if (first || n > max_doc_count) max_doc_count = n;
    first = false;
  }
}

FreqStats build_freq_stats(std::span<const Tokens> responses, std::size_t top_k,
                           std::unordered_set<std::string> stopwords) {
  FreqStats stats;
  stats.total_responses = responses.size();
  stats.stopwords = std::move(stopwords);
  stats.k = top_k;
  for (const Tokens& r : responses) {
    std::unordered_set<std::string> seen(r.begin(), r.end());
    for (const auto& tok : seen) ++stats.doc_counts[tok];
  }
  stats.refresh_extrema();
  const auto ranked = rank_tokens(responses);
  for (std::size_t i = 0; i < ranked.size() && i < top_k; ++i) stats.top_k.insert(ranked[i].first);
  return stats;
}

BuiltCorpus build_vocab(std::span<const RawPair> pairs, const CorpusConfig& config) {
  if (pairs.empty()) throw Error("build_vocab: empty corpus");
  std::vector<Tokens> messages, responses;
  messages.reserve(pairs.size());
  responses.reserve(pairs.size());
  for (const RawPair& p : pairs) {
    messages.push_back(tokenize(p.message));
    responses.push_back(tokenize(p.response));
  }
  BuiltCorpus out;
  out.message_vocab = Vocab::build(messages, config.max_vocab);
  out.response_vocab = Vocab::build(responses, config.max_vocab);
  out.stats = build_freq_stats(responses, config.top_k, config.stopwords);
  return out;
}

const std::unordered_set<std::string>& default_stopwords() {
  static const std::unordered_set<std::string> words = [] {
    std::unordered_set<std::string> out;
    std::istringstream in{std::string(detail::kStopwordData)};
    std::string line;
    while (std::getline(in, line)) {
      line = trim(line);
      if (!line.empty() && line[0] != '#') out.insert(line);
    }
    return out;
  }();
  return words;
}

std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open stopword file " + path.string());
  std::unordered_set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (!line.empty() && line[0] != '#') out.insert(line);
  }
  return out;
}

LoadResult load_dataset(std::istream& in, const LoadOptions& options) {
  LoadResult result;
  std::map<std::string, std::size_t> per_message;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    if (!obj.is_object()) throw ParseError("expected a JSON object", line_no);
    for (const char* field : {"message", "response"}) {
      if (!obj.contains(field) || !obj[field].is_string()) {
        throw ParseError(std::string("missing string field \"") + field + "\"", line_no);
      }
    }
    RawPair pair{obj["message"].get<std::string>(), obj["response"].get<std::string>()};
    const auto mt = tokenize(pair.message);
    const auto rt = tokenize(pair.response);
    if (mt.empty() || rt.empty() || mt.size() > options.max_tokens || rt.size() > options.max_tokens) {
      ++result.dropped;
      continue;
    }
    if (options.max_responses_per_message > 0 &&
        ++per_message[trim(pair.message)] > options.max_responses_per_message) {
      ++result.dropped;
      continue;
    }
    result.pairs.push_back(std::move(pair));
  }
  return result;
}

LoadResult load_dataset(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path.string());
  return load_dataset(in, options);
}

}  // namespace mwgen
