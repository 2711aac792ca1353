#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace mwgen {

using Tokens = std::vector<std::string>;
using TokenIds = std::vector<int>;

/// Lowercases and splits on whitespace; the marks . , ! ? ; : ' " become
/// standalone tokens.
Tokens tokenize(std::string_view text);

bool is_punctuation(std::string_view token);

/// Token <-> id bijection with frequency counts and four reserved ids.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kReserved = 4;

  Vocab();

  /// Keeps the `max_size` most frequent tokens (ties by first occurrence).
  /// `max_size` counts ordinary tokens only; reserved ids come on top.
  static Vocab build(std::span<const Tokens> documents, std::size_t max_size);

  /// Rebuilds a vocab from its serialized token list (reserved entries first).
  static Vocab from_tokens(std::span<const std::string> tokens,
                           std::span<const std::size_t> counts);

  /// Id of `token`, or kUnk when out of vocabulary.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  /// Throws mwgen::Error for ids outside the vocabulary.
  const std::string& token(int id) const;
  std::size_t count(std::string_view token) const;

  TokenIds encode(std::span<const std::string> tokens) const;
  Tokens decode(std::span<const int> ids) const;

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::size_t>& counts() const { return counts_; }

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.tokens_ == b.tokens_ && a.counts_ == b.counts_;
  }

 private:
  void append(const std::string& token, std::size_t count);

  std::unordered_map<std::string, int> index_;
  std::vector<std::string> tokens_;
  std::vector<std::size_t> counts_;
};

/// Response-side corpus statistics used by copy-ratio and specificity.
struct FreqStats {
  /// |C|: number of responses.
  std::size_t total_responses = 0;
  /// Number of responses containing each token.
  std::unordered_map<std::string, std::size_t> doc_counts;
  std::unordered_set<std::string> stopwords;
  /// The K most frequent response tokens (by occurrences).
  std::unordered_set<std::string> top_k;
  std::size_t k = 1000;

  /// Smallest and largest document count over the response vocabulary;
  /// they bound the inverse word frequency range.
  std::size_t min_doc_count = 0;
  std::size_t max_doc_count = 0;

  bool excluded(const std::string& token) const;
  std::size_t doc_count(const std::string& token) const;
  /// Recomputes min_doc_count / max_doc_count from doc_counts.
  void refresh_extrema();
};

struct RawPair {
  std::string message;
  std::string response;
};

struct CorpusConfig {
  /// Ordinary tokens kept per vocabulary.
  std::size_t max_vocab = 30000;
  /// Size of the frequent-word exclusion list for copy ratio.
  std::size_t top_k = 1000;
  std::unordered_set<std::string> stopwords;
};

struct BuiltCorpus {
  Vocab message_vocab;
  Vocab response_vocab;
  FreqStats stats;
};

/// Builds message and response vocabularies plus response statistics.
BuiltCorpus build_vocab(std::span<const RawPair> pairs, const CorpusConfig& config);

/// Frequency statistics over tokenized responses alone.
FreqStats build_freq_stats(std::span<const Tokens> responses, std::size_t top_k,
                           std::unordered_set<std::string> stopwords);

/// Builtin English stopword list (same content as data/stopwords_en.txt).
const std::unordered_set<std::string>& default_stopwords();
/// One token per line; blank lines and lines starting with '#' ignored.
std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path);

struct LoadOptions {
  /// Pairs with a message or response longer than this many tokens are dropped.
  std::size_t max_tokens = 30;
  /// Keep at most this many responses per distinct message; 0 disables.
  std::size_t max_responses_per_message = 0;
};

struct LoadResult {
  std::vector<RawPair> pairs;
  std::size_t dropped = 0;
};

/// Reads {"message": ..., "response": ...} objects, one per line.
LoadResult load_dataset(const std::filesystem::path& path, const LoadOptions& options = {});
LoadResult load_dataset(std::istream& in, const LoadOptions& options = {});

}  // namespace mwgen
