#include "mwgen/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <random>

#include "json.hpp"
#include "mwgen/error.hpp"

namespace mwgen {

namespace {

// Pronounceable non-stopword tokens: consonant-vowel syllable pairs.
std::vector<std::string> pseudo_words(std::size_t n) {
  static const std::string consonants = "bcdfgklmnprstvz";
  static const std::string vowels = "aeiou";
  const auto& stop = default_stopwords();
  std::vector<std::string> words;
  const std::size_t syllables = consonants.size() * vowels.size();
  for (std::size_t k = 0; words.size() < n; ++k) {
    std::string w;
    std::size_t v = k;
    do {
      const std::size_t s = v % syllables;
      w += consonants[s / vowels.size()];
      w += vowels[s % vowels.size()];
      v /= syllables;
    } while (v > 0);
    if (w.size() < 4) w += "n";
    if (!stop.count(w)) words.push_back(w);
  }
  return words;
}

constexpr const char* kFiller = "the";

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace

std::vector<RawPair> make_synthetic_corpus(const SyntheticConfig& config) {
  if (config.min_message_words < 1 || config.min_message_words > config.max_message_words) {
    throw Error("synthetic: bad message length range");
  }
  if (config.max_message_words > config.message_pool) {
    throw Error("synthetic: message pool smaller than the longest message");
  }

  std::size_t total = config.message_pool;
  for (std::size_t n : config.rare_pools) total += n;
  const std::vector<std::string> words = pseudo_words(total);
  const std::vector<std::string> message_words(words.begin(),
                                               words.begin() + static_cast<std::ptrdiff_t>(config.message_pool));
  std::vector<std::vector<std::string>> tiers;
  std::size_t offset = config.message_pool;
  for (std::size_t n : config.rare_pools) {
    tiers.emplace_back(words.begin() + static_cast<std::ptrdiff_t>(offset),
                       words.begin() + static_cast<std::ptrdiff_t>(offset + n));
    offset += n;
  }
  std::vector<std::size_t> next(tiers.size(), 0);

  std::mt19937_64 rng(config.seed);
  auto uniform = [&rng](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  std::vector<std::size_t> pool(config.message_pool);
  std::iota(pool.begin(), pool.end(), 0);

  std::vector<RawPair> pairs;
  pairs.reserve(config.pairs);
  for (std::size_t k = 0; k < config.pairs; ++k) {
    const std::size_t length = uniform(config.min_message_words, config.max_message_words);
    for (std::size_t j = 0; j < length; ++j) std::swap(pool[j], pool[uniform(j, pool.size() - 1)]);
    std::vector<std::string> message;
    for (std::size_t j = 0; j < length; ++j) message.push_back(message_words[pool[j]]);

    const std::size_t act = uniform(0, 2);
    const std::size_t copies = std::min(uniform(0, config.max_copies), length);
    const std::size_t tier = uniform(0, tiers.size());
    const bool multi = uniform(0, 1) == 1;
    std::size_t fill = uniform(0, config.max_fillers);

    static const char* openers[] = {"what", "is", "i"};
    std::vector<std::string> response;
    if (multi) response = {"so", "do", "i", "."};
    const std::size_t start = response.size();
    response.push_back(openers[act]);
    if (tier > 0) {
      auto& used = next[tier - 1];
      const auto& pool_words = tiers[tier - 1];
      response.push_back(pool_words[used++ % pool_words.size()]);
    }
    for (std::size_t j = 0; j < copies; ++j) response.push_back(message[j]);
    const std::size_t body = response.size() - start;
    fill = std::max(fill, body >= 3 ? 0 : 3 - body);
    response.insert(response.end(), fill, kFiller);
    response.push_back(act == 2 ? "." : "?");
    pairs.push_back({join(message), join(response)});
  }
  return pairs;
}

void write_pairs(std::ostream& out, const std::vector<RawPair>& pairs) {
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["message"] = p.message;
    j["response"] = p.response;
    out << j.dump() << '\n';
  }
}

}  // namespace mwgen
