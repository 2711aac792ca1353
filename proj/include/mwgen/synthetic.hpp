#pragma once

// Synthetic dialogue corpus whose responses are a deterministic template
// filled from the message and a randomly drawn set of response attributes:
//
//   [so do i .]  opener  [rare-word]  copied-words  the...  terminal
//
// The opener and terminal fix the dialogue act, the leading utterance the
// multi-utterance flag, the rarity tier of the optional rare word the
// specificity and the number of copied message words the copy ratio. Repeated "the"
// pads the response to its length, and the terminal always comes last.

#include <cstdint>
#include <string>
#include <vector>

#include "mwgen/corpus.hpp"

namespace mwgen {

struct SyntheticConfig {
  std::size_t pairs = 5000;
  std::uint64_t seed = 1;
  std::size_t message_pool = 30;
  std::size_t min_message_words = 4;
  std::size_t max_message_words = 8;
  std::size_t max_copies = 3;
  std::size_t max_fillers = 8;
  /// Word pool size of each rarity tier, rarest first. A response uses one
  /// tier or none with equal probability, and tiers are used round-robin so
  /// every word of a tier occurs equally often.
  std::vector<std::size_t> rare_pools = {32, 16, 8, 4};
};

/// Deterministic in `config`.
std::vector<RawPair> make_synthetic_corpus(const SyntheticConfig& config);

/// Writes {"message", "response"} lines.
void write_pairs(std::ostream& out, const std::vector<RawPair>& pairs);

}  // namespace mwgen
