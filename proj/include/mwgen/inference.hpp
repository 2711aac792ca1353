#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mwgen/generator.hpp"
#include "mwgen/gtmn.hpp"
#include "mwgen/predictor.hpp"
#include "mwgen/seq2seq.hpp"

namespace mwgen {

inline constexpr int kDefaultMaxDecode = kMaxLength + 1;

/// Next-token log-probabilities for a set of live hypotheses.
class BeamScorer {
 public:
  virtual ~BeamScorer() = default;
  virtual Eigen::Index vocab_size() const = 0;
  /// Starts a fresh search with a single empty hypothesis.
  virtual void reset() = 0;
  /// Column j of the result scores the token after hypothesis j, which
  /// extends hypothesis parents[j] of the previous call (0 on the first call)
  /// with last_tokens[j].
  virtual Matrix step(std::span<const int> parents, std::span<const int> last_tokens) = 0;
};

struct BeamOptions {
  int beam = 5;
  int max_length = kDefaultMaxDecode;
  /// Token ending a hypothesis; negative disables it.
  int eos = Vocab::kEos;
  int bos = Vocab::kBos;
  /// Tokens never proposed.
  std::vector<int> banned = {Vocab::kPad, Vocab::kBos};
  /// Rank by log prob / length instead of log prob.
  bool length_normalize = false;
};

struct Hypothesis {
  /// Generated tokens, EOS included when the hypothesis ended with it.
  TokenIds tokens;
  double log_prob = 0.0;
  /// Ended with EOS rather than at the length cap.
  bool finished = false;
};

/// Shrinking beam search: hypotheses that emit EOS leave the beam, and the
/// search stops when no live hypothesis remains or at max_length tokens.
/// Returns at most `beam` hypotheses, best first.
std::vector<Hypothesis> beam_search(BeamScorer& scorer, const BeamOptions& options);

/// Repeated argmax.
Hypothesis greedy_search(BeamScorer& scorer, const BeamOptions& options);

/// Scores hypotheses of one message under one meta-word with the generator.
/// Every hypothesis owns its decoder state and memory panel; a step gathers
/// the parent columns into fresh tensors before updating them.
class GeneratorScorer : public BeamScorer {
 public:
  GeneratorScorer(const Generator& model, const TokenIds& message, const MetaWord& metaword);

  Eigen::Index vocab_size() const override;
  void reset() override;
  Matrix step(std::span<const int> parents, std::span<const int> last_tokens) override;

  /// State after the last step, one column per hypothesis.
  const Panel& panel() const { return panel_; }
  const Matrix& read_weights() const { return read_weights_; }
  const Matrix& context_weights() const { return context_weights_; }
  const Matrix& decoder_state() const { return state_.value(); }

 private:
  const Generator& model_;
  TokenIds message_;
  MetaWord metaword_;
  std::unique_ptr<ad::Tape> tape_;
  BoundParams params_;
  EncoderStates enc_;
  Tensor state_;
  Panel panel_;
  std::vector<Tensor> states_;
  std::vector<Panel> panels_;
  Matrix read_weights_;
  Matrix context_weights_;
};

/// Encodes `message` with the generator's message vocabulary; throws on an
/// empty message.
TokenIds encode_message(const Generator& model, const std::string& message);

std::vector<Hypothesis> decode(const Generator& model, const std::string& message,
                               const MetaWord& metaword, const BeamOptions& options = {});

/// Response text without EOS.
std::string detokenize(const Generator& model, const TokenIds& tokens);

struct Generation {
  std::string message;
  MetaWord metaword;
  std::string response;
  double log_prob = 0.0;
};

struct GenerateOptions {
  int samples = 1;
  BeamOptions beam;
  /// Variables fixed for every sample; the rest come from the predictor.
  std::optional<MetaWord> override_metaword;
};

/// `samples` meta-words (sampled and merged with the override) and the best
/// beam response for each.
std::vector<Generation> generate(const Generator& model, const Predictor* predictor,
                                 const std::string& message, const GenerateOptions& options,
                                 std::mt19937_64& rng);

void write_generation(std::ostream& out, const Generation& g);

struct TraceStep {
  int step = 0;
  std::string token;
  /// ||v_t - g|| per cell.
  ad::Vector distances;
  /// Difference-read attention per cell.
  ad::Vector weights;
};

/// Greedy decode recording the memory panel after every step.
std::vector<TraceStep> trace_decode(const Generator& model, const std::string& message,
                                    const MetaWord& metaword,
                                    int max_length = kDefaultMaxDecode);

/// step,token,dist_<KEY>...,attn_<KEY>...
void write_trace_csv(std::ostream& out, const AttributeSchema& schema,
                     std::span<const TraceStep> trace);

}  // namespace mwgen
