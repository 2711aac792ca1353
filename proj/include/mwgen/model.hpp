#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mwgen/autodiff.hpp"
#include "mwgen/corpus.hpp"
#include "mwgen/metaword.hpp"

namespace mwgen {

using ad::Matrix;
using ad::Tensor;

/// Named parameter matrices, iterated in name order.
using ParameterSet = std::map<std::string, Matrix>;

/// Token table of the meta-word embeddings: key-phrase words plus one
/// namespaced token per categorical value ("RL:8", "DA:statement").
class MetaVocab {
 public:
  /// Covers every key and category of the full schema.
  static MetaVocab standard();

  std::size_t size() const { return tokens_.size(); }
  /// Throws SchemaError for unknown tokens.
  int id(const std::string& token) const;
  std::vector<int> key_ids(const VariableSpec& spec) const;
  int value_id(const std::string& key, const std::string& category) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

struct ModelConfig {
  int d = 64;
  AttributeSchema schema = AttributeSchema::full();
};

/// Parameter shapes of the generator for the given sizes.
ParameterSet make_generator_parameters(int d, std::size_t message_vocab,
                                       std::size_t response_vocab, std::size_t meta_vocab);

/// Fills every parameter with U(-scale, scale) drawn from `seed`.
void randomize(ParameterSet& params, std::uint64_t seed, double scale = 0.1);

/// Generator parameters viewed as leaves of one tape.
struct BoundParams {
  Tensor emb_message, emb_response, emb_meta;
  Tensor enc_fwd_W, enc_fwd_U, enc_fwd_b;
  Tensor enc_bwd_W, enc_bwd_U, enc_bwd_b;
  Tensor dec_W, dec_U, dec_b;
  Tensor att_Ws, att_Wh, att_b, att_u;
  Tensor init_W, init_b;
  Tensor gtmn_W, gtmn_b, gtmn_U;
  Tensor out_W, out_b;
  int d = 0;
  std::map<std::string, Tensor> by_name;
};

BoundParams bind(ad::Tape& tape, const ParameterSet& params);

/// Gradients of the bound leaves, keyed by parameter name.
std::map<std::string, Matrix> collect_gradients(const ad::GradientMap& grads,
                                                const BoundParams& bound);

/// Seed-derived independent stream: mixes `seed` with a stream name.
std::uint64_t substream(std::uint64_t seed, std::string_view name);

}  // namespace mwgen
