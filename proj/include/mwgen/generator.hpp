#pragma once

#include <span>
#include <vector>

#include "mwgen/corpus.hpp"
#include "mwgen/metaword.hpp"
#include "mwgen/model.hpp"

namespace mwgen {

/// A trained or freshly initialized response generator with everything
/// needed to encode text and rebuild meta-word features.
struct Generator {
  ModelConfig config;
  Vocab message_vocab;
  Vocab response_vocab;
  FreqStats stats;
  MetaVocab meta = MetaVocab::standard();
  ParameterSet params;
};

/// Builds a generator with parameters drawn from `seed`.
Generator make_generator(const ModelConfig& config, Vocab message_vocab, Vocab response_vocab,
                         FreqStats stats, std::uint64_t seed, double init_scale = 0.1);

/// A (message, response, meta-word) triple in text form.
struct AnnotatedPair {
  std::string message;
  std::string response;
  MetaWord metaword;
};

/// Keeps the variables of `metaword` that `schema` declares, in schema order.
MetaWord project_metaword(const MetaWord& metaword, const AttributeSchema& schema);

/// One encoded element of the dataset.
struct TrainingExample {
  TokenIds message;
  MetaWord metaword;
  /// Response ids without BOS/EOS.
  TokenIds response;
  /// prefix_features[i][t - 1] = F_i(y_1..t) for prefix-supervised schema
  /// variable i; empty for the others.
  std::vector<std::vector<MetaWordVariable>> prefix_features;
};

TrainingExample make_example(const Generator& model, const AnnotatedPair& pair);
std::vector<TrainingExample> make_examples(const Generator& model,
                                           std::span<const AnnotatedPair> pairs);

struct LossTerms {
  /// Batch-mean negative log likelihood, 1 x 1.
  Tensor nll;
  /// Batch-mean state update loss, 1 x 1 (invalid when not computed).
  Tensor state_update;
  /// nll + lambda * state_update.
  Tensor total;
  /// Summed (not averaged) NLL and the number of predicted tokens.
  double nll_sum = 0.0;
  double tokens = 0.0;
};

struct LossOptions {
  double lambda = 1.0;
  /// Compute the state update term even when lambda is zero.
  bool always_state_update = false;
};

/// Teacher-forced loss over a batch, with the parameters already bound.
LossTerms compute_loss(const BoundParams& params, const Generator& model,
                       std::span<const TrainingExample* const> batch,
                       const LossOptions& options = {});
/// Same, binding the parameters on `tape` first.
LossTerms compute_loss(ad::Tape& tape, const Generator& model,
                       std::span<const TrainingExample* const> batch,
                       const LossOptions& options = {});

struct NllTotals {
  double nll = 0.0;
  double tokens = 0.0;
};

/// Summed NLL over a dataset, evaluated without recording gradients.
NllTotals evaluate_nll(const Generator& model, std::span<const TrainingExample> examples,
                       std::size_t batch_size = 64);

}  // namespace mwgen
