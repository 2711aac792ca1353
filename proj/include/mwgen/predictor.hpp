#pragma once

// Meta-word predictor: a biGRU over the message followed by one independent
// head per schema variable (softmax for categorical variables, a Gaussian
// mean and log-variance for real ones).

#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "mwgen/checkpoint.hpp"
#include "mwgen/corpus.hpp"
#include "mwgen/generator.hpp"
#include "mwgen/metaword.hpp"
#include "mwgen/model.hpp"

namespace mwgen {

struct VariableDistribution {
  std::string key;
  VarType type = VarType::kCategorical;
  /// Category probabilities in inventory order (categorical only).
  ad::Vector probs;
  double mu = 0.0;
  double log_var = 0.0;
};

struct MetaWordDistribution {
  std::string schema_id;
  std::vector<VariableDistribution> variables;
};

struct Predictor {
  int d = 64;
  AttributeSchema schema = AttributeSchema::full();
  Vocab message_vocab;
  ParameterSet params;
};

/// Parameter shapes: emb, enc.fwd.*, enc.bwd.*, and head.<KEY>.W/b for
/// categorical or head.<KEY>.mu.W/b and head.<KEY>.logvar.W/b for real keys.
ParameterSet make_predictor_parameters(int d, std::size_t message_vocab,
                                       const AttributeSchema& schema);

Predictor make_predictor(int d, const AttributeSchema& schema, Vocab message_vocab,
                         std::uint64_t seed, double init_scale = 0.1);

/// One distribution per message.
std::vector<MetaWordDistribution> predict_distributions(const Predictor& predictor,
                                                        std::span<const TokenIds> messages);
MetaWordDistribution predict_distribution(const Predictor& predictor, const TokenIds& message);

/// Inverse-CDF draw for categorical variables, Normal(mu, exp(log_var))
/// clamped to [0, 1] for real ones.
MetaWord sample_metaword(const MetaWordDistribution& distribution, const AttributeSchema& schema,
                         std::mt19937_64& rng);

struct PredictorLoss {
  /// Batch mean of -log-likelihood - eta * entropy.
  Tensor total;
  double nll_sum = 0.0;
};

PredictorLoss predictor_loss(ad::Tape& tape, const Predictor& predictor,
                             std::span<const TokenIds> messages,
                             std::span<const MetaWord> targets, double eta);

struct PredictorGradients {
  double loss = 0.0;
  std::map<std::string, Matrix> grads;
};

/// Loss value and gradients keyed by parameter name.
PredictorGradients predictor_gradients(const Predictor& predictor,
                                       std::span<const TokenIds> messages,
                                       std::span<const MetaWord> targets, double eta);

struct PredictorConfig {
  int d = 64;
  /// Entropy bonus weight.
  double eta = 0.01;
  std::size_t batch_size = 32;
  double clip_norm = 5.0;
  int max_epochs = 10;
  int patience = 2;
  AttributeSchema schema = AttributeSchema::full();
  std::uint64_t seed = 1;
  double rho = 0.95;
  double epsilon = 1e-6;
  double init_scale = 0.1;
  double validation_fraction = 0.1;
  std::size_t max_vocab = 2000;
};

struct PredictorEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  /// Mean negative log-likelihood per validation message.
  double val_nll = 0.0;
  bool improved = false;
};

struct PredictorResult {
  Predictor predictor;
  std::vector<PredictorEpoch> history;
  int best_epoch = 0;
};

/// Early stopping on validation negative log-likelihood.
PredictorResult train_predictor(std::span<const AnnotatedPair> train,
                                std::span<const AnnotatedPair> validation,
                                const PredictorConfig& config, std::ostream* log = nullptr);

/// Mean negative log-likelihood per message, without the entropy term.
double predictor_nll(const Predictor& predictor, std::span<const AnnotatedPair> pairs);

void save_predictor(const std::filesystem::path& path, const PredictorResult& result,
                    const PredictorConfig& config);
Predictor load_predictor(const std::filesystem::path& path);

}  // namespace mwgen
