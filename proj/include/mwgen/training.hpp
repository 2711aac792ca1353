#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mwgen/generator.hpp"

namespace mwgen {

struct TrainConfig {
  int d = 64;
  double lambda = 1.0;
  std::size_t batch_size = 32;
  double clip_norm = 5.0;
  int max_epochs = 10;
  /// Epochs without a validation perplexity drop before stopping.
  int patience = 2;
  AttributeSchema schema = AttributeSchema::full();
  std::uint64_t seed = 1;
  double rho = 0.95;
  double epsilon = 1e-6;
  double init_scale = 0.1;
  /// Share of the pairs held out for validation when no split is given.
  double validation_fraction = 0.1;
  std::size_t max_vocab = 2000;
  std::size_t top_k = 1000;

  /// Throws Error when a field is out of range.
  void validate() const;
};

/// Running averages of squared gradients and squared updates.
struct AdadeltaState {
  std::map<std::string, Matrix> grad_sq;
  std::map<std::string, Matrix> update_sq;
};

struct StepReport {
  double grad_norm = 0.0;
  /// Factor applied to the gradients by clipping (1 when not clipped).
  double clip_scale = 1.0;
};

/// Rescales `grads` so their global L2 norm is at most `clip_norm`.
/// Returns the norm before clipping.
double clip_gradients(std::map<std::string, Matrix>& grads, double clip_norm);

/// One Adadelta update after global-norm clipping. Parameters without a
/// gradient entry are left alone. Throws NumericError, before touching any
/// parameter, when a gradient holds a non-finite value.
StepReport adadelta_step(ParameterSet& params, std::map<std::string, Matrix> grads,
                         AdadeltaState& state, double rho = 0.95, double epsilon = 1e-6,
                         double clip_norm = 5.0);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_nll = 0.0;
  double train_state_update = 0.0;
  double val_perplexity = 0.0;
  bool improved = false;
};

/// exp(nll / tokens).
double perplexity(const NllTotals& totals);
double perplexity(const Generator& model, std::span<const TrainingExample> examples);

struct TrainResult {
  /// Parameters of the epoch with the lowest validation perplexity.
  Generator model;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_perplexity = 0.0;
};

/// Deterministic shuffle-and-cut of `pairs` into (train, validation).
std::pair<std::vector<AnnotatedPair>, std::vector<AnnotatedPair>> split_validation(
    std::span<const AnnotatedPair> pairs, double fraction, std::uint64_t seed);

/// Builds vocabularies and statistics from the training pairs and returns a
/// freshly initialized generator.
Generator init_generator(std::span<const AnnotatedPair> train, const FreqStats& stats,
                         const TrainConfig& config);

/// Trains `model` with early stopping on validation perplexity. One JSON line
/// per epoch goes to `log` when given.
TrainResult train(Generator model, std::span<const AnnotatedPair> train,
                  std::span<const AnnotatedPair> validation, const TrainConfig& config,
                  std::ostream* log = nullptr);

/// The JSON line written for an epoch.
std::string epoch_log_line(const EpochRecord& record, const TrainConfig& config);

}  // namespace mwgen
