#include "mwgen/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <limits>
#include <random>

#include "json.hpp"
#include "mwgen/error.hpp"

namespace mwgen {

void TrainConfig::validate() const {
  if (d < 1) throw Error("d must be positive");
  if (!(lambda >= 0.0)) throw Error("lambda must be non-negative");
  if (batch_size < 1) throw Error("batch size must be at least 1");
  if (!(clip_norm > 0.0)) throw Error("clip norm must be positive");
  if (max_epochs < 1) throw Error("max epochs must be at least 1");
  if (patience < 1) throw Error("patience must be at least 1");
  if (!(rho > 0.0 && rho < 1.0)) throw Error("rho must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw Error("epsilon must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw Error("validation fraction must lie in (0, 1)");
  }
}

double clip_gradients(std::map<std::string, Matrix>& grads, double clip_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > clip_norm) {
    const double factor = clip_norm / norm;
    for (auto& [name, g] : grads) g *= factor;
  }
  return norm;
}

StepReport adadelta_step(ParameterSet& params, std::map<std::string, Matrix> grads,
                         AdadeltaState& state, double rho, double epsilon, double clip_norm) {
  for (const auto& [name, g] : grads) {
    if (!g.allFinite()) throw NumericError("non-finite gradient for parameter " + name);
    auto it = params.find(name);
    if (it == params.end()) throw Error("gradient for unknown parameter " + name);
    if (it->second.rows() != g.rows() || it->second.cols() != g.cols()) {
      throw ShapeError("gradient shape mismatch for parameter " + name);
    }
  }
  StepReport report;
  report.grad_norm = clip_gradients(grads, clip_norm);
  if (report.grad_norm > clip_norm) report.clip_scale = clip_norm / report.grad_norm;

  for (auto& [name, g] : grads) {
    Matrix& theta = params.at(name);
    auto [gs, fresh_g] = state.grad_sq.try_emplace(name, Matrix::Zero(g.rows(), g.cols()));
    auto [us, fresh_u] = state.update_sq.try_emplace(name, Matrix::Zero(g.rows(), g.cols()));
    Matrix& eg = gs->second;
    Matrix& eu = us->second;
    eg.array() = rho * eg.array() + (1.0 - rho) * g.array().square();
    const Eigen::ArrayXXd delta =
        -((eu.array() + epsilon).sqrt() / (eg.array() + epsilon).sqrt()) * g.array();
    eu.array() = rho * eu.array() + (1.0 - rho) * delta.square();
    theta.array() += delta;
  }
  return report;
}

double perplexity(const NllTotals& totals) {
  if (!(totals.tokens > 0.0)) throw Error("perplexity: no tokens");
  return std::exp(totals.nll / totals.tokens);
}

double perplexity(const Generator& model, std::span<const TrainingExample> examples) {
  return perplexity(evaluate_nll(model, examples));
}

std::pair<std::vector<AnnotatedPair>, std::vector<AnnotatedPair>> split_validation(
    std::span<const AnnotatedPair> pairs, double fraction, std::uint64_t seed) {
  if (pairs.size() < 2) throw Error("need at least two pairs to split off a validation set");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(substream(seed, "split"));
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pairs.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, pairs.size() - 1);
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::vector<AnnotatedPair> train, val;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < n_val ? val : train).push_back(pairs[order[k]]);
  }
  return {std::move(train), std::move(val)};
}

Generator init_generator(std::span<const AnnotatedPair> train, const FreqStats& stats,
                         const TrainConfig& config) {
  if (train.empty()) throw Error("empty training split");
  std::vector<Tokens> messages, responses;
  for (const auto& p : train) {
    messages.push_back(tokenize(p.message));
    responses.push_back(tokenize(p.response));
  }
  ModelConfig mc;
  mc.d = config.d;
  mc.schema = config.schema;
  return make_generator(mc, Vocab::build(messages, config.max_vocab),
                        Vocab::build(responses, config.max_vocab), stats,
                        substream(config.seed, "init"), config.init_scale);
}

std::string epoch_log_line(const EpochRecord& r, const TrainConfig& config) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["train_nll"] = r.train_nll;
  j["train_state_update"] = r.train_state_update;
  j["val_perplexity"] = r.val_perplexity;
  j["improved"] = r.improved;
  j["lambda"] = config.lambda;
  j["attributes"] = config.schema.id();
  return j.dump();
}

TrainResult train(Generator model, std::span<const AnnotatedPair> train_pairs,
                  std::span<const AnnotatedPair> validation, const TrainConfig& config,
                  std::ostream* log) {
  config.validate();
  if (train_pairs.empty()) throw Error("empty training split");
  if (validation.empty()) throw Error("empty validation split");
  const std::vector<TrainingExample> train_set = make_examples(model, train_pairs);
  const std::vector<TrainingExample> val_set = make_examples(model, validation);

  TrainResult result;
  result.model = model;
  result.best_perplexity = std::numeric_limits<double>::infinity();
  AdadeltaState state;
  std::mt19937_64 rng(substream(config.seed, "batching"));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const LossOptions options{.lambda = config.lambda};
  int stagnant = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const TrainingExample*> batch;
      for (std::size_t k = start; k < end; ++k) batch.push_back(&train_set[order[k]]);

      ad::Tape tape;
      const BoundParams bound = mwgen::bind(tape, model.params);
      const LossTerms loss = compute_loss(bound, model, batch, options);
      rec.train_loss += loss.total.value()(0, 0);
      rec.train_nll += loss.nll.value()(0, 0);
      if (loss.state_update.valid()) rec.train_state_update += loss.state_update.value()(0, 0);
      const ad::GradientMap grads = tape.backward(loss.total);
      adadelta_step(model.params, collect_gradients(grads, bound), state, config.rho,
                    config.epsilon, config.clip_norm);
      ++batches;
    }
    rec.train_loss /= static_cast<double>(batches);
    rec.train_nll /= static_cast<double>(batches);
    rec.train_state_update /= static_cast<double>(batches);
    rec.val_perplexity = perplexity(model, val_set);
    rec.improved = rec.val_perplexity < result.best_perplexity;
    if (rec.improved) {
      result.best_perplexity = rec.val_perplexity;
      result.best_epoch = epoch;
      result.model.params = model.params;
      stagnant = 0;
    } else {
      ++stagnant;
    }
    result.history.push_back(rec);
    if (log) *log << epoch_log_line(rec, config) << '\n' << std::flush;
    if (stagnant >= config.patience) break;
  }
  return result;
}

}  // namespace mwgen
