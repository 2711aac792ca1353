#include "support.hpp"

#include <algorithm>
#include <cmath>

#include "mwgen/io.hpp"

namespace testkit {

using namespace mwgen;

std::vector<RawPair> micro_raw_pairs() {
  return {
      {"alpha beta gamma delta", "what alpha the ?"},
      {"eps zeta eta theta", "is eps a zeta ?"},
      {"iota kappa lam mu", "i beta gamma ."},
      {"nu xi omi pi", "so do i ."},
      {"alpha nu pi", "delta eta ."},
  };
}

Micro micro_model(int d, const AttributeSchema& schema, std::uint64_t seed, double init_scale) {
  const auto raw = micro_raw_pairs();
  std::vector<Tokens> responses;
  for (const auto& p : raw) responses.push_back(tokenize(p.response));
  const FreqStats stats = build_freq_stats(responses, 3, default_stopwords());

  Micro m;
  m.pairs = annotate(raw, schema, stats);
  TrainConfig config;
  config.d = d;
  config.schema = schema;
  config.seed = seed;
  config.init_scale = init_scale;
  m.model = init_generator(m.pairs, stats, config);
  m.examples = make_examples(m.model, m.pairs);
  for (const auto& e : m.examples) m.batch.push_back(&e);
  return m;
}

double loss_value(const Generator& model, const std::vector<const TrainingExample*>& batch,
                  double lambda) {
  ad::Tape tape(false);
  LossOptions options;
  options.lambda = lambda;
  return compute_loss(tape, model, batch, options).total.value()(0, 0);
}

std::map<std::string, Matrix> loss_gradients(const Generator& model,
                                             const std::vector<const TrainingExample*>& batch,
                                             double lambda) {
  ad::Tape tape;
  const BoundParams bound = mwgen::bind(tape, model.params);
  LossOptions options;
  options.lambda = lambda;
  const LossTerms terms = compute_loss(bound, model, batch, options);
  return collect_gradients(tape.backward(terms.total), bound);
}

FdReport finite_difference_check(const Generator& model,
                                 const std::vector<const TrainingExample*>& batch, double lambda,
                                 const FdOptions& options) {
  const auto analytic = loss_gradients(model, batch, lambda);
  Generator probe = model;
  const double h = options.h;
  FdReport report;
  for (auto& [name, value] : probe.params) {
    const Matrix& grad = analytic.at(name);
    for (Eigen::Index r = 0; r < value.rows(); ++r) {
      for (Eigen::Index c = 0; c < value.cols(); ++c) {
        const double saved = value(r, c);
        auto f = [&](double x) {
          value(r, c) = x;
          return loss_value(probe, batch, lambda);
        };
        double numeric;
        if (options.five_point) {
          numeric = (-f(saved + 2 * h) + 8 * f(saved + h) - 8 * f(saved - h) + f(saved - 2 * h)) /
                    (12 * h);
        } else {
          numeric = (f(saved + h) - f(saved - h)) / (2 * h);
        }
        value(r, c) = saved;
        const double a = grad(r, c);
        const double magnitude = std::max(std::abs(a), std::abs(numeric));
        if (magnitude < options.min_magnitude) {
          ++report.skipped;
          continue;
        }
        const double err = std::abs(a - numeric) / std::max(magnitude, options.floor);
        ++report.checked;
        if (!(err <= report.max_rel_error)) {
          report.max_rel_error = std::isfinite(err) ? err : INFINITY;
          report.worst = name + "(" + std::to_string(r) + "," + std::to_string(c) +
                         ") analytic " + std::to_string(a) + " numeric " + std::to_string(numeric);
        }
      }
    }
  }
  return report;
}

}  // namespace testkit
