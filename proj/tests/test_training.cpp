#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mwgen/error.hpp"
#include "mwgen/io.hpp"
#include "mwgen/synthetic.hpp"
#include "mwgen/training.hpp"
#include "support.hpp"

using namespace mwgen;

namespace {

std::vector<AnnotatedPair> synthetic_pairs(std::size_t n, std::uint64_t seed,
                                           const AttributeSchema& schema) {
  SyntheticConfig sc;
  sc.pairs = n;
  sc.seed = seed;
  const auto raw = make_synthetic_corpus(sc);
  std::vector<Tokens> responses;
  for (const auto& p : raw) responses.push_back(tokenize(p.response));
  return annotate(raw, schema, build_freq_stats(responses, 0, default_stopwords()));
}

FreqStats stats_of(const std::vector<AnnotatedPair>& pairs) {
  std::vector<Tokens> responses;
  for (const auto& p : pairs) responses.push_back(tokenize(p.response));
  return build_freq_stats(responses, 0, default_stopwords());
}

}  // namespace

TEST_CASE("full loss gradients match five-point differences") {
  auto micro = testkit::micro_model(8, AttributeSchema::full(), 3, 0.5);
  const testkit::FdReport r = testkit::finite_difference_check(micro.model, micro.batch, 0.5);
  INFO("worst entry " << r.worst);
  CHECK(r.checked > 3000);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("gradients above 1e-5 match three-point differences") {
  auto micro = testkit::micro_model(8, AttributeSchema::parse("RL,CR"), 4, 0.5);
  testkit::FdOptions o;
  o.five_point = false;
  o.h = 1e-5;
  o.min_magnitude = 1e-5;
  const testkit::FdReport r = testkit::finite_difference_check(micro.model, micro.batch, 1.0, o);
  INFO("worst entry " << r.worst);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("zero lambda leaves only the likelihood") {
  auto micro = testkit::micro_model(8, AttributeSchema::full(), 5, 0.5);
  ad::Tape tape(false);
  const LossTerms terms = compute_loss(tape, micro.model, micro.batch,
                                       LossOptions{.lambda = 0.0, .always_state_update = true});
  CHECK(terms.total.value()(0, 0) == terms.nll.value()(0, 0));
  CHECK(terms.state_update.value()(0, 0) > 0.0);
  ad::Tape tape1(false);
  const LossTerms one = compute_loss(tape1, micro.model, micro.batch, LossOptions{.lambda = 1.0});
  CHECK(one.total.value()(0, 0) ==
        doctest::Approx(terms.nll.value()(0, 0) + terms.state_update.value()(0, 0)).epsilon(1e-14));
  // 5 responses of 4, 5, 4, 4 and 3 tokens, each plus EOS.
  CHECK(terms.tokens == 25.0);
}

TEST_CASE("adadelta first step matches the hand computation") {
  ParameterSet params;
  params["w"] = Matrix::Constant(1, 1, 1.0);
  std::map<std::string, Matrix> grads;
  grads["w"] = Matrix::Constant(1, 1, 0.5);
  AdadeltaState state;
  adadelta_step(params, grads, state, 0.95, 1e-6, 5.0);
  const double eg = 0.05 * 0.25;
  const double delta = -std::sqrt(1e-6) / std::sqrt(eg + 1e-6) * 0.5;
  CHECK(params["w"](0, 0) == doctest::Approx(1.0 + delta).epsilon(1e-15));
  CHECK(state.update_sq["w"](0, 0) == doctest::Approx(0.05 * delta * delta).epsilon(1e-15));

  adadelta_step(params, grads, state, 0.95, 1e-6, 5.0);
  const double eg2 = 0.95 * eg + 0.05 * 0.25;
  const double delta2 = -std::sqrt(0.05 * delta * delta + 1e-6) / std::sqrt(eg2 + 1e-6) * 0.5;
  CHECK(params["w"](0, 0) == doctest::Approx(1.0 + delta + delta2).epsilon(1e-15));
}

TEST_CASE("adadelta with a zero gradient does not move") {
  ParameterSet params;
  params["w"] = Matrix::Constant(2, 2, 0.3);
  std::map<std::string, Matrix> grads;
  grads["w"] = Matrix::Zero(2, 2);
  AdadeltaState state;
  adadelta_step(params, grads, state);
  CHECK(params["w"].isApproxToConstant(0.3, 0.0));
}

TEST_CASE("gradients are clipped to the global norm") {
  std::map<std::string, Matrix> grads;
  grads["a"] = Matrix::Constant(1, 1, 6.0);
  grads["b"] = Matrix::Constant(1, 1, 8.0);
  CHECK(clip_gradients(grads, 5.0) == 10.0);
  CHECK(grads["a"](0, 0) == doctest::Approx(3.0));
  CHECK(grads["b"](0, 0) == doctest::Approx(4.0));

  ParameterSet params;
  params["a"] = Matrix::Zero(1, 1);
  params["b"] = Matrix::Zero(1, 1);
  grads["a"](0, 0) = 6.0;
  grads["b"](0, 0) = 8.0;
  AdadeltaState state;
  const StepReport report = adadelta_step(params, grads, state);
  CHECK(report.grad_norm == 10.0);
  CHECK(report.clip_scale == 0.5);
}

TEST_CASE("non-finite gradients are rejected before any update") {
  ParameterSet params;
  params["a"] = Matrix::Constant(1, 1, 1.0);
  params["b"] = Matrix::Constant(1, 1, 1.0);
  std::map<std::string, Matrix> grads;
  grads["a"] = Matrix::Constant(1, 1, 1.0);
  grads["b"] = Matrix::Constant(1, 1, std::nan(""));
  AdadeltaState state;
  CHECK_THROWS_AS(adadelta_step(params, grads, state), NumericError);
  CHECK(params["a"](0, 0) == 1.0);
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.lambda = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.rho = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("validation split is a deterministic partition") {
  const auto pairs = synthetic_pairs(50, 2, AttributeSchema::full());
  const auto [train_a, val_a] = split_validation(pairs, 0.1, 9);
  const auto [train_b, val_b] = split_validation(pairs, 0.1, 9);
  CHECK(val_a.size() == 5);
  CHECK(train_a.size() == 45);
  CHECK(val_a.front().message == val_b.front().message);
  CHECK(train_a.back().response == train_b.back().response);
  std::multiset<std::string> all, parts;
  for (const auto& p : pairs) all.insert(p.message + "|" + p.response);
  for (const auto& p : train_a) parts.insert(p.message + "|" + p.response);
  for (const auto& p : val_a) parts.insert(p.message + "|" + p.response);
  CHECK(all == parts);
}

TEST_CASE("training lowers the loss and logs one line per epoch") {
  const AttributeSchema schema = AttributeSchema::full();
  const auto pairs = synthetic_pairs(200, 3, schema);
  const auto [tr, val] = split_validation(pairs, 0.1, 1);
  TrainConfig config;
  config.d = 32;
  config.batch_size = 16;
  config.max_epochs = 3;
  config.patience = 3;
  const Generator model = init_generator(tr, stats_of(tr), config);
  std::ostringstream log;
  const TrainResult result = train(model, tr, val, config, &log);
  REQUIRE(result.history.size() == 3);
  CHECK(result.history.back().train_loss < result.history.front().train_loss);
  CHECK(result.history.back().val_perplexity < result.history.front().val_perplexity);
  std::istringstream lines(log.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("epoch") == ++n);
    CHECK(j.at("attributes") == "RL,DA,MU,CR,S");
    CHECK(j.contains("val_perplexity"));
  }
  CHECK(n == 3);
}

TEST_CASE("early stopping keeps the best epoch") {
  const auto micro = testkit::micro_model(16, AttributeSchema::full(), 1, 0.1);
  const auto val = synthetic_pairs(20, 4, AttributeSchema::full());
  TrainConfig config;
  config.d = 16;
  config.batch_size = 5;
  config.max_epochs = 200;
  config.patience = 2;
  const TrainResult result = train(micro.model, micro.pairs, val, config);
  REQUIRE(result.history.size() < 200);
  const auto n = static_cast<int>(result.history.size());
  CHECK(result.best_epoch == n - config.patience);
  for (int k = n - config.patience; k < n; ++k) CHECK_FALSE(result.history[k].improved);
  const auto val_examples = make_examples(result.model, val);
  CHECK(perplexity(result.model, val_examples) == result.best_perplexity);
}

TEST_CASE("training is deterministic in the seed") {
  const auto pairs = synthetic_pairs(60, 5, AttributeSchema::full());
  const auto [tr, val] = split_validation(pairs, 0.1, 1);
  TrainConfig config;
  config.d = 8;
  config.batch_size = 8;
  config.max_epochs = 2;
  auto run = [&](std::uint64_t seed) {
    config.seed = seed;
    return train(init_generator(tr, stats_of(tr), config), tr, val, config).model.params;
  };
  const ParameterSet a = run(7), b = run(7), c = run(8);
  CHECK(a == b);
  CHECK(a != c);
}
