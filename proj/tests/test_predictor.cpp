#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "mwgen/error.hpp"
#include "mwgen/predictor.hpp"
#include "support.hpp"

using namespace mwgen;

namespace {

Predictor small_predictor(int d, std::uint64_t seed, double scale) {
  std::vector<Tokens> docs;
  for (const auto& p : testkit::micro_raw_pairs()) docs.push_back(tokenize(p.message));
  return make_predictor(d, AttributeSchema::full(), Vocab::build(docs, 100), seed, scale);
}

void zero_heads(Predictor& pr) {
  for (auto& [name, m] : pr.params) {
    if (name.starts_with("head.")) m.setZero();
  }
}

const VariableDistribution& var(const MetaWordDistribution& d, std::string_view key) {
  for (const auto& v : d.variables) {
    if (v.key == key) return v;
  }
  throw Error("missing variable");
}

}  // namespace

TEST_CASE("zero heads predict uniform categories and a unit Gaussian") {
  Predictor pr = small_predictor(6, 1, 0.3);
  zero_heads(pr);
  const MetaWordDistribution dist = predict_distribution(pr, TokenIds{4, 5, 6});
  CHECK(dist.variables.size() == 5);
  const auto& rl = var(dist, "RL");
  CHECK(rl.probs.size() == kMaxLength);
  for (Eigen::Index c = 0; c < rl.probs.size(); ++c) CHECK(rl.probs(c) == doctest::Approx(1.0 / kMaxLength));
  CHECK(var(dist, "DA").probs.isApproxToConstant(0.25, 1e-15));
  CHECK(var(dist, "MU").probs.isApproxToConstant(0.5, 1e-15));
  CHECK(var(dist, "CR").mu == 0.0);
  CHECK(var(dist, "CR").log_var == 0.0);
  CHECK(var(dist, "S").mu == 0.0);
}

TEST_CASE("zero-head likelihood matches the closed form") {
  Predictor pr = small_predictor(6, 2, 0.3);
  zero_heads(pr);
  const AttributeSchema full = AttributeSchema::full();
  const std::vector<TokenIds> messages = {{4, 5}, {6}};
  const std::vector<MetaWord> targets = {
      parse_metaword("RL=8,DA=statement,MU=true,CR=0.2,S=0.6", full),
      parse_metaword("RL=3,DA=other,MU=false,CR=1,S=0", full)};
  ad::Tape tape(false);
  const PredictorLoss loss = predictor_loss(tape, pr, messages, targets, 0.0);
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  const double cat = std::log(25.0) + std::log(4.0) + std::log(2.0);
  const double expected = 2 * cat + 0.5 * (4 * log_2pi + 0.04 + 0.36 + 1.0 + 0.0);
  CHECK(loss.nll_sum == doctest::Approx(expected).epsilon(1e-14));
  CHECK(loss.total.value()(0, 0) == doctest::Approx(expected / 2).epsilon(1e-14));

  ad::Tape tape2(false);
  const double eta = 0.5;
  const double entropy = cat + 2 * 0.5 * (log_2pi + 1.0);
  const PredictorLoss with_entropy = predictor_loss(tape2, pr, messages, targets, eta);
  CHECK(with_entropy.total.value()(0, 0) ==
        doctest::Approx((expected - eta * 2 * entropy) / 2).epsilon(1e-13));
}

TEST_CASE("categorical sampling follows the probabilities") {
  const AttributeSchema schema = AttributeSchema::parse("DA");
  MetaWordDistribution dist;
  VariableDistribution da;
  da.key = "DA";
  da.probs = ad::Vector(4);
  da.probs << 0.1, 0.2, 0.3, 0.4;
  dist.variables.push_back(da);
  std::mt19937_64 rng(42);
  std::map<std::string, int> counts;
  const int n = 20000;
  for (int i = 0; i < n; ++i) ++counts[sample_metaword(dist, schema, rng).variables[0].category];
  const auto& acts = dialogue_acts();
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(std::abs(counts[acts[c]] / double(n) - da.probs(static_cast<Eigen::Index>(c))) <= 0.02);
  }

  dist.variables[0].probs << 0, 0, 1, 0;
  for (int i = 0; i < 200; ++i) CHECK(sample_metaword(dist, schema, rng).variables[0].category == acts[2]);
}

TEST_CASE("real sampling is Gaussian and clamped to the unit interval") {
  const AttributeSchema schema = AttributeSchema::parse("CR");
  MetaWordDistribution dist;
  VariableDistribution cr;
  cr.key = "CR";
  cr.type = VarType::kReal;
  cr.mu = 0.5;
  cr.log_var = std::log(0.01);
  dist.variables.push_back(cr);
  std::mt19937_64 rng(7);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = sample_metaword(dist, schema, rng).variables[0].real;
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  CHECK(std::abs(mean - 0.5) <= 0.02);
  CHECK(std::abs(std::sqrt(sq / n - mean * mean) - 0.1) <= 0.02);

  dist.variables[0].mu = 5.0;
  CHECK(sample_metaword(dist, schema, rng).variables[0].real == 1.0);
  dist.variables[0].mu = -5.0;
  CHECK(sample_metaword(dist, schema, rng).variables[0].real == 0.0);
  CHECK_THROWS_AS(sample_metaword(dist, AttributeSchema::parse("S"), rng), SchemaError);
}

TEST_CASE("predictor gradients match five-point differences") {
  Predictor pr = small_predictor(4, 3, 0.5);
  const AttributeSchema full = AttributeSchema::full();
  const std::vector<TokenIds> messages = {{4, 5, 6}, {7, 8}, {9}};
  const std::vector<MetaWord> targets = {
      parse_metaword("RL=8,DA=statement,MU=true,CR=0.2,S=0.6", full),
      parse_metaword("RL=3,DA=other,MU=false,CR=1,S=0", full),
      parse_metaword("RL=1,DA=wh-question,MU=false,CR=0.5,S=0.3", full)};
  const double eta = 0.1;
  const PredictorGradients analytic = predictor_gradients(pr, messages, targets, eta);
  auto f = [&] {
    ad::Tape tape(false);
    return predictor_loss(tape, pr, messages, targets, eta).total.value()(0, 0);
  };
  CHECK(analytic.loss == f());
  const double h = 2e-3;
  double worst = 0.0;
  for (auto& [name, m] : pr.params) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      auto at = [&](double x) {
        m.data()[i] = x;
        return f();
      };
      const double numeric =
          (-at(saved + 2 * h) + 8 * at(saved + h) - 8 * at(saved - h) + at(saved - 2 * h)) / (12 * h);
      m.data()[i] = saved;
      const double a = analytic.grads.at(name).data()[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-7}));
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("predictor training lowers the validation likelihood and round trips") {
  const auto micro = testkit::micro_model(4, AttributeSchema::full(), 1, 0.1);
  PredictorConfig config;
  config.d = 8;
  config.batch_size = 2;
  config.max_epochs = 15;
  config.patience = 15;
  const PredictorResult result = train_predictor(micro.pairs, micro.pairs, config);
  CHECK(result.history.back().val_nll < result.history.front().val_nll);
  CHECK(predictor_nll(result.predictor, micro.pairs) ==
        doctest::Approx(result.history[result.best_epoch - 1].val_nll).epsilon(1e-12));

  const auto path = std::filesystem::temp_directory_path() / "mwgen_predictor_test.ckpt";
  save_predictor(path, result, config);
  const Predictor loaded = load_predictor(path);
  std::filesystem::remove(path);
  CHECK(loaded.params == result.predictor.params);
  CHECK(loaded.schema.id() == "RL,DA,MU,CR,S");
  CHECK(loaded.message_vocab == result.predictor.message_vocab);
  const PredictorResult again = train_predictor(micro.pairs, micro.pairs, config);
  CHECK(again.predictor.params == result.predictor.params);
}
