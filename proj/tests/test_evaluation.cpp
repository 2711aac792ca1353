#include <doctest.h>

#include <cmath>
#include <random>

#include "mwgen/error.hpp"
#include "mwgen/evaluation.hpp"
#include "mwgen/training.hpp"
#include "support.hpp"

using namespace mwgen;

namespace {

ad::Vector vec(std::initializer_list<double> xs) {
  ad::Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

EmbeddingSource random_source(const std::vector<std::string>& words, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::unordered_map<std::string, ad::Vector> m;
  for (const auto& w : words) {
    ad::Vector v(5);
    for (Eigen::Index i = 0; i < 5; ++i) v(i) = n(rng);
    m.emplace(w, v);
  }
  return EmbeddingSource(std::move(m), "test");
}

double cos_oracle(const ad::Vector& a, const ad::Vector& b) {
  double dot = 0, na = 0, nb = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    dot += a(i) * b(i);
    na += a(i) * a(i);
    nb += b(i) * b(i);
  }
  return dot / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("bleu of identical corpora is one") {
  const std::vector<Tokens> hyps = {{"the", "cat", "sat", "on", "the", "mat"},
                                    {"a", "dog", "ran", "off", "fast"}};
  CHECK(bleu(hyps, hyps) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bleu hand case") {
  const std::vector<Tokens> hyp = {{"the", "cat", "sat"}};
  const std::vector<Tokens> ref = {{"the", "cat", "ran"}};
  const double e = kBleuEpsilon;
  const double expected = std::exp(0.25 * (std::log(2.0 / 3.0) + std::log(0.5) +
                                           std::log(e / (1.0 + e)) + std::log(e)));
  CHECK(bleu(hyp, ref) == doctest::Approx(expected).epsilon(1e-12));
  const std::vector<Tokens> ref2 = {{"the", "cat", "ran"}};
  CHECK(bleu(hyp, ref2, 2) == doctest::Approx(std::sqrt(2.0 / 3.0 * 0.5)).epsilon(1e-9));
}

TEST_CASE("bleu brevity penalty") {
  const std::vector<Tokens> hyp = {{"a", "b"}};
  const std::vector<Tokens> ref = {{"a", "b", "c", "d"}};
  CHECK(bleu(hyp, ref, 2) == doctest::Approx(std::exp(1.0 - 2.0)).epsilon(1e-9));
  CHECK_THROWS_AS(bleu(hyp, std::vector<Tokens>{}), Error);
}

TEST_CASE("distinct-n") {
  const std::vector<Tokens> r = {tokenize("a b"), tokenize("a c")};
  CHECK(distinct_n(r, 1) == 0.75);
  CHECK(distinct_n(r, 2) == 1.0);
  CHECK(distinct_n(std::vector<Tokens>{{"a"}}, 2) == 0.0);
}

TEST_CASE("embedding metrics hand cases") {
  std::unordered_map<std::string, ad::Vector> m;
  m.emplace("x", vec({1, 0}));
  m.emplace("y", vec({0, 1}));
  m.emplace("z", vec({-3, 0.5}));
  const EmbeddingSource src(std::move(m), "hand");
  CHECK(cosine(vec({1, 0}), vec({0, 0})) == 0.0);
  CHECK(cosine(vec({1, 1}), vec({2, 2})) == doctest::Approx(1.0));

  const auto same = embedding_metrics({"x", "y"}, {"y", "x"}, src);
  REQUIRE(same);
  CHECK(same->average == doctest::Approx(1.0));
  CHECK(same->extrema == doctest::Approx(1.0));
  CHECK(same->greedy == doctest::Approx(1.0));

  const auto s = embedding_metrics({"x", "unknown"}, {"y", "z"}, src);
  REQUIRE(s);
  CHECK(s->average == doctest::Approx(cos_oracle(vec({1, 0}), vec({-1.5, 0.75}))).epsilon(1e-14));
  CHECK(s->extrema == doctest::Approx(cos_oracle(vec({1, 0}), vec({-3, 1}))).epsilon(1e-14));
  // x matches best with y (cos 0); y with x (0), z with x (cos < 0 but still best).
  const double z_to_x = cos_oracle(vec({-3, 0.5}), vec({1, 0}));
  CHECK(s->greedy == doctest::Approx(0.5 * (0.0 + 0.5 * (0.0 + z_to_x))).epsilon(1e-14));
  CHECK_FALSE(embedding_metrics({"unknown"}, {"x"}, src).has_value());
}

TEST_CASE("bag-of-words set scores equal the brute-force oracle") {
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f", "g"};
  const EmbeddingSource src = random_source(words, 3);
  const std::vector<Tokens> gen = {{"a", "b"}, {"c"}, {"d", "e", "a"}};
  const std::vector<Tokens> ref = {{"f", "g"}, {"b", "c", "zzz"}, {"e"}};

  auto avg = [&](const Tokens& s) {
    ad::Vector v = ad::Vector::Zero(5);
    int n = 0;
    for (const auto& w : s) {
      if (const auto* p = src.find(w)) {
        v += *p;
        ++n;
      }
    }
    return ad::Vector(v / n);
  };
  auto ext = [&](const Tokens& s) {
    ad::Vector v = ad::Vector::Zero(5);
    for (Eigen::Index i = 0; i < 5; ++i) {
      double best = 0.0;
      for (const auto& w : s) {
        const auto* p = src.find(w);
        if (p && std::abs((*p)(i)) > std::abs(best)) best = (*p)(i);
      }
      v(i) = best;
    }
    return v;
  };
  auto match = [](const std::vector<ad::Vector>& from, const std::vector<ad::Vector>& to) {
    double total = 0.0;
    for (const auto& a : from) {
      double best = -2.0;
      for (const auto& b : to) best = std::max(best, cos_oracle(a, b));
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  std::vector<ad::Vector> ga, ra, ge, re;
  for (const auto& s : gen) {
    ga.push_back(avg(s));
    ge.push_back(ext(s));
  }
  for (const auto& s : ref) {
    ra.push_back(avg(s));
    re.push_back(ext(s));
  }
  const BowScores got = abow_ebow(gen, ref, src);
  CHECK(std::abs(got.a_precision - match(ga, ra)) <= 1e-12);
  CHECK(std::abs(got.a_recall - match(ra, ga)) <= 1e-12);
  CHECK(std::abs(got.e_precision - match(ge, re)) <= 1e-12);
  CHECK(std::abs(got.e_recall - match(re, ge)) <= 1e-12);
  CHECK_THROWS_AS(abow_ebow(gen, std::vector<Tokens>{{"zzz"}}, src), Error);
}

TEST_CASE("meta-word expression scores") {
  const AttributeSchema schema = AttributeSchema::parse("RL,CR");
  FreqStats stats;
  stats.k = 0;
  const std::vector<std::string> messages = {"alpha beta", "gamma"};
  const std::vector<std::string> responses = {"delta epsilon", ""};
  const std::vector<MetaWord> targets = {parse_metaword("RL=2,CR=0.2", schema),
                                         parse_metaword("RL=3,CR=0.5", schema)};
  const ExpressionReport r = metaword_expression(messages, responses, targets, schema, stats);
  CHECK(r.skipped == 1);
  REQUIRE(r.variables.size() == 2);
  CHECK(r.variables[0].value == 1.0);
  CHECK(r.variables[0].evaluated == 1);
  CHECK(r.variables[1].value == doctest::Approx(0.04).epsilon(1e-15));
}

TEST_CASE("a model with a flat output layer has perplexity equal to the vocabulary size") {
  auto micro = testkit::micro_model(8, AttributeSchema::full(), 9, 0.5);
  micro.model.params.at("out.W").setZero();
  micro.model.params.at("out.b").setZero();
  const double v = static_cast<double>(micro.model.response_vocab.size());
  CHECK(std::abs(perplexity(micro.model, micro.examples) - v) <= 1e-6);
}

TEST_CASE("evaluate aligns grouped generations with references") {
  auto micro = testkit::micro_model(8, AttributeSchema::full(), 10, 0.5);
  EvaluateInputs in;
  for (const auto& p : micro.pairs) {
    in.generated.push_back({p.message, p.response, p.metaword});
    in.generated.push_back({p.message, p.response, p.metaword});
    in.references.push_back({p.message, {p.response, "so do i ."}});
  }
  const EmbeddingSource src = EmbeddingSource::from_model(micro.model);
  in.embeddings = &src;
  in.model = &micro.model;
  const EvalReport report = evaluate(in);
  CHECK(report.get("bleu").value() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.get("a_bow_precision").has_value());
  CHECK(report.get("expression_RL_accuracy").value() == 1.0);
  const Json j = report_to_json(report);
  CHECK(j.at("metrics").at("bleu").get<double>() == report.get("bleu").value());
  CHECK(report_table(report).find("bleu") != std::string::npos);

  in.generated.back().message = "unrelated";
  CHECK_THROWS_AS(evaluate(in), Error);
}
