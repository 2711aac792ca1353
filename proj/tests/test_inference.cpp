#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "mwgen/error.hpp"
#include "mwgen/inference.hpp"
#include "support.hpp"

using namespace mwgen;

namespace {

// Log-probabilities are a fixed function of the whole prefix.
class TableScorer : public BeamScorer {
 public:
  using Fn = std::function<ad::Vector(const TokenIds&)>;
  TableScorer(Eigen::Index vocab, Fn fn) : vocab_(vocab), fn_(std::move(fn)) {}

  Eigen::Index vocab_size() const override { return vocab_; }
  void reset() override { prefixes_ = {{}}; }
  Matrix step(std::span<const int> parents, std::span<const int> last_tokens) override {
    std::vector<TokenIds> next;
    Matrix out(vocab_, static_cast<Eigen::Index>(parents.size()));
    for (std::size_t j = 0; j < parents.size(); ++j) {
      TokenIds prefix = prefixes_.at(static_cast<std::size_t>(parents[j]));
      if (!first_) prefix.push_back(last_tokens[j]);
      out.col(static_cast<Eigen::Index>(j)) = fn_(prefix);
      next.push_back(std::move(prefix));
    }
    first_ = false;
    prefixes_ = std::move(next);
    ++calls;
    return out;
  }
  int calls = 0;

 private:
  Eigen::Index vocab_;
  Fn fn_;
  std::vector<TokenIds> prefixes_ = {{}};
  bool first_ = true;
};

ad::Vector logs(std::initializer_list<double> p) {
  ad::Vector v(static_cast<Eigen::Index>(p.size()));
  Eigen::Index i = 0;
  for (double x : p) v(i++) = std::log(x);
  return v;
}

// Greedy takes 0 then 0 (0.5 * 0.4 = 0.2) and misses 1 then 0 (0.3 * 0.9 = 0.27).
ad::Vector trap(const TokenIds& prefix) {
  if (prefix.empty()) return logs({0.5, 0.3, 0.2});
  if (prefix.size() == 1) {
    if (prefix[0] == 0) return logs({0.4, 0.35, 0.25});
    if (prefix[0] == 1) return logs({0.9, 0.05, 0.05});
    return logs({0.2, 0.2, 0.6});
  }
  return logs({0.6, 0.3, 0.1});
}

BeamOptions plain(int beam, int max_length) {
  BeamOptions o;
  o.beam = beam;
  o.max_length = max_length;
  o.eos = -1;
  o.banned = {};
  return o;
}

}  // namespace

TEST_CASE("beam search equals exhaustive enumeration on a 3-token, length-2 space") {
  std::vector<std::pair<double, TokenIds>> all;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      all.push_back({trap({})(a) + trap({a})(b), {a, b}});
    }
  }
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.first > y.first; });

  TableScorer scorer(3, trap);
  const auto hyps = beam_search(scorer, plain(3, 2));
  REQUIRE(hyps.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(hyps[k].tokens == all[k].second);
    CHECK(hyps[k].log_prob == doctest::Approx(all[k].first).epsilon(1e-15));
  }
  CHECK(hyps[0].tokens == TokenIds{1, 0});

  TableScorer greedy_scorer(3, trap);
  const Hypothesis g = greedy_search(greedy_scorer, plain(1, 2));
  CHECK(g.tokens == TokenIds{0, 0});
  TableScorer one(3, trap);
  CHECK(beam_search(one, plain(1, 2)).front().tokens == g.tokens);
}

TEST_CASE("finished hypotheses leave the beam") {
  // Token 2 ends a hypothesis; ending immediately is the single most likely event.
  TableScorer scorer(3, [](const TokenIds& prefix) {
    if (prefix.empty()) return logs({0.3, 0.1, 0.6});
    return logs({0.5, 0.3, 0.2});
  });
  BeamOptions o = plain(2, 5);
  o.eos = 2;
  const auto hyps = beam_search(scorer, o);
  REQUIRE(!hyps.empty());
  CHECK(hyps[0].tokens == TokenIds{2});
  CHECK(hyps[0].finished);
  CHECK(hyps[0].log_prob == doctest::Approx(std::log(0.6)));
  for (const auto& h : hyps) CHECK(h.tokens.size() <= 5);
}

TEST_CASE("search stops at the length cap without an end token") {
  TableScorer scorer(2, [](const TokenIds&) { return logs({0.7, 0.3}); });
  const auto hyps = beam_search(scorer, plain(4, 6));
  CHECK(scorer.calls == 6);
  for (const auto& h : hyps) {
    CHECK(h.tokens.size() == 6);
    CHECK_FALSE(h.finished);
  }
  CHECK(hyps.front().tokens == TokenIds(6, 0));
}

TEST_CASE("banned tokens are never proposed") {
  TableScorer scorer(3, [](const TokenIds&) { return logs({0.8, 0.1, 0.1}); });
  BeamOptions o = plain(2, 3);
  o.banned = {0};
  for (const auto& h : beam_search(scorer, o)) {
    CHECK(std::find(h.tokens.begin(), h.tokens.end(), 0) == h.tokens.end());
  }
}

TEST_CASE("generator beam 1 equals greedy and wider beams score no worse") {
  const AttributeSchema full = AttributeSchema::full();
  auto micro = testkit::micro_model(8, full, 21, 0.8);
  const MetaWord mw = parse_metaword("RL=4,DA=wh-question,MU=false,CR=0.3,S=0.5", full);
  for (const auto& pair : micro.pairs) {
    BeamOptions o;
    o.beam = 1;
    o.max_length = 8;
    const auto beam1 = decode(micro.model, pair.message, mw, o);
    GeneratorScorer scorer(micro.model, encode_message(micro.model, pair.message), mw);
    const Hypothesis greedy = greedy_search(scorer, o);
    CHECK(beam1.front().tokens == greedy.tokens);
    CHECK(beam1.front().log_prob == greedy.log_prob);
    o.beam = 5;
    const auto beam5 = decode(micro.model, pair.message, mw, o);
    CHECK(beam5.front().log_prob >= beam1.front().log_prob);
    CHECK(beam5.size() <= 5);
    for (std::size_t k = 1; k < beam5.size(); ++k) CHECK(beam5[k - 1].log_prob >= beam5[k].log_prob);
  }
}

TEST_CASE("decoded log probability equals the teacher-forced likelihood") {
  const AttributeSchema full = AttributeSchema::full();
  auto micro = testkit::micro_model(8, full, 22, 0.8);
  // Train briefly so EOS is reachable within the cap.
  TrainConfig config;
  config.d = 8;
  config.batch_size = 5;
  config.max_epochs = 60;
  config.patience = 60;
  const Generator model = train(micro.model, micro.pairs, micro.pairs, config).model;
  const AnnotatedPair& pair = micro.pairs[1];
  BeamOptions o;
  o.beam = 3;
  const Hypothesis best = decode(model, pair.message, pair.metaword, o).front();
  REQUIRE(best.finished);
  REQUIRE(best.tokens.back() == Vocab::kEos);
  TrainingExample ex = make_example(model, pair);
  ex.response.assign(best.tokens.begin(), best.tokens.end() - 1);
  const TrainingExample* batch[] = {&ex};
  ad::Tape tape(false);
  const LossTerms terms = compute_loss(tape, model, batch, LossOptions{.lambda = 0.0});
  CHECK(-terms.nll_sum == doctest::Approx(best.log_prob).epsilon(1e-12));
}

TEST_CASE("trace records one row per generated token") {
  const AttributeSchema full = AttributeSchema::full();
  auto micro = testkit::micro_model(8, full, 23, 0.8);
  const MetaWord mw = parse_metaword("RL=4,DA=statement,MU=true,CR=0.5,S=0.5", full);
  const auto trace = trace_decode(micro.model, micro.pairs[0].message, mw, 6);
  BeamOptions o;
  o.beam = 1;
  o.max_length = 6;
  TokenIds greedy = decode(micro.model, micro.pairs[0].message, mw, o).front().tokens;
  if (!greedy.empty() && greedy.back() == Vocab::kEos) greedy.pop_back();
  REQUIRE(trace.size() == greedy.size());
  for (std::size_t t = 0; t < trace.size(); ++t) {
    CHECK(trace[t].step == static_cast<int>(t) + 1);
    CHECK(trace[t].token == micro.model.response_vocab.token(greedy[t]));
    CHECK(trace[t].distances.size() == 5);
    CHECK(trace[t].distances.minCoeff() >= 0.0);
    CHECK(trace[t].weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  std::ostringstream csv;
  write_trace_csv(csv, full, trace);
  std::istringstream lines(csv.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header == "step,token,dist_RL,dist_DA,dist_MU,dist_CR,dist_S,attn_RL,attn_DA,attn_MU,attn_CR,attn_S");
  std::size_t rows = 0;
  for (std::string line; std::getline(lines, line);) ++rows;
  CHECK(rows == trace.size());
}

TEST_CASE("generation needs a predictor for missing variables") {
  const AttributeSchema full = AttributeSchema::full();
  auto micro = testkit::micro_model(8, full, 24, 0.8);
  GenerateOptions options;
  options.override_metaword = parse_metaword("RL=4", full);
  std::mt19937_64 rng(1);
  try {
    generate(micro.model, nullptr, "alpha beta", options, rng);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.variable() == "DA,MU,CR,S");
  }
  options.override_metaword = parse_metaword("RL=4,DA=statement,MU=true,CR=0.5,S=0.5", full);
  options.samples = 2;
  options.beam.max_length = 6;
  const auto out = generate(micro.model, nullptr, "alpha beta", options, rng);
  REQUIRE(out.size() == 2);
  CHECK(out[0].response == out[1].response);
  CHECK(out[0].metaword == *options.override_metaword);
  std::ostringstream line;
  write_generation(line, out[0]);
  const auto j = nlohmann::json::parse(line.str());
  CHECK(j.at("metaword").at("CR") == 0.5);
  CHECK(j.at("metaword").at("RL") == "4");
  CHECK(j.at("log_prob").get<double>() == out[0].log_prob);
  CHECK_THROWS_AS(encode_message(micro.model, "  "), Error);
}
