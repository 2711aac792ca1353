#include <doctest.h>

#include <cmath>

#include "mwgen/corpus.hpp"
#include "mwgen/error.hpp"
#include "mwgen/metaword.hpp"

using namespace mwgen;

namespace {

const char* kMessage = "last week I have a nice trip to New York!";
const char* kResponse1 = "Is New York more expensive than California?";
const char* kResponse2 =
    "Cool, sounds great! What is the tallest building in this city, Chrysler building?";
const char* kResponse3 = "I don't know what you are talking about. But it seems good.";

FreqStats no_exclusions() {
  FreqStats s;
  s.k = 0;
  return s;
}

}  // namespace

TEST_CASE("table 1 rows") {
  const Tokens r1 = tokenize(kResponse1), r2 = tokenize(kResponse2), r3 = tokenize(kResponse3);
  CHECK(extract_rl(r1) == "8");
  CHECK(extract_da(r1) == "yes-no-question");
  CHECK(extract_da(r2) == "wh-question");
  CHECK(extract_da(r3) == "statement");
  CHECK(extract_mu(r1) == "false");
  CHECK(extract_mu(r2) == "true");
  CHECK(extract_mu(r3) == "true");
  CHECK(extract_rl(r2) == "17");
}

TEST_CASE("table 1 row 1 full meta-word") {
  const Tokens m = tokenize(kMessage), r = tokenize(kResponse1);
  const std::vector<Tokens> responses = {r, tokenize(kResponse2), tokenize(kResponse3)};
  const FreqStats stats = build_freq_stats(responses, 0, default_stopwords());
  const MetaWord mw = extract_metaword(m, r, AttributeSchema::full(), stats);
  CHECK(mw.find("RL")->category == "8");
  CHECK(mw.find("DA")->category == "yes-no-question");
  CHECK(mw.find("MU")->category == "false");
  CHECK(mw.find("CR")->real > 0.0);
  CHECK(mw.find("S")->real >= 0.0);
  CHECK(mw.find("S")->real <= 1.0);
  const MetaWord rl_only = extract_metaword(m, r, AttributeSchema::parse("RL"), stats);
  CHECK(rl_only.variables.size() == 1);
  CHECK_THROWS_AS(extract_metaword(m, Tokens{}, AttributeSchema::full(), stats), SchemaError);
}

TEST_CASE("response length is capped at 25") {
  CHECK(extract_rl(Tokens(30, "w")) == "25");
  CHECK(extract_rl(Tokens{"w"}) == "1");
}

TEST_CASE("short utterances do not count as utterances") {
  CHECK(extract_mu(tokenize("ok. fine. yes.")) == "false");
  CHECK(extract_mu(tokenize("that is fine. me too.")) == "false");
  CHECK(extract_mu(tokenize("that is fine. so do i.")) == "true");
}

TEST_CASE("dialogue act rules") {
  CHECK(extract_da(tokenize("where are you?")) == "wh-question");
  CHECK(extract_da(tokenize("are you there?")) == "yes-no-question");
  CHECK(extract_da(tokenize("fine. how about you?")) == "wh-question");
  CHECK(extract_da(tokenize("i see it")) == "statement");
  CHECK(extract_da(tokenize("ok")) == "other");
}

TEST_CASE("copy ratio") {
  const FreqStats s = no_exclusions();
  CHECK(extract_cr(Tokens{"alpha", "beta", "gamma"}, Tokens{"alpha", "delta"}, s) == 0.5);
  CHECK(extract_cr(Tokens{"alpha"}, Tokens{"delta"}, s) == 0.0);
  CHECK(extract_cr(Tokens{"alpha", "beta"}, Tokens{"alpha", "beta"}, s) == 1.0);
  CHECK(extract_cr(Tokens{"alpha"}, Tokens{"?"}, s) == 0.0);
  FreqStats stop = no_exclusions();
  stop.stopwords = {"the"};
  CHECK(extract_cr(Tokens{"the", "cat"}, Tokens{"the", "cat", "sat"}, stop) == 0.5);
}

TEST_CASE("specificity from normalized inverse word frequency") {
  // counts {a: 9, b: 1}, |C| = 10.
  std::vector<Tokens> responses(9, Tokens{"a"});
  responses.push_back({"a", "b"});
  const FreqStats s = build_freq_stats(responses, 0, {});
  CHECK(s.total_responses == 10);
  CHECK(s.doc_count("a") == 10);
  CHECK(s.doc_count("b") == 1);
  CHECK(extract_s(Tokens{"a", "b"}, s) == 1.0);
  CHECK(extract_s(Tokens{"a"}, s) == 0.0);

  const std::vector<Tokens> single(3, Tokens{"w"});
  CHECK(extract_s(Tokens{"w"}, build_freq_stats(single, 0, {})) == 0.0);
}

TEST_CASE("niwf is the min-max normalized inverse frequency") {
  std::vector<Tokens> responses = {{"a", "b", "c"}, {"a", "b"}, {"a"}, {"a"}};
  const FreqStats s = build_freq_stats(responses, 0, {});
  const double scale = std::log(1.0 + 4.0);
  auto iwf = [&](double c) { return scale / (1.0 + c); };
  const double expected = (iwf(2) - iwf(4)) / (iwf(1) - iwf(4));
  CHECK(niwf("b", s) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(niwf("c", s) == 1.0);
  CHECK(niwf("a", s) == 0.0);
}

TEST_CASE("prefix features") {
  const FreqStats s = no_exclusions();
  const Tokens msg = {"alpha", "beta"};
  CHECK(prefix_feature("RL", msg, Tokens{"x", "y", "z"}, s).category == "3");
  CHECK(prefix_feature("CR", msg, Tokens{"x", "y"}, s).real == 0.0);
  CHECK(prefix_feature("CR", msg, Tokens{"alpha", "y"}, s).real == 0.5);
  CHECK_THROWS_AS(prefix_feature("DA", msg, Tokens{"x"}, s), SchemaError);
  CHECK_THROWS_AS(prefix_feature("MU", msg, Tokens{"x"}, s), SchemaError);
}

TEST_CASE("schema parsing") {
  CHECK(AttributeSchema::parse("all").id() == "RL,DA,MU,CR,S");
  CHECK(AttributeSchema::parse("S,RL").id() == "RL,S");
  CHECK(AttributeSchema::parse("none").id() == "none");
  CHECK(AttributeSchema::parse("").size() == 0);
  CHECK_THROWS_AS(AttributeSchema::parse("RL,XX"), SchemaError);
}

TEST_CASE("override parsing and range checks") {
  const AttributeSchema full = AttributeSchema::full();
  const MetaWord mw = parse_metaword("RL=8,DA=yes-no-question,MU=false,CR=0.2,S=0.6", full);
  CHECK(mw.find("RL")->category == "8");
  CHECK(mw.find("CR")->real == 0.2);
  CHECK_NOTHROW(full.validate(mw));
  CHECK(parse_metaword("RL=8", full).variables.size() == 1);
  try {
    parse_metaword("RL=8,CR=1.5", full);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.variable() == "CR");
  }
  CHECK_THROWS_AS(parse_metaword("RL=26", full), SchemaError);
  CHECK_THROWS_AS(parse_metaword("RL=0", full), SchemaError);
  CHECK_THROWS_AS(parse_metaword("DA=greeting", full), SchemaError);
  CHECK_THROWS_AS(parse_metaword("MU=maybe", full), SchemaError);
  CHECK_THROWS_AS(parse_metaword("XX=1", full), SchemaError);
  CHECK_THROWS_AS(parse_metaword("RL", full), SchemaError);
  CHECK_THROWS_AS(parse_metaword("RL=8", AttributeSchema::parse("DA")), SchemaError);
}

TEST_CASE("merge replaces only the overridden variables") {
  const AttributeSchema full = AttributeSchema::full();
  const MetaWord base = parse_metaword("RL=8,DA=statement,MU=false,CR=0.2,S=0.6", full);
  const MetaWord merged = merge_metaword(base, parse_metaword("RL=3,S=0.1", full), full);
  CHECK(merged.to_string() == "RL=3,DA=statement,MU=false,CR=0.2,S=0.1");
}
