#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "mwgen/checkpoint.hpp"
#include "mwgen/error.hpp"
#include "mwgen/io.hpp"
#include "mwgen/synthetic.hpp"
#include "support.hpp"

using namespace mwgen;

TEST_CASE("container round trip") {
  Container c;
  c.header["kind"] = "test";
  c.header["nested"] = {{"a", 1}};
  c.tensors["x"] = Matrix::Random(3, 2);
  c.tensors["y"] = Matrix::Constant(1, 4, -0.1);
  std::stringstream buf;
  write_container(buf, c);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 8) == std::string("MWGENCK\0", 8));
  const Container back = read_container(buf);
  CHECK(back.header == c.header);
  CHECK(back.tensors == c.tensors);

  std::stringstream bad(std::string("NOTACKPT") + bytes.substr(8));
  CHECK_THROWS_AS(read_container(bad), ParseError);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(read_container(truncated), ParseError);
  std::string future = bytes;
  future[8] = 9;
  std::stringstream newer(future);
  CHECK_THROWS_AS(read_container(newer), ParseError);
}

TEST_CASE("generator checkpoint round trip") {
  auto micro = testkit::micro_model(8, AttributeSchema::parse("RL,CR,S"), 2, 0.3);
  GeneratorCheckpoint ckpt;
  ckpt.model = micro.model;
  ckpt.config.d = 8;
  ckpt.config.lambda = 0.5;
  ckpt.config.schema = AttributeSchema::parse("RL,CR,S");
  ckpt.history.push_back({1, 3.5, 3.0, 0.5, 20.25, true});
  const auto path = std::filesystem::temp_directory_path() / "mwgen_io_test.ckpt";
  save_generator(path, ckpt);
  const GeneratorCheckpoint back = load_generator(path);
  std::filesystem::remove(path);
  CHECK(back.model.params == micro.model.params);
  CHECK(back.model.message_vocab == micro.model.message_vocab);
  CHECK(back.model.response_vocab == micro.model.response_vocab);
  CHECK(back.model.config.schema.id() == "RL,CR,S");
  CHECK(back.model.config.d == 8);
  CHECK(back.model.stats.total_responses == micro.model.stats.total_responses);
  CHECK(back.model.stats.top_k == micro.model.stats.top_k);
  CHECK(back.config.lambda == 0.5);
  REQUIRE(back.history.size() == 1);
  CHECK(back.history[0].val_perplexity == 20.25);
  CHECK(back.history[0].improved);
  CHECK(perplexity(back.model, make_examples(back.model, micro.pairs)) ==
        perplexity(micro.model, micro.examples));
  CHECK_THROWS_AS(load_generator(path), Error);
}

TEST_CASE("annotated dataset round trip") {
  const auto micro = testkit::micro_model(4, AttributeSchema::full(), 1, 0.1);
  std::stringstream buf;
  write_annotated(buf, micro.pairs);
  const auto back = read_annotated(buf, AttributeSchema::full());
  REQUIRE(back.size() == micro.pairs.size());
  for (std::size_t k = 0; k < back.size(); ++k) {
    CHECK(back[k].message == micro.pairs[k].message);
    CHECK(back[k].response == micro.pairs[k].response);
    CHECK(back[k].metaword == micro.pairs[k].metaword);
  }
  std::stringstream narrower(buf.str());
  const auto rl = read_annotated(narrower, AttributeSchema::parse("RL"));
  CHECK(rl.front().metaword.variables.size() == 1);

  std::istringstream bad("{\"message\": \"a\", \"response\": \"b\", \"metaword\": {\"RL\": \"1\"}}\n");
  CHECK_THROWS_WITH_AS(read_annotated(bad, AttributeSchema::full()), doctest::Contains("line 1"), ParseError);
  std::istringstream broken("{\"message\": \"a\", \"response\": \"b\", \"metaword\": {\"RL\": \"1\"}}\n{\n");
  try {
    read_annotated(broken, AttributeSchema::parse("RL"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("meta-word JSON keeps categories as strings and reals as numbers") {
  const AttributeSchema full = AttributeSchema::full();
  const MetaWord mw = parse_metaword("RL=8,DA=statement,MU=true,CR=0.25,S=0", full);
  const Json j = metaword_to_json(mw);
  CHECK(j.dump() == R"({"RL":"8","DA":"statement","MU":"true","CR":0.25,"S":0.0})");
  CHECK(metaword_from_json(j, full) == mw);
  Json out_of_range = j;
  out_of_range["CR"] = 1.5;
  CHECK_THROWS_AS(metaword_from_json(out_of_range, full), SchemaError);
}

TEST_CASE("vocab and stats JSON round trip") {
  const auto micro = testkit::micro_model(4, AttributeSchema::full(), 1, 0.1);
  CHECK(vocab_from_json(vocab_to_json(micro.model.response_vocab)) == micro.model.response_vocab);
  const FreqStats s = stats_from_json(stats_to_json(micro.model.stats));
  CHECK(s.total_responses == micro.model.stats.total_responses);
  CHECK(s.top_k == micro.model.stats.top_k);
  CHECK(s.doc_count("the") == micro.model.stats.doc_count("the"));
}

TEST_CASE("synthetic corpus is deterministic and readable") {
  SyntheticConfig config;
  config.pairs = 40;
  config.seed = 3;
  const auto a = make_synthetic_corpus(config);
  const auto b = make_synthetic_corpus(config);
  REQUIRE(a.size() == 40);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].message == b[k].message);
    CHECK(a[k].response == b[k].response);
    const Tokens r = tokenize(a[k].response);
    CHECK((r.back() == "?" || r.back() == "."));
    CHECK(r.size() <= 30);
  }
  std::stringstream buf;
  write_pairs(buf, a);
  const LoadResult loaded = load_dataset(buf);
  CHECK(loaded.pairs.size() == 40);
  CHECK(loaded.pairs[7].response == a[7].response);
}
