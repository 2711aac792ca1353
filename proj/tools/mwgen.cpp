// mwgen: prepare, synth, train, train-predictor, generate, trace, evaluate.
//
// Exit codes: 0 success, 2 usage error, 1 runtime failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include "mwgen/checkpoint.hpp"
#include "mwgen/error.hpp"
#include "mwgen/evaluation.hpp"
#include "mwgen/inference.hpp"
#include "mwgen/io.hpp"
#include "mwgen/predictor.hpp"
#include "mwgen/synthetic.hpp"
#include "mwgen/training.hpp"

namespace fs = std::filesystem;
using namespace mwgen;

namespace {

constexpr int kUsage = 2;
constexpr int kRuntime = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string resolve(const std::string& path) {
  if (path.empty() || path == "-") return path;
  const char* root = std::getenv("METAWORD_DATA_DIR");
  if (!root || !*root || fs::path(path).is_absolute()) return path;
  return (fs::path(root) / path).string();
}

CLI::Option* input_file(CLI::App* app, const std::string& name, std::string& target,
                        const std::string& help) {
  return app->add_option(name, target, help)->transform([](std::string s) {
    s = resolve(s);
    if (!fs::is_regular_file(s)) throw CLI::ValidationError("file does not exist: " + s);
    return s;
  });
}

CLI::Option* output_file(CLI::App* app, const std::string& name, std::string& target,
                         const std::string& help) {
  return app->add_option(name, target, help)->transform([](std::string s) { return resolve(s); });
}

std::ofstream open_out(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  return out;
}

fs::path sibling(const fs::path& file, const std::string& suffix) {
  fs::path p = file;
  p.replace_extension();
  return p.string() + suffix;
}

AttributeSchema parse_schema(const std::string& text) {
  try {
    return AttributeSchema::parse(text);
  } catch (const SchemaError& e) {
    throw UsageError(std::string("--attributes: ") + e.what());
  }
}

// ---------------------------------------------------------------- prepare

struct PrepareArgs {
  std::string input, output, attributes = "all", stopwords;
  std::size_t max_tokens = 30, top_k = 1000, max_vocab = 30000, per_message = 0;
};

int run_prepare(const PrepareArgs& a) {
  const AttributeSchema schema = parse_schema(a.attributes);
  const LoadResult loaded = load_dataset(fs::path(a.input), {a.max_tokens, a.per_message});
  if (loaded.pairs.empty()) throw Error("no usable pairs in " + a.input);
  CorpusConfig cc;
  cc.max_vocab = a.max_vocab;
  cc.top_k = a.top_k;
  cc.stopwords = a.stopwords.empty() ? default_stopwords() : load_stopwords(a.stopwords);
  const BuiltCorpus corpus = build_vocab(loaded.pairs, cc);
  const auto annotated = annotate(loaded.pairs, schema, corpus.stats);

  std::ofstream out = open_out(a.output);
  write_annotated(out, annotated);
  Json vocab;
  vocab["message"] = vocab_to_json(corpus.message_vocab);
  vocab["response"] = vocab_to_json(corpus.response_vocab);
  open_out(sibling(a.output, ".vocab.json").string()) << vocab.dump() << '\n';
  open_out(sibling(a.output, ".stats.json").string()) << stats_to_json(corpus.stats).dump() << '\n';

  std::cout << "read " << loaded.pairs.size() + loaded.dropped << " pairs, kept "
            << loaded.pairs.size() << ", dropped " << loaded.dropped << '\n'
            << "message vocab " << corpus.message_vocab.size() << ", response vocab "
            << corpus.response_vocab.size() << '\n'
            << "wrote " << a.output << '\n';
  return 0;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string output;
  std::size_t pairs = 5000;
  std::uint64_t seed = 1;
};

int run_synth(const SynthArgs& a) {
  SyntheticConfig sc;
  sc.pairs = a.pairs;
  sc.seed = substream(a.seed, "synthetic");
  std::ofstream out = open_out(a.output);
  write_pairs(out, make_synthetic_corpus(sc));
  std::cout << "wrote " << a.pairs << " pairs to " << a.output << '\n';
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data, validation, output, log, stats, attributes = "all";
  TrainConfig config;
};

FreqStats load_or_build_stats(const std::string& stats_path, const std::string& data,
                              std::span<const AnnotatedPair> pairs, std::size_t top_k) {
  std::string path = stats_path;
  if (path.empty() && fs::exists(sibling(data, ".stats.json"))) {
    path = sibling(data, ".stats.json").string();
  }
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return stats_from_json(Json::parse(in));
  }
  std::vector<Tokens> responses;
  for (const auto& p : pairs) responses.push_back(tokenize(p.response));
  return build_freq_stats(responses, top_k, default_stopwords());
}

std::pair<std::vector<AnnotatedPair>, std::vector<AnnotatedPair>> load_split(
    const std::string& data, const std::string& validation, const AttributeSchema& schema,
    double fraction, std::uint64_t seed) {
  const auto all = read_annotated(fs::path(data), schema);
  if (all.empty()) throw Error("empty dataset " + data);
  if (!validation.empty()) return {all, read_annotated(fs::path(validation), schema)};
  return split_validation(all, fraction, seed);
}

int run_train(TrainArgs a) {
  a.config.schema = parse_schema(a.attributes);
  try {
    a.config.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  auto [train_set, val_set] =
      load_split(a.data, a.validation, a.config.schema, a.config.validation_fraction, a.config.seed);
  const auto all = read_annotated(fs::path(a.data), a.config.schema);
  const FreqStats stats = load_or_build_stats(a.stats, a.data, all, a.config.top_k);

  std::optional<std::ofstream> log_file;
  if (!a.log.empty()) log_file = open_out(a.log);
  std::ostream& log = log_file ? *log_file : std::cerr;
  Generator model = init_generator(train_set, stats, a.config);
  const TrainResult result = train(std::move(model), train_set, val_set, a.config, &log);
  save_generator(a.output, {result.model, a.config, result.history});
  std::cout << "best epoch " << result.best_epoch << ", validation perplexity "
            << result.best_perplexity << '\n'
            << "wrote " << a.output << '\n';
  return 0;
}

// ---------------------------------------------------------------- train-predictor

struct PredictorArgs {
  std::string data, validation, output, log, attributes = "all";
  PredictorConfig config;
};

int run_train_predictor(PredictorArgs a) {
  a.config.schema = parse_schema(a.attributes);
  if (a.config.batch_size < 1 || a.config.patience < 1 || a.config.max_epochs < 1 ||
      !(a.config.eta >= 0.0)) {
    throw UsageError("batch size, patience and epochs must be positive and eta non-negative");
  }
  auto [train_set, val_set] =
      load_split(a.data, a.validation, a.config.schema, a.config.validation_fraction, a.config.seed);
  std::optional<std::ofstream> log_file;
  if (!a.log.empty()) log_file = open_out(a.log);
  std::ostream& log = log_file ? *log_file : std::cerr;
  const PredictorResult result = train_predictor(train_set, val_set, a.config, &log);
  save_predictor(a.output, result, a.config);
  std::cout << "best epoch " << result.best_epoch << '\n' << "wrote " << a.output << '\n';
  return 0;
}

// ---------------------------------------------------------------- generate / trace

struct GenerateArgs {
  std::string model, predictor, message, input, override_text, output;
  int samples = 1, beam = 5, max_length = kDefaultMaxDecode;
  bool length_normalize = false;
  std::uint64_t seed = 1;
};

std::vector<std::string> read_messages(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto first = line.find_first_not_of(" \t");
    if (line[first] == '{') {
      Json j;
      try {
        j = Json::parse(line);
      } catch (const Json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
      }
      if (!j.contains("message") || !j["message"].is_string()) {
        throw ParseError("missing string field \"message\"", line_no);
      }
      out.push_back(j["message"].get<std::string>());
    } else {
      out.push_back(line);
    }
  }
  return out;
}

std::optional<MetaWord> parse_override(const std::string& text, const AttributeSchema& schema) {
  if (text.empty()) return std::nullopt;
  try {
    return parse_metaword(text, schema);
  } catch (const Error& e) {
    throw UsageError(std::string("--override: ") + e.what());
  }
}

int run_generate(const GenerateArgs& a) {
  if (a.message.empty() == a.input.empty()) throw UsageError("give exactly one of --message or --input");
  if (a.samples < 1 || a.beam < 1 || a.max_length < 1) {
    throw UsageError("--n, --beam and --max-length must be positive");
  }
  const GeneratorCheckpoint ckpt = load_generator(a.model);
  const Generator& model = ckpt.model;
  GenerateOptions opts;
  opts.samples = a.samples;
  opts.beam.beam = a.beam;
  opts.beam.max_length = a.max_length;
  opts.beam.length_normalize = a.length_normalize;
  opts.override_metaword = parse_override(a.override_text, model.config.schema);
  if (a.predictor.empty()) {
    std::string missing;
    for (const auto& spec : model.config.schema.variables()) {
      if (!opts.override_metaword || !opts.override_metaword->find(spec.key)) {
        missing += (missing.empty() ? "" : ",") + spec.key;
      }
    }
    if (!missing.empty()) throw UsageError("no --predictor given and --override lacks " + missing);
  }

  std::optional<Predictor> predictor;
  if (!a.predictor.empty()) predictor = load_predictor(a.predictor);

  const std::vector<std::string> messages =
      a.input.empty() ? std::vector<std::string>{a.message} : read_messages(a.input);
  std::optional<std::ofstream> file;
  if (!a.output.empty()) file = open_out(a.output);
  std::ostream& out = file ? *file : std::cout;
  std::mt19937_64 rng(substream(a.seed, "sampling"));
  for (const auto& m : messages) {
    for (const auto& g : generate(model, predictor ? &*predictor : nullptr, m, opts, rng)) {
      write_generation(out, g);
    }
  }
  return 0;
}

struct TraceArgs {
  std::string model, predictor, message, override_text, output;
  int max_length = kDefaultMaxDecode;
  std::uint64_t seed = 1;
};

int run_trace(const TraceArgs& a) {
  if (a.max_length < 1) throw UsageError("--max-length must be positive");
  const GeneratorCheckpoint ckpt = load_generator(a.model);
  const Generator& model = ckpt.model;
  const AttributeSchema& schema = model.config.schema;
  MetaWord mw = parse_override(a.override_text, schema).value_or(MetaWord{schema.id(), {}});
  bool complete = true;
  for (const auto& spec : schema.variables()) complete = complete && mw.find(spec.key);
  if (!complete) {
    if (a.predictor.empty()) {
      throw UsageError("--override must set every variable of " + schema.id() +
                       " unless --predictor is given");
    }
    const Predictor pr = load_predictor(a.predictor);
    std::mt19937_64 rng(substream(a.seed, "sampling"));
    const auto dist = predict_distribution(pr, pr.message_vocab.encode(tokenize(a.message)));
    mw = merge_metaword(sample_metaword(dist, schema, rng), mw, schema);
  }
  const auto trace = trace_decode(model, a.message, mw, a.max_length);
  std::optional<std::ofstream> file;
  if (!a.output.empty()) file = open_out(a.output);
  std::ostream& out = file ? *file : std::cout;
  write_trace_csv(out, schema, trace);
  std::cerr << "meta-word " << mw.to_string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string generated, references, model, embeddings, json;
  std::string format = "table";
};

int run_evaluate(const EvaluateArgs& a) {
  EvaluateInputs in;
  in.generated = read_generated(a.generated);
  in.references = read_references(a.references);
  std::optional<GeneratorCheckpoint> ckpt;
  std::optional<EmbeddingSource> emb;
  if (!a.model.empty()) {
    ckpt = load_generator(a.model);
    in.model = &ckpt->model;
  }
  if (!a.embeddings.empty()) {
    emb = EmbeddingSource::from_file(a.embeddings);
  } else if (ckpt) {
    emb = EmbeddingSource::from_model(ckpt->model);
  }
  if (emb) in.embeddings = &*emb;
  const EvalReport report = evaluate(in);
  const Json j = report_to_json(report);
  if (!a.json.empty()) open_out(a.json) << j.dump(2) << '\n';
  if (a.format == "json") {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << report_table(report);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-word conditioned response generation"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "TOML/INI file with one [section] per subcommand; flags override it");

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Annotate a raw JSONL corpus with meta-words");
  input_file(prepare, "--input,-i", prep.input, "Raw {message, response} JSONL")->required();
  output_file(prepare, "--output,-o", prep.output,
              "Annotated JSONL; .vocab.json and .stats.json are written beside it")
      ->required();
  prepare->add_option("--attributes", prep.attributes, "Meta-word variables (all, none or RL,DA,...)")
      ->capture_default_str();
  prepare->add_option("--max-tokens", prep.max_tokens, "Drop pairs with a longer side")
      ->capture_default_str();
  prepare->add_option("--top-k", prep.top_k, "Frequent words excluded from copy ratio")
      ->capture_default_str();
  prepare->add_option("--max-vocab", prep.max_vocab, "Ordinary tokens kept per vocabulary")
      ->capture_default_str();
  prepare->add_option("--max-responses-per-message", prep.per_message, "0 keeps all")
      ->capture_default_str();
  input_file(prepare, "--stopwords", prep.stopwords, "Stopword list, one per line (builtin English list by default)");

  SynthArgs syn;
  auto* synth = app.add_subcommand("synth", "Write the synthetic controllable corpus");
  output_file(synth, "--output,-o", syn.output, "Raw JSONL")->required();
  synth->add_option("--pairs", syn.pairs, "Number of pairs")->capture_default_str();
  synth->add_option("--seed", syn.seed, "Random seed")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the generator");
  input_file(train_cmd, "--data,-d", tr.data, "Annotated JSONL")->required();
  input_file(train_cmd, "--validation", tr.validation, "Annotated validation JSONL (split off --data otherwise)");
  output_file(train_cmd, "--output,-o", tr.output, "Checkpoint path")->required();
  output_file(train_cmd, "--log", tr.log, "Training log, one JSON object per epoch (stderr by default)");
  input_file(train_cmd, "--stats", tr.stats, "Frequency statistics (default: <data>.stats.json if present)");
  train_cmd->add_option("--attributes", tr.attributes, "Meta-word variables")->capture_default_str();
  train_cmd->add_option("--dim", tr.config.d, "Hidden and embedding size")->capture_default_str();
  train_cmd->add_option("--lambda", tr.config.lambda, "State update loss weight")->capture_default_str();
  train_cmd->add_option("--batch-size", tr.config.batch_size)->capture_default_str();
  train_cmd->add_option("--clip-norm", tr.config.clip_norm)->capture_default_str();
  train_cmd->add_option("--max-epochs", tr.config.max_epochs)->capture_default_str();
  train_cmd->add_option("--patience", tr.config.patience, "Epochs without improvement before stopping")
      ->capture_default_str();
  train_cmd->add_option("--seed", tr.config.seed)->capture_default_str();
  train_cmd->add_option("--rho", tr.config.rho, "Adadelta decay")->capture_default_str();
  train_cmd->add_option("--epsilon", tr.config.epsilon, "Adadelta epsilon")->capture_default_str();
  train_cmd->add_option("--init-scale", tr.config.init_scale, "Uniform init range")->capture_default_str();
  train_cmd->add_option("--validation-fraction", tr.config.validation_fraction)->capture_default_str();
  train_cmd->add_option("--max-vocab", tr.config.max_vocab)->capture_default_str();
  train_cmd->add_option("--top-k", tr.config.top_k, "Used when statistics are rebuilt")
      ->capture_default_str();

  PredictorArgs pa;
  auto* predict_cmd = app.add_subcommand("train-predictor", "Train the meta-word predictor");
  input_file(predict_cmd, "--data,-d", pa.data, "Annotated JSONL")->required();
  input_file(predict_cmd, "--validation", pa.validation, "Annotated validation JSONL");
  output_file(predict_cmd, "--output,-o", pa.output, "Checkpoint path")->required();
  output_file(predict_cmd, "--log", pa.log, "Training log (stderr by default)");
  predict_cmd->add_option("--attributes", pa.attributes)->capture_default_str();
  predict_cmd->add_option("--dim", pa.config.d)->capture_default_str();
  predict_cmd->add_option("--eta", pa.config.eta, "Entropy weight")->capture_default_str();
  predict_cmd->add_option("--batch-size", pa.config.batch_size)->capture_default_str();
  predict_cmd->add_option("--clip-norm", pa.config.clip_norm)->capture_default_str();
  predict_cmd->add_option("--max-epochs", pa.config.max_epochs)->capture_default_str();
  predict_cmd->add_option("--patience", pa.config.patience)->capture_default_str();
  predict_cmd->add_option("--seed", pa.config.seed)->capture_default_str();
  predict_cmd->add_option("--rho", pa.config.rho)->capture_default_str();
  predict_cmd->add_option("--epsilon", pa.config.epsilon)->capture_default_str();
  predict_cmd->add_option("--validation-fraction", pa.config.validation_fraction)->capture_default_str();
  predict_cmd->add_option("--max-vocab", pa.config.max_vocab)->capture_default_str();

  GenerateArgs ga;
  auto* gen_cmd = app.add_subcommand("generate", "Generate responses as JSONL");
  input_file(gen_cmd, "--model,-m", ga.model, "Generator checkpoint")->required();
  input_file(gen_cmd, "--predictor,-p", ga.predictor, "Predictor checkpoint (needed unless --override sets every variable)");
  gen_cmd->add_option("--message", ga.message, "A single message");
  input_file(gen_cmd, "--input,-i", ga.input, "Messages: plain lines or JSONL with a message field");
  gen_cmd->add_option("--override", ga.override_text, "e.g. RL=8,DA=yes-no-question,MU=false,CR=0.2,S=0.6");
  gen_cmd->add_option("--n", ga.samples, "Meta-words (and responses) per message")->capture_default_str();
  gen_cmd->add_option("--beam", ga.beam)->capture_default_str();
  gen_cmd->add_option("--max-length", ga.max_length, "Tokens per response including EOS")
      ->capture_default_str();
  gen_cmd->add_flag("--length-normalize", ga.length_normalize, "Rank beams by mean token log prob");
  gen_cmd->add_option("--seed", ga.seed)->capture_default_str();
  output_file(gen_cmd, "--output,-o", ga.output, "Output JSONL (stdout by default)");

  TraceArgs ta;
  auto* trace_cmd = app.add_subcommand("trace", "Greedy decode with a per-step memory trace as CSV");
  input_file(trace_cmd, "--model,-m", ta.model, "Generator checkpoint")->required();
  input_file(trace_cmd, "--predictor,-p", ta.predictor, "Predictor checkpoint");
  trace_cmd->add_option("--message", ta.message, "Message")->required();
  trace_cmd->add_option("--override", ta.override_text, "Meta-word, as for generate");
  trace_cmd->add_option("--max-length", ta.max_length)->capture_default_str();
  trace_cmd->add_option("--seed", ta.seed)->capture_default_str();
  output_file(trace_cmd, "--output,-o", ta.output, "CSV path (stdout by default)");

  EvaluateArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score generated responses against references");
  input_file(eval_cmd, "--generated,-g", ea.generated, "Generation JSONL")->required();
  input_file(eval_cmd, "--references,-r", ea.references, "Reference JSONL (response or responses)")
      ->required();
  input_file(eval_cmd, "--model,-m", ea.model, "Generator checkpoint (expression, perplexity, embeddings)");
  input_file(eval_cmd, "--embeddings", ea.embeddings, "Word vectors: token v1 v2 ... per line");
  output_file(eval_cmd, "--json", ea.json, "Also write the report as JSON");
  eval_cmd->add_option("--format", ea.format, "table or json")
      ->check(CLI::IsMember({"table", "json"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*prepare) return run_prepare(prep);
    if (*synth) return run_synth(syn);
    if (*train_cmd) return run_train(tr);
    if (*predict_cmd) return run_train_predictor(pa);
    if (*gen_cmd) return run_generate(ga);
    if (*trace_cmd) return run_trace(ta);
    if (*eval_cmd) return run_evaluate(ea);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
