#include "mwgen/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

#include "mwgen/error.hpp"
#include "mwgen/seq2seq.hpp"

namespace mwgen {

namespace {

struct Bound {
  std::map<std::string, Tensor> t;
  const Tensor& operator[](const std::string& name) const { return t.at(name); }
};

Bound bind_all(ad::Tape& tape, const ParameterSet& params) {
  Bound b;
  for (const auto& [name, m] : params) b.t.emplace(name, tape.parameter(m));
  return b;
}

Tensor message_summary(const Bound& p, int d, std::span<const TokenIds> messages) {
  const EncoderStates enc =
      bigru_encode(p["emb"], {p["enc.fwd.W"], p["enc.fwd.U"], p["enc.fwd.b"]},
                   {p["enc.bwd.W"], p["enc.bwd.U"], p["enc.bwd.b"]}, d, messages);
  const Tensor both[] = {enc.forward_last, enc.backward_first};
  return ad::concat_rows(both);
}

Tensor affine(const Bound& p, const std::string& prefix, const Tensor& h) {
  return ad::add_bias(ad::matmul(p[prefix + ".W"], h), p[prefix + ".b"]);
}

std::string head(const VariableSpec& spec) { return "head." + spec.key; }

}  // namespace

ParameterSet make_predictor_parameters(int d, std::size_t message_vocab,
                                       const AttributeSchema& schema) {
  if (d < 1) throw Error("hidden size must be positive");
  ParameterSet p;
  p["emb"] = Matrix::Zero(d, static_cast<Eigen::Index>(message_vocab));
  for (const char* dir : {"enc.fwd", "enc.bwd"}) {
    p[std::string(dir) + ".W"] = Matrix::Zero(3 * d, d);
    p[std::string(dir) + ".U"] = Matrix::Zero(3 * d, d);
    p[std::string(dir) + ".b"] = Matrix::Zero(3 * d, 1);
  }
  for (const auto& spec : schema.variables()) {
    if (spec.type == VarType::kCategorical) {
      const auto C = static_cast<Eigen::Index>(spec.categories.size());
      p[head(spec) + ".W"] = Matrix::Zero(C, 2 * d);
      p[head(spec) + ".b"] = Matrix::Zero(C, 1);
    } else {
      for (const char* part : {".mu", ".logvar"}) {
        p[head(spec) + part + ".W"] = Matrix::Zero(1, 2 * d);
        p[head(spec) + part + ".b"] = Matrix::Zero(1, 1);
      }
    }
  }
  return p;
}

Predictor make_predictor(int d, const AttributeSchema& schema, Vocab message_vocab,
                         std::uint64_t seed, double init_scale) {
  Predictor pr;
  pr.d = d;
  pr.schema = schema;
  pr.message_vocab = std::move(message_vocab);
  pr.params = make_predictor_parameters(d, pr.message_vocab.size(), schema);
  randomize(pr.params, seed, init_scale);
  return pr;
}

std::vector<MetaWordDistribution> predict_distributions(const Predictor& predictor,
                                                        std::span<const TokenIds> messages) {
  ad::Tape tape(false);
  const Bound p = bind_all(tape, predictor.params);
  const Tensor h = message_summary(p, predictor.d, messages);
  std::vector<MetaWordDistribution> out(messages.size());
  for (auto& dist : out) dist.schema_id = predictor.schema.id();
  for (const auto& spec : predictor.schema.variables()) {
    if (spec.type == VarType::kCategorical) {
      const Matrix probs = ad::softmax(affine(p, head(spec), h)).value();
      for (std::size_t b = 0; b < out.size(); ++b) {
        out[b].variables.push_back({spec.key, spec.type, probs.col(static_cast<Eigen::Index>(b)), 0.0, 0.0});
      }
    } else {
      const Matrix mu = affine(p, head(spec) + ".mu", h).value();
      const Matrix lv = affine(p, head(spec) + ".logvar", h).value();
      for (std::size_t b = 0; b < out.size(); ++b) {
        const auto col = static_cast<Eigen::Index>(b);
        out[b].variables.push_back({spec.key, spec.type, {}, mu(0, col), lv(0, col)});
      }
    }
  }
  return out;
}

MetaWordDistribution predict_distribution(const Predictor& predictor, const TokenIds& message) {
  const TokenIds batch[] = {message};
  return predict_distributions(predictor, batch).front();
}

MetaWord sample_metaword(const MetaWordDistribution& distribution, const AttributeSchema& schema,
                         std::mt19937_64& rng) {
  MetaWord mw;
  mw.schema_id = schema.id();
  for (const auto& spec : schema.variables()) {
    auto it = std::find_if(distribution.variables.begin(), distribution.variables.end(),
                           [&](const VariableDistribution& v) { return v.key == spec.key; });
    if (it == distribution.variables.end()) throw SchemaError(spec.key, "no predicted distribution");
    MetaWordVariable var;
    var.key = spec.key;
    var.type = spec.type;
    if (spec.type == VarType::kCategorical) {
      if (static_cast<std::size_t>(it->probs.size()) != spec.categories.size()) {
        throw SchemaError(spec.key, "distribution size differs from the category inventory");
      }
      const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      double cdf = 0.0;
      std::size_t pick = spec.categories.size() - 1;
      for (std::size_t c = 0; c < spec.categories.size(); ++c) {
        cdf += it->probs(static_cast<Eigen::Index>(c));
        if (u < cdf) {
          pick = c;
          break;
        }
      }
      while (pick > 0 && it->probs(static_cast<Eigen::Index>(pick)) <= 0.0) --pick;
      var.category = spec.categories[pick];
    } else {
      const double sd = std::exp(0.5 * it->log_var);
      std::normal_distribution<double> normal(it->mu, sd);
      var.real = std::clamp(normal(rng), 0.0, 1.0);
    }
    mw.variables.push_back(std::move(var));
  }
  return mw;
}

namespace {

PredictorLoss loss_on(const Bound& p, const Predictor& predictor,
                      std::span<const TokenIds> messages, std::span<const MetaWord> targets,
                      double eta) {
  if (messages.empty()) throw Error("predictor loss: empty batch");
  if (messages.size() != targets.size()) throw Error("predictor loss: batch size mismatch");
  ad::Tape& tape = *p.t.begin()->second.tape();
  const Tensor h = message_summary(p, predictor.d, messages);
  const auto B = static_cast<Eigen::Index>(messages.size());
  const double log_2pi = std::log(2.0 * std::numbers::pi);

  std::vector<Tensor> loglik, entropy;
  for (const auto& spec : predictor.schema.variables()) {
    if (spec.type == VarType::kCategorical) {
      std::vector<int> gold;
      for (const auto& mw : targets) {
        const MetaWordVariable* v = mw.find(spec.key);
        if (!v) throw SchemaError(spec.key, "missing from target meta-word");
        const int c = spec.category_index(v->category);
        if (c < 0) throw SchemaError(spec.key, "unknown category '" + v->category + "'");
        gold.push_back(c);
      }
      const Tensor logits = affine(p, head(spec), h);
      const Tensor logp = ad::log_softmax(logits);
      loglik.push_back(ad::sum(ad::pick(logp, gold)));
      entropy.push_back(ad::scale(ad::sum(ad::mul(ad::softmax(logits), logp)), -1.0));
    } else {
      Matrix x(1, B);
      for (Eigen::Index b = 0; b < B; ++b) {
        const MetaWordVariable* v = targets[static_cast<std::size_t>(b)].find(spec.key);
        if (!v) throw SchemaError(spec.key, "missing from target meta-word");
        x(0, b) = v->real;
      }
      const Tensor mu = affine(p, head(spec) + ".mu", h);
      const Tensor lv = affine(p, head(spec) + ".logvar", h);
      const Tensor sq = ad::square(ad::add_const(mu, -x));
      const Tensor per = ad::add_scalar(ad::add(lv, ad::mul(sq, ad::exp(ad::scale(lv, -1.0)))), log_2pi);
      loglik.push_back(ad::scale(ad::sum(per), -0.5));
      entropy.push_back(ad::scale(ad::sum(ad::add_scalar(lv, log_2pi + 1.0)), 0.5));
    }
  }
  PredictorLoss out;
  if (loglik.empty()) {
    out.total = tape.constant(Matrix::Zero(1, 1));
    return out;
  }
  const Tensor ll = ad::sum(ad::concat_cols(loglik));
  const Tensor ent = ad::sum(ad::concat_cols(entropy));
  out.nll_sum = -ll.value()(0, 0);
  const double inv = 1.0 / static_cast<double>(B);
  out.total = ad::scale(ad::add(ad::scale(ll, -1.0), ad::scale(ent, -eta)), inv);
  return out;
}

}  // namespace

PredictorLoss predictor_loss(ad::Tape& tape, const Predictor& predictor,
                             std::span<const TokenIds> messages,
                             std::span<const MetaWord> targets, double eta) {
  return loss_on(bind_all(tape, predictor.params), predictor, messages, targets, eta);
}

PredictorGradients predictor_gradients(const Predictor& predictor,
                                       std::span<const TokenIds> messages,
                                       std::span<const MetaWord> targets, double eta) {
  ad::Tape tape;
  const Bound bound = bind_all(tape, predictor.params);
  const PredictorLoss loss = loss_on(bound, predictor, messages, targets, eta);
  PredictorGradients out;
  out.loss = loss.total.value()(0, 0);
  const ad::GradientMap grads = tape.backward(loss.total);
  for (const auto& [name, t] : bound.t) {
    auto it = grads.find(t.id());
    out.grads.emplace(name, it != grads.end() ? it->second : Matrix::Zero(t.rows(), t.cols()));
  }
  return out;
}

namespace {

struct Encoded {
  std::vector<TokenIds> messages;
  std::vector<MetaWord> targets;
};

Encoded encode_pairs(const Predictor& pr, std::span<const AnnotatedPair> pairs) {
  Encoded e;
  for (const auto& p : pairs) {
    const Tokens tokens = tokenize(p.message);
    if (tokens.empty()) throw Error("empty message");
    e.messages.push_back(pr.message_vocab.encode(tokens));
    e.targets.push_back(project_metaword(p.metaword, pr.schema));
    pr.schema.validate(e.targets.back());
  }
  return e;
}

double mean_nll(const Predictor& pr, const Encoded& data) {
  double total = 0.0;
  constexpr std::size_t kBatch = 64;
  for (std::size_t start = 0; start < data.messages.size(); start += kBatch) {
    const std::size_t n = std::min(kBatch, data.messages.size() - start);
    ad::Tape tape(false);
    total += predictor_loss(tape, pr, std::span(data.messages).subspan(start, n),
                            std::span(data.targets).subspan(start, n), 0.0)
                 .nll_sum;
  }
  return total / static_cast<double>(data.messages.size());
}

}  // namespace

double predictor_nll(const Predictor& predictor, std::span<const AnnotatedPair> pairs) {
  if (pairs.empty()) throw Error("predictor: empty dataset");
  return mean_nll(predictor, encode_pairs(predictor, pairs));
}

PredictorResult train_predictor(std::span<const AnnotatedPair> train,
                                std::span<const AnnotatedPair> validation,
                                const PredictorConfig& config, std::ostream* log) {
  if (train.empty()) throw Error("predictor: empty training set");
  if (validation.empty()) throw Error("predictor: empty validation set");
  if (config.batch_size < 1 || config.max_epochs < 1 || config.patience < 1) {
    throw Error("predictor: batch size, epochs and patience must be positive");
  }
  std::vector<Tokens> docs;
  for (const auto& p : train) docs.push_back(tokenize(p.message));
  Predictor model = make_predictor(config.d, config.schema, Vocab::build(docs, config.max_vocab),
                                   substream(config.seed, "predictor-init"), config.init_scale);
  const Encoded train_set = encode_pairs(model, train);
  const Encoded val_set = encode_pairs(model, validation);

  PredictorResult result;
  result.predictor = model;
  double best = std::numeric_limits<double>::infinity();
  int stagnant = 0;
  AdadeltaState state;
  std::mt19937_64 rng(substream(config.seed, "predictor-batching"));
  std::vector<std::size_t> order(train_set.messages.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    PredictorEpoch rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<TokenIds> messages;
      std::vector<MetaWord> targets;
      for (std::size_t k = start; k < end; ++k) {
        messages.push_back(train_set.messages[order[k]]);
        targets.push_back(train_set.targets[order[k]]);
      }
      PredictorGradients step = predictor_gradients(model, messages, targets, config.eta);
      rec.train_loss += step.loss;
      adadelta_step(model.params, std::move(step.grads), state, config.rho, config.epsilon,
                    config.clip_norm);
      ++batches;
    }
    rec.train_loss /= static_cast<double>(batches);
    rec.val_nll = mean_nll(model, val_set);
    rec.improved = rec.val_nll < best;
    if (rec.improved) {
      best = rec.val_nll;
      result.best_epoch = epoch;
      result.predictor.params = model.params;
      stagnant = 0;
    } else {
      ++stagnant;
    }
    result.history.push_back(rec);
    if (log) {
      Json j;
      j["epoch"] = rec.epoch;
      j["train_loss"] = rec.train_loss;
      j["val_nll"] = rec.val_nll;
      j["improved"] = rec.improved;
      j["eta"] = config.eta;
      j["attributes"] = config.schema.id();
      *log << j.dump() << '\n' << std::flush;
    }
    if (stagnant >= config.patience) break;
  }
  return result;
}

void save_predictor(const std::filesystem::path& path, const PredictorResult& result,
                    const PredictorConfig& config) {
  Container c;
  c.header["kind"] = "predictor";
  c.header["format_version"] = kCheckpointVersion;
  Json cfg;
  cfg["d"] = config.d;
  cfg["eta"] = config.eta;
  cfg["batch_size"] = config.batch_size;
  cfg["clip_norm"] = config.clip_norm;
  cfg["max_epochs"] = config.max_epochs;
  cfg["patience"] = config.patience;
  cfg["attributes"] = config.schema.id();
  cfg["seed"] = config.seed;
  cfg["rho"] = config.rho;
  cfg["epsilon"] = config.epsilon;
  cfg["init_scale"] = config.init_scale;
  cfg["validation_fraction"] = config.validation_fraction;
  cfg["max_vocab"] = config.max_vocab;
  c.header["config"] = cfg;
  c.header["d"] = result.predictor.d;
  c.header["attributes"] = result.predictor.schema.id();
  c.header["message_vocab"] = vocab_to_json(result.predictor.message_vocab);
  Json hist = Json::array();
  for (const auto& r : result.history) {
    hist.push_back({{"epoch", r.epoch},
                    {"train_loss", r.train_loss},
                    {"val_nll", r.val_nll},
                    {"improved", r.improved}});
  }
  c.header["history"] = hist;
  c.tensors = result.predictor.params;
  save_container(path, c);
}

Predictor load_predictor(const std::filesystem::path& path) {
  Container c = load_container(path);
  if (c.header.value("kind", "") != "predictor") {
    throw ParseError(path.string() + " is not a predictor checkpoint");
  }
  Predictor pr;
  pr.d = c.header.at("d").get<int>();
  pr.schema = AttributeSchema::parse(c.header.at("attributes").get<std::string>());
  pr.message_vocab = vocab_from_json(c.header.at("message_vocab"));
  const ParameterSet expected = make_predictor_parameters(pr.d, pr.message_vocab.size(), pr.schema);
  for (const auto& [name, m] : expected) {
    auto it = c.tensors.find(name);
    if (it == c.tensors.end() || it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
      throw ParseError(path.string() + ": missing or misshapen tensor " + name);
    }
  }
  if (c.tensors.size() != expected.size()) {
    throw ParseError(path.string() + ": unexpected extra tensors");
  }
  pr.params = std::move(c.tensors);
  return pr;
}

}  // namespace mwgen
