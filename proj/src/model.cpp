#include "mwgen/model.hpp"

#include <random>
#include <sstream>

#include "mwgen/error.hpp"

namespace mwgen {

MetaVocab MetaVocab::standard() {
  MetaVocab vocab;
  auto add = [&vocab](const std::string& tok) {
    if (vocab.index_.emplace(tok, static_cast<int>(vocab.tokens_.size())).second) {
      vocab.tokens_.push_back(tok);
    }
  };
  const AttributeSchema schema = AttributeSchema::full();
  for (const auto& spec : schema.variables()) {
    for (const auto& word : tokenize(spec.phrase)) add(word);
  }
  for (const auto& spec : schema.variables()) {
    for (const auto& c : spec.categories) add(spec.key + ":" + c);
  }
  return vocab;
}

int MetaVocab::id(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw SchemaError(token, "token missing from meta-word embeddings");
  return it->second;
}

std::vector<int> MetaVocab::key_ids(const VariableSpec& spec) const {
  std::vector<int> ids;
  for (const auto& word : tokenize(spec.phrase)) ids.push_back(id(word));
  if (ids.empty()) throw SchemaError(spec.key, "empty key phrase");
  return ids;
}

int MetaVocab::value_id(const std::string& key, const std::string& category) const {
  return id(key + ":" + category);
}

ParameterSet make_generator_parameters(int d, std::size_t message_vocab,
                                       std::size_t response_vocab, std::size_t meta_vocab) {
  if (d < 1) throw Error("hidden size must be positive");
  const auto V = [](std::size_t n) { return static_cast<Eigen::Index>(n); };
  ParameterSet p;
  p["emb.message"] = Matrix::Zero(d, V(message_vocab));
  p["emb.response"] = Matrix::Zero(d, V(response_vocab));
  p["emb.meta"] = Matrix::Zero(d, V(meta_vocab));
  for (const char* dir : {"enc.fwd", "enc.bwd"}) {
    p[std::string(dir) + ".W"] = Matrix::Zero(3 * d, d);
    p[std::string(dir) + ".U"] = Matrix::Zero(3 * d, d);
    p[std::string(dir) + ".b"] = Matrix::Zero(3 * d, 1);
  }
  p["dec.W"] = Matrix::Zero(3 * d, 3 * d);
  p["dec.U"] = Matrix::Zero(3 * d, d);
  p["dec.b"] = Matrix::Zero(3 * d, 1);
  p["att.Ws"] = Matrix::Zero(d, d);
  p["att.Wh"] = Matrix::Zero(d, 2 * d);
  p["att.b"] = Matrix::Zero(d, 1);
  p["att.u"] = Matrix::Zero(1, d);
  p["init.W"] = Matrix::Zero(d, 2 * d);
  p["init.b"] = Matrix::Zero(d, 1);
  // Rows [0,d) gate, [d,2d) SUB, [2d,3d) ADD.
  p["gtmn.W"] = Matrix::Zero(3 * d, 3 * d);
  p["gtmn.b"] = Matrix::Zero(3 * d, 1);
  p["gtmn.U"] = Matrix::Zero(d, 2 * d);
  p["out.W"] = Matrix::Zero(V(response_vocab), 3 * d);
  p["out.b"] = Matrix::Zero(V(response_vocab), 1);
  return p;
}

void randomize(ParameterSet& params, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& [name, m] : params) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
  }
}

BoundParams bind(ad::Tape& tape, const ParameterSet& params) {
  BoundParams b;
  auto get = [&](const char* name) {
    auto it = params.find(name);
    if (it == params.end()) throw Error(std::string("missing parameter ") + name);
    Tensor t = tape.parameter(it->second);
    b.by_name.emplace(name, t);
    return t;
  };
  b.emb_message = get("emb.message");
  b.emb_response = get("emb.response");
  b.emb_meta = get("emb.meta");
  b.enc_fwd_W = get("enc.fwd.W");
  b.enc_fwd_U = get("enc.fwd.U");
  b.enc_fwd_b = get("enc.fwd.b");
  b.enc_bwd_W = get("enc.bwd.W");
  b.enc_bwd_U = get("enc.bwd.U");
  b.enc_bwd_b = get("enc.bwd.b");
  b.dec_W = get("dec.W");
  b.dec_U = get("dec.U");
  b.dec_b = get("dec.b");
  b.att_Ws = get("att.Ws");
  b.att_Wh = get("att.Wh");
  b.att_b = get("att.b");
  b.att_u = get("att.u");
  b.init_W = get("init.W");
  b.init_b = get("init.b");
  b.gtmn_W = get("gtmn.W");
  b.gtmn_b = get("gtmn.b");
  b.gtmn_U = get("gtmn.U");
  b.out_W = get("out.W");
  b.out_b = get("out.b");
  b.d = static_cast<int>(b.emb_response.rows());
  return b;
}

std::map<std::string, Matrix> collect_gradients(const ad::GradientMap& grads,
                                                const BoundParams& bound) {
  std::map<std::string, Matrix> out;
  for (const auto& [name, t] : bound.by_name) {
    auto it = grads.find(t.id());
    out[name] = it != grads.end() ? it->second : Matrix::Zero(t.rows(), t.cols());
  }
  return out;
}

std::uint64_t substream(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace mwgen
