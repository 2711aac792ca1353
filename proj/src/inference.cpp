#include "mwgen/inference.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include "mwgen/error.hpp"
#include "mwgen/io.hpp"

namespace mwgen {

namespace {

struct Candidate {
  double score;
  std::size_t parent;
  int token;
};

double rank_key(const Hypothesis& h, bool normalize) {
  if (!normalize || h.tokens.empty()) return h.log_prob;
  return h.log_prob / static_cast<double>(h.tokens.size());
}

bool is_banned(const BeamOptions& o, int token) {
  return std::find(o.banned.begin(), o.banned.end(), token) != o.banned.end();
}

}  // namespace

std::vector<Hypothesis> beam_search(BeamScorer& scorer, const BeamOptions& options) {
  if (options.beam < 1) throw Error("beam size must be at least 1");
  if (options.max_length < 1) throw Error("max length must be at least 1");
  const auto width = static_cast<std::size_t>(options.beam);
  const auto ranked = [&](const Hypothesis& a, const Hypothesis& b) {
    return rank_key(a, options.length_normalize) > rank_key(b, options.length_normalize);
  };
  scorer.reset();

  std::vector<Hypothesis> live(1), finished;
  std::vector<int> parents = {0}, last = {options.bos};
  for (int len = 1; len <= options.max_length && !live.empty(); ++len) {
    const Matrix logp = scorer.step(parents, last);

    std::vector<Candidate> cands;
    cands.reserve(live.size() * static_cast<std::size_t>(logp.rows()));
    for (std::size_t i = 0; i < live.size(); ++i) {
      for (Eigen::Index v = 0; v < logp.rows(); ++v) {
        if (is_banned(options, static_cast<int>(v))) continue;
        cands.push_back({live[i].log_prob + logp(v, static_cast<Eigen::Index>(i)), i,
                         static_cast<int>(v)});
      }
    }
    const std::size_t keep = std::min(2 * width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });

    // End tokens ranked inside the beam finish; the beam refills from the rest.
    std::vector<Hypothesis> next;
    parents.clear();
    last.clear();
    for (std::size_t k = 0; k < keep && next.size() < width; ++k) {
      const Candidate& c = cands[k];
      const bool ends = c.token == options.eos;
      if (ends && k >= width) continue;
      Hypothesis h = live[c.parent];
      h.tokens.push_back(c.token);
      h.log_prob = c.score;
      if (ends || len == options.max_length) {
        h.finished = ends;
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
        parents.push_back(static_cast<int>(c.parent));
        last.push_back(c.token);
      }
    }
    live = std::move(next);

    // Scores only fall, so no live hypothesis can pass the width-th finished one.
    if (!options.length_normalize && finished.size() >= width && !live.empty()) {
      std::stable_sort(finished.begin(), finished.end(), ranked);
      if (finished[width - 1].log_prob >= live.front().log_prob) break;
    }
  }
  std::stable_sort(finished.begin(), finished.end(), ranked);
  if (finished.size() > width) finished.resize(width);
  return finished;
}

Hypothesis greedy_search(BeamScorer& scorer, const BeamOptions& options) {
  if (options.max_length < 1) throw Error("max length must be at least 1");
  scorer.reset();
  Hypothesis h;
  std::vector<int> parents = {0}, last = {options.bos};
  for (int len = 1; len <= options.max_length; ++len) {
    const Matrix logp = scorer.step(parents, last);
    int best = -1;
    for (Eigen::Index v = 0; v < logp.rows(); ++v) {
      if (is_banned(options, static_cast<int>(v))) continue;
      if (best < 0 || logp(v, 0) > logp(best, 0)) best = static_cast<int>(v);
    }
    if (best < 0) throw Error("every token is banned");
    h.tokens.push_back(best);
    h.log_prob += logp(best, 0);
    if (best == options.eos) {
      h.finished = true;
      break;
    }
    last = {best};
  }
  return h;
}

GeneratorScorer::GeneratorScorer(const Generator& model, const TokenIds& message,
                                 const MetaWord& metaword)
    : model_(model), message_(message), metaword_(project_metaword(metaword, model.config.schema)) {
  if (message_.empty()) throw Error("empty message");
  model_.config.schema.validate(metaword_);
  reset();
}

Eigen::Index GeneratorScorer::vocab_size() const {
  return static_cast<Eigen::Index>(model_.response_vocab.size());
}

void GeneratorScorer::reset() {
  tape_ = std::make_unique<ad::Tape>(false);
  params_ = mwgen::bind(*tape_, model_.params);
  const TokenIds batch[] = {message_};
  enc_ = encode(params_, batch);
  state_ = init_decoder_state(params_, enc_);
  const MetaWord mws[] = {metaword_};
  panel_ = init_panel(params_, model_.meta, model_.config.schema, mws);
  states_ = {state_};
  panels_ = {panel_};
  read_weights_.resize(0, 0);
  context_weights_.resize(0, 0);
}

namespace {

// Places hypothesis j of cell i at column i * n + j.
Tensor interleave(ad::Tape& tape, const std::vector<Panel>& panels, Tensor Panel::*field) {
  const auto n = static_cast<Eigen::Index>(panels.size());
  const Matrix& first = (panels.front().*field).value();
  const Eigen::Index cells = panels.front().cells;
  Matrix out(first.rows(), cells * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Matrix& m = (panels[static_cast<std::size_t>(j)].*field).value();
    for (Eigen::Index i = 0; i < cells; ++i) out.col(i * n + j) = m.col(i);
  }
  return tape.constant(std::move(out));
}

}  // namespace

// Each hypothesis runs as its own one-column pass, so its scores do not depend
// on what else is in the beam.
Matrix GeneratorScorer::step(std::span<const int> parents, std::span<const int> last_tokens) {
  if (parents.size() != last_tokens.size() || parents.empty()) {
    throw Error("scorer step: parents and tokens must be non-empty and aligned");
  }
  const auto n = static_cast<Eigen::Index>(parents.size());
  std::vector<Tensor> states;
  std::vector<Panel> panels;
  Matrix log_probs, states_out, read_weights, context_weights;
  bool reads = true;
  for (Eigen::Index j = 0; j < n; ++j) {
    const int src = parents[static_cast<std::size_t>(j)];
    if (src < 0 || static_cast<std::size_t>(src) >= states_.size()) {
      throw Error("scorer step: parent out of range");
    }
    Panel panel = panels_[static_cast<std::size_t>(src)];
    const Tensor& s_prev = states_[static_cast<std::size_t>(src)];
    const AttentionRead att = attention_context(params_, s_prev, enc_);
    Matrix read;
    const DecoderStep out =
        decoder_step(params_, s_prev, last_tokens.subspan(static_cast<std::size_t>(j), 1), att.context,
                     [&](const Tensor& s) {
                       panel = state_update(params_, panel, s).panel;
                       const DifferenceRead r = difference_read(params_, panel, s);
                       if (r.weights.valid()) read = r.weights.value();
                       return r.output;
                     });
    if (j == 0) {
      log_probs.resize(out.log_probs.rows(), n);
      states_out.resize(out.state.rows(), n);
      context_weights.resize(att.weights.rows(), n);
      read_weights.resize(read.rows(), n);
    }
    log_probs.col(j) = out.log_probs.value().col(0);
    states_out.col(j) = out.state.value().col(0);
    context_weights.col(j) = att.weights.value().col(0);
    if (read.size() > 0) {
      read_weights.col(j) = read.col(0);
    } else {
      reads = false;
    }
    states.push_back(out.state);
    panels.push_back(std::move(panel));
  }
  states_ = std::move(states);
  panels_ = std::move(panels);
  state_ = tape_->constant(std::move(states_out));
  panel_ = Panel{{}, {}, {}, panels_.front().cells, n};
  if (panel_.cells > 0) {
    panel_.keys = interleave(*tape_, panels_, &Panel::keys);
    panel_.goals = interleave(*tape_, panels_, &Panel::goals);
    panel_.values = interleave(*tape_, panels_, &Panel::values);
  }
  read_weights_ = reads ? std::move(read_weights) : Matrix();
  context_weights_ = std::move(context_weights);
  return log_probs;
}

TokenIds encode_message(const Generator& model, const std::string& message) {
  const Tokens tokens = tokenize(message);
  if (tokens.empty()) throw Error("empty message");
  return model.message_vocab.encode(tokens);
}

std::vector<Hypothesis> decode(const Generator& model, const std::string& message,
                               const MetaWord& metaword, const BeamOptions& options) {
  GeneratorScorer scorer(model, encode_message(model, message), metaword);
  return beam_search(scorer, options);
}

std::string detokenize(const Generator& model, const TokenIds& tokens) {
  std::string out;
  for (int id : tokens) {
    if (id == Vocab::kEos) break;
    if (!out.empty()) out += ' ';
    out += model.response_vocab.token(id);
  }
  return out;
}

std::vector<Generation> generate(const Generator& model, const Predictor* predictor,
                                 const std::string& message, const GenerateOptions& options,
                                 std::mt19937_64& rng) {
  if (options.samples < 1) throw Error("number of samples must be at least 1");
  const AttributeSchema& schema = model.config.schema;
  const TokenIds ids = encode_message(model, message);
  const MetaWord fixed =
      options.override_metaword ? *options.override_metaword : MetaWord{schema.id(), {}};

  std::vector<std::string> missing;
  for (const auto& spec : schema.variables()) {
    if (!fixed.find(spec.key)) missing.push_back(spec.key);
  }
  std::optional<MetaWordDistribution> dist;
  if (!missing.empty()) {
    if (!predictor) {
      std::string keys;
      for (const auto& k : missing) keys += (keys.empty() ? "" : ",") + k;
      throw SchemaError(keys, "no value given and no predictor available to sample one");
    }
    dist = predict_distribution(*predictor, predictor->message_vocab.encode(tokenize(message)));
  }

  std::vector<Generation> out;
  for (int k = 0; k < options.samples; ++k) {
    MetaWord mw = fixed;
    if (dist) mw = merge_metaword(sample_metaword(*dist, schema, rng), fixed, schema);
    mw = project_metaword(mw, schema);
    schema.validate(mw);
    GeneratorScorer scorer(model, ids, mw);
    const std::vector<Hypothesis> hyps = beam_search(scorer, options.beam);
    Generation g;
    g.message = message;
    g.metaword = mw;
    if (!hyps.empty()) {
      g.response = detokenize(model, hyps.front().tokens);
      g.log_prob = hyps.front().log_prob;
    }
    out.push_back(std::move(g));
  }
  return out;
}

void write_generation(std::ostream& out, const Generation& g) {
  Json j;
  j["message"] = g.message;
  j["metaword"] = metaword_to_json(g.metaword);
  j["response"] = g.response;
  j["log_prob"] = g.log_prob;
  out << j.dump() << '\n';
}

std::vector<TraceStep> trace_decode(const Generator& model, const std::string& message,
                                    const MetaWord& metaword, int max_length) {
  GeneratorScorer scorer(model, encode_message(model, message), metaword);
  BeamOptions options;
  options.max_length = max_length;
  std::vector<TraceStep> trace;
  std::vector<int> parents = {0}, last = {Vocab::kBos};
  for (int len = 1; len <= max_length; ++len) {
    const Matrix logp = scorer.step(parents, last);
    int best = -1;
    for (Eigen::Index v = 0; v < logp.rows(); ++v) {
      if (is_banned(options, static_cast<int>(v))) continue;
      if (best < 0 || logp(v, 0) > logp(best, 0)) best = static_cast<int>(v);
    }
    if (best == Vocab::kEos) break;
    TraceStep s;
    s.step = len;
    s.token = model.response_vocab.token(best);
    const Matrix dist = goal_distance(scorer.panel());
    s.distances = dist.rows() > 0 ? ad::Vector(dist.col(0)) : ad::Vector();
    const Matrix& w = scorer.read_weights();
    s.weights = w.rows() > 0 ? ad::Vector(w.col(0)) : ad::Vector();
    trace.push_back(std::move(s));
    last = {best};
  }
  return trace;
}

void write_trace_csv(std::ostream& out, const AttributeSchema& schema,
                     std::span<const TraceStep> trace) {
  out << "step,token";
  for (const auto& spec : schema.variables()) out << ",dist_" << spec.key;
  for (const auto& spec : schema.variables()) out << ",attn_" << spec.key;
  out << '\n';
  const auto fmt = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return std::string(buf);
  };
  for (const auto& s : trace) {
    std::string token = s.token;
    if (token.find_first_of(",\"") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : token) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      token = quoted + "\"";
    }
    out << s.step << ',' << token;
    for (Eigen::Index i = 0; i < s.distances.size(); ++i) out << ',' << fmt(s.distances(i));
    for (Eigen::Index i = 0; i < s.weights.size(); ++i) out << ',' << fmt(s.weights(i));
    out << '\n';
  }
}

}  // namespace mwgen
