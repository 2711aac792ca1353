#include "mwgen/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mwgen/error.hpp"
#include "mwgen/training.hpp"

namespace mwgen {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Tokens& s, int n) {
  NgramCounts out;
  const auto len = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + len <= s.size(); ++i) {
    ++out[std::vector<std::string>(s.begin() + static_cast<std::ptrdiff_t>(i),
                                   s.begin() + static_cast<std::ptrdiff_t>(i + len))];
  }
  return out;
}

std::size_t closest_length(const std::vector<Tokens>& refs, std::size_t c) {
  std::size_t best = refs.front().size();
  for (const auto& r : refs) {
    const auto d = [c](std::size_t x) { return x > c ? x - c : c - x; };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  return best;
}

}  // namespace

double bleu(std::span<const Tokens> hypotheses, std::span<const std::vector<Tokens>> references,
            int max_order) {
  if (hypotheses.size() != references.size()) {
    throw Error("bleu: " + std::to_string(hypotheses.size()) + " hypotheses but " +
                std::to_string(references.size()) + " reference entries");
  }
  if (max_order < 1) throw Error("bleu: max order must be positive");
  std::vector<double> matches(static_cast<std::size_t>(max_order), 0.0);
  std::vector<double> totals(static_cast<std::size_t>(max_order), 0.0);
  double hyp_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const Tokens& h = hypotheses[i];
    const auto& refs = references[i];
    if (refs.empty()) throw Error("bleu: hypothesis " + std::to_string(i) + " has no reference");
    hyp_len += static_cast<double>(h.size());
    ref_len += static_cast<double>(closest_length(refs, h.size()));
    for (int n = 1; n <= max_order; ++n) {
      const NgramCounts hc = ngrams(h, n);
      std::map<std::vector<std::string>, std::size_t> max_ref;
      for (const auto& r : refs) {
        for (const auto& [g, c] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
      }
      for (const auto& [g, c] : hc) {
        auto it = max_ref.find(g);
        const std::size_t clip = it == max_ref.end() ? 0 : std::min(c, it->second);
        matches[static_cast<std::size_t>(n - 1)] += static_cast<double>(clip);
        totals[static_cast<std::size_t>(n - 1)] += static_cast<double>(c);
      }
    }
  }
  if (hyp_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t k = 0; k < matches.size(); ++k) {
    const double p = totals[k] > 0.0 ? (matches[k] + kBleuEpsilon) / (totals[k] + kBleuEpsilon)
                                     : kBleuEpsilon;
    log_sum += std::log(p) / static_cast<double>(max_order);
  }
  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return bp * std::exp(log_sum);
}

double bleu(std::span<const Tokens> hypotheses, std::span<const Tokens> references, int max_order) {
  std::vector<std::vector<Tokens>> wrapped;
  wrapped.reserve(references.size());
  for (const auto& r : references) wrapped.push_back({r});
  return bleu(hypotheses, std::span<const std::vector<Tokens>>(wrapped), max_order);
}

double distinct_n(std::span<const Tokens> responses, int n) {
  if (n < 1) throw Error("distinct_n: n must be positive");
  std::set<std::vector<std::string>> seen;
  std::size_t total = 0;
  for (const auto& r : responses) {
    for (const auto& [g, c] : ngrams(r, n)) {
      seen.insert(g);
      total += c;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(seen.size()) / static_cast<double>(total);
}

EmbeddingSource::EmbeddingSource(std::unordered_map<std::string, ad::Vector> vectors,
                                 std::string origin)
    : vectors_(std::move(vectors)), origin_(std::move(origin)) {
  for (const auto& [tok, v] : vectors_) {
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_) throw Error("embedding for '" + tok + "' has the wrong dimension");
  }
}

EmbeddingSource EmbeddingSource::from_model(const Generator& model) {
  const Matrix& table = model.params.at("emb.response");
  std::unordered_map<std::string, ad::Vector> vectors;
  for (std::size_t id = Vocab::kReserved; id < model.response_vocab.size(); ++id) {
    vectors.emplace(model.response_vocab.token(static_cast<int>(id)),
                    table.col(static_cast<Eigen::Index>(id)));
  }
  return EmbeddingSource(std::move(vectors), "model");
}

EmbeddingSource EmbeddingSource::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings " + path.string());
  std::unordered_map<std::string, ad::Vector> vectors;
  std::string line;
  std::size_t line_no = 0;
  Eigen::Index dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<double> values;
    std::string field;
    while (ss >> field) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ParseError("bad number '" + field + "' in embeddings", line_no);
      }
    }
    if (values.empty()) throw ParseError("token without a vector", line_no);
    if (dim == 0) dim = static_cast<Eigen::Index>(values.size());
    if (static_cast<Eigen::Index>(values.size()) != dim) {
      throw ParseError("vector dimension differs from earlier lines", line_no);
    }
    vectors[token] = Eigen::Map<const ad::Vector>(values.data(), dim);
  }
  return EmbeddingSource(std::move(vectors), "file:" + path.string());
}

const ad::Vector* EmbeddingSource::find(const std::string& token) const {
  auto it = vectors_.find(token);
  return it == vectors_.end() ? nullptr : &it->second;
}

double cosine(const ad::Vector& a, const ad::Vector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

namespace {

std::vector<const ad::Vector*> known(const Tokens& sentence, const EmbeddingSource& source) {
  std::vector<const ad::Vector*> out;
  for (const auto& t : sentence) {
    if (const ad::Vector* v = source.find(t)) out.push_back(v);
  }
  return out;
}

double greedy_direction(const std::vector<const ad::Vector*>& from,
                        const std::vector<const ad::Vector*>& to) {
  double total = 0.0;
  for (const ad::Vector* a : from) {
    double best = -1.0;
    for (const ad::Vector* b : to) best = std::max(best, cosine(*a, *b));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

std::optional<ad::Vector> average_vector(const Tokens& sentence, const EmbeddingSource& source) {
  const auto vs = known(sentence, source);
  if (vs.empty()) return std::nullopt;
  ad::Vector sum = ad::Vector::Zero(vs.front()->size());
  for (const ad::Vector* v : vs) sum += *v;
  return sum / static_cast<double>(vs.size());
}

std::optional<ad::Vector> extrema_vector(const Tokens& sentence, const EmbeddingSource& source) {
  const auto vs = known(sentence, source);
  if (vs.empty()) return std::nullopt;
  ad::Vector out = *vs.front();
  for (std::size_t k = 1; k < vs.size(); ++k) {
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      if (std::abs((*vs[k])(i)) > std::abs(out(i))) out(i) = (*vs[k])(i);
    }
  }
  return out;
}

std::optional<EmbeddingScores> embedding_metrics(const Tokens& hypothesis, const Tokens& reference,
                                                 const EmbeddingSource& source) {
  const auto h = known(hypothesis, source);
  const auto r = known(reference, source);
  if (h.empty() || r.empty()) return std::nullopt;
  EmbeddingScores s;
  s.average = cosine(*average_vector(hypothesis, source), *average_vector(reference, source));
  s.extrema = cosine(*extrema_vector(hypothesis, source), *extrema_vector(reference, source));
  s.greedy = 0.5 * (greedy_direction(h, r) + greedy_direction(r, h));
  return s;
}

BowScores abow_ebow(std::span<const Tokens> generated, std::span<const Tokens> references,
                    const EmbeddingSource& source) {
  auto vectors = [&](std::span<const Tokens> set, bool extrema) {
    std::vector<ad::Vector> out;
    for (const auto& s : set) {
      auto v = extrema ? extrema_vector(s, source) : average_vector(s, source);
      if (v) out.push_back(std::move(*v));
    }
    if (out.empty()) throw Error("abow_ebow: a response set has no usable sentence");
    return out;
  };
  auto precision = [](const std::vector<ad::Vector>& from, const std::vector<ad::Vector>& to) {
    double total = 0.0;
    for (const auto& a : from) {
      double best = -1.0;
      for (const auto& b : to) best = std::max(best, cosine(a, b));
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  if (generated.empty() || references.empty()) throw Error("abow_ebow: empty response set");
  const auto ga = vectors(generated, false), ra = vectors(references, false);
  const auto ge = vectors(generated, true), re = vectors(references, true);
  return {precision(ga, ra), precision(ra, ga), precision(ge, re), precision(re, ge)};
}

ExpressionReport metaword_expression(std::span<const std::string> messages,
                                     std::span<const std::string> responses,
                                     std::span<const MetaWord> targets,
                                     const AttributeSchema& schema, const FreqStats& stats) {
  if (responses.empty()) throw Error("metaword expression: empty response set");
  if (messages.size() != responses.size() || targets.size() != responses.size()) {
    throw Error("metaword expression: messages, responses and targets differ in length");
  }
  ExpressionReport report;
  for (const auto& spec : schema.variables()) report.variables.push_back({spec.key, spec.type, 0.0, 0});
  for (std::size_t k = 0; k < responses.size(); ++k) {
    const Tokens response = tokenize(responses[k]);
    MetaWord got;
    try {
      got = extract_metaword(tokenize(messages[k]), response, schema, stats);
    } catch (const Error&) {
      ++report.skipped;
      continue;
    }
    for (std::size_t i = 0; i < schema.size(); ++i) {
      const VariableSpec& spec = schema.variables()[i];
      const MetaWordVariable* want = targets[k].find(spec.key);
      if (!want) throw SchemaError(spec.key, "missing from target meta-word");
      VariableScore& score = report.variables[i];
      const MetaWordVariable& have = got.variables[i];
      if (spec.type == VarType::kCategorical) {
        score.value += have.category == want->category ? 1.0 : 0.0;
      } else {
        score.value += (have.real - want->real) * (have.real - want->real);
      }
      ++score.evaluated;
    }
  }
  for (auto& s : report.variables) {
    if (s.evaluated > 0) s.value /= static_cast<double>(s.evaluated);
  }
  return report;
}

std::optional<double> EvalReport::get(const std::string& name) const {
  for (const auto& [k, v] : metrics) {
    if (k == name) return v;
  }
  return std::nullopt;
}

Json report_to_json(const EvalReport& report) {
  Json j;
  j["metrics"] = Json::object();
  for (const auto& [k, v] : report.metrics) j["metrics"][k] = v;
  j["counts"] = Json::object();
  for (const auto& [k, v] : report.counts) j["counts"][k] = v;
  j["config"] = report.config;
  return j;
}

std::string report_table(const EvalReport& report) {
  std::size_t width = 6;
  for (const auto& [k, v] : report.metrics) width = std::max(width, k.size());
  for (const auto& [k, v] : report.counts) width = std::max(width, k.size());
  std::ostringstream out;
  auto rule = [&] { out << std::string(width + 16, '-') << '\n'; };
  auto row = [&](const std::string& k, const std::string& v) {
    out << k << std::string(width - k.size() + 2, ' ') << v << '\n';
  };
  rule();
  row("metric", "value");
  rule();
  char buf[64];
  for (const auto& [k, v] : report.metrics) {
    std::snprintf(buf, sizeof buf, "%12.6f", v);
    row(k, buf);
  }
  rule();
  for (const auto& [k, v] : report.counts) {
    std::snprintf(buf, sizeof buf, "%12zu", v);
    row(k, buf);
  }
  rule();
  return out.str();
}

namespace {

Json parse_line(const std::string& line, std::size_t line_no) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
  }
  if (!j.is_object()) throw ParseError("expected a JSON object", line_no);
  if (!j.contains("message") || !j["message"].is_string()) {
    throw ParseError("missing string field \"message\"", line_no);
  }
  return j;
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    fn(parse_line(line, line_no), line_no);
  }
}

}  // namespace

std::vector<GeneratedRecord> read_generated(const std::filesystem::path& path) {
  std::vector<GeneratedRecord> out;
  for_each_line(path, [&](const Json& j, std::size_t line_no) {
    if (!j.contains("response") || !j["response"].is_string()) {
      throw ParseError("missing string field \"response\"", line_no);
    }
    GeneratedRecord r{j["message"].get<std::string>(), j["response"].get<std::string>(), {}};
    if (j.contains("metaword")) {
      MetaWord mw;
      for (const auto& [k, v] : j["metaword"].items()) {
        MetaWordVariable var;
        var.key = k;
        if (v.is_string()) {
          var.category = v.get<std::string>();
        } else if (v.is_number()) {
          var.type = VarType::kReal;
          var.real = v.get<double>();
        } else {
          throw ParseError("meta-word value of " + k + " must be a string or number", line_no);
        }
        mw.variables.push_back(std::move(var));
      }
      r.metaword = std::move(mw);
    }
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<ReferenceRecord> read_references(const std::filesystem::path& path) {
  std::vector<ReferenceRecord> out;
  for_each_line(path, [&](const Json& j, std::size_t line_no) {
    ReferenceRecord r{j["message"].get<std::string>(), {}};
    if (j.contains("responses") && j["responses"].is_array()) {
      for (const auto& v : j["responses"]) {
        if (!v.is_string()) throw ParseError("\"responses\" must hold strings", line_no);
        r.responses.push_back(v.get<std::string>());
      }
    } else if (j.contains("response") && j["response"].is_string()) {
      r.responses.push_back(j["response"].get<std::string>());
    }
    if (r.responses.empty()) throw ParseError("reference line without a response", line_no);
    out.push_back(std::move(r));
  });
  return out;
}

EvalReport evaluate(const EvaluateInputs& in) {
  const auto& gen = in.generated;
  const auto& refs = in.references;
  if (gen.empty()) throw Error("evaluate: no generated responses");
  if (refs.empty()) throw Error("evaluate: no references");

  // owner[k] = reference line of generated line k.
  std::vector<std::size_t> owner(gen.size());
  if (gen.size() == refs.size()) {
    for (std::size_t k = 0; k < gen.size(); ++k) owner[k] = k;
  } else {
    std::size_t group = 0;
    for (std::size_t k = 0; k < gen.size(); ++k) {
      if (k > 0 && gen[k].message != gen[k - 1].message) ++group;
      if (group >= refs.size()) throw Error("evaluate: alignment mismatch (more message groups than references)");
      owner[k] = group;
    }
    if (group + 1 != refs.size()) {
      throw Error("evaluate: alignment mismatch (" + std::to_string(group + 1) +
                  " generated message groups, " + std::to_string(refs.size()) + " references)");
    }
  }
  for (std::size_t k = 0; k < gen.size(); ++k) {
    if (gen[k].message != refs[owner[k]].message) {
      throw Error("evaluate: alignment mismatch at generated line " + std::to_string(k + 1) +
                  ": message differs from its reference");
    }
  }

  EvalReport report;
  std::vector<Tokens> hyps;
  std::vector<std::vector<Tokens>> ref_tokens;
  for (std::size_t k = 0; k < gen.size(); ++k) {
    hyps.push_back(tokenize(gen[k].response));
    std::vector<Tokens> rs;
    for (const auto& r : refs[owner[k]].responses) rs.push_back(tokenize(r));
    ref_tokens.push_back(std::move(rs));
  }
  report.config["bleu_max_order"] = 4;
  report.config["bleu_smoothing_epsilon"] = kBleuEpsilon;
  report.count("generated", gen.size());
  report.count("references", refs.size());

  report.add("bleu", bleu(hyps, std::span<const std::vector<Tokens>>(ref_tokens)));
  report.add("distinct_1", distinct_n(hyps, 1));
  report.add("distinct_2", distinct_n(hyps, 2));

  if (in.embeddings) {
    report.config["embedding_source"] = in.embeddings->origin();
    report.config["embedding_dim"] = in.embeddings->dim();
    EmbeddingScores sum;
    std::size_t used = 0, skipped = 0;
    for (std::size_t k = 0; k < hyps.size(); ++k) {
      const auto s = embedding_metrics(hyps[k], ref_tokens[k].front(), *in.embeddings);
      if (!s) {
        ++skipped;
        continue;
      }
      sum.average += s->average;
      sum.extrema += s->extrema;
      sum.greedy += s->greedy;
      ++used;
    }
    if (used > 0) {
      report.add("embedding_average", sum.average / static_cast<double>(used));
      report.add("embedding_extrema", sum.extrema / static_cast<double>(used));
      report.add("embedding_greedy", sum.greedy / static_cast<double>(used));
    }
    report.count("embedding_skipped", skipped);

    const bool multi = std::any_of(refs.begin(), refs.end(),
                                   [](const ReferenceRecord& r) { return r.responses.size() > 1; });
    if (multi) {
      BowScores total;
      std::size_t groups = 0, bow_skipped = 0;
      for (std::size_t g = 0; g < refs.size(); ++g) {
        std::vector<Tokens> generated;
        for (std::size_t k = 0; k < gen.size(); ++k) {
          if (owner[k] == g) generated.push_back(hyps[k]);
        }
        std::vector<Tokens> rs;
        for (const auto& r : refs[g].responses) rs.push_back(tokenize(r));
        try {
          const BowScores s = abow_ebow(generated, rs, *in.embeddings);
          total.a_precision += s.a_precision;
          total.a_recall += s.a_recall;
          total.e_precision += s.e_precision;
          total.e_recall += s.e_recall;
          ++groups;
        } catch (const Error&) {
          ++bow_skipped;
        }
      }
      if (groups > 0) {
        const double n = static_cast<double>(groups);
        report.add("a_bow_precision", total.a_precision / n);
        report.add("a_bow_recall", total.a_recall / n);
        report.add("e_bow_precision", total.e_precision / n);
        report.add("e_bow_recall", total.e_recall / n);
      }
      report.count("bow_groups", groups);
      report.count("bow_skipped", bow_skipped);
    }
  }

  if (in.model) {
    const Generator& model = *in.model;
    const AttributeSchema& schema = model.config.schema;
    std::vector<std::string> messages, responses;
    std::vector<MetaWord> targets;
    for (const auto& g : gen) {
      if (!g.metaword) continue;
      bool complete = true;
      for (const auto& spec : schema.variables()) complete = complete && g.metaword->find(spec.key);
      if (!complete) continue;
      messages.push_back(g.message);
      responses.push_back(g.response);
      targets.push_back(*g.metaword);
    }
    if (!responses.empty() && !schema.empty_schema()) {
      const ExpressionReport expr = metaword_expression(messages, responses, targets, schema, model.stats);
      for (const auto& v : expr.variables) {
        report.add("expression_" + v.key + (v.type == VarType::kCategorical ? "_accuracy" : "_sq_dev"),
                   v.value);
      }
      report.count("expression_evaluated", responses.size() - expr.skipped);
      report.count("expression_skipped", expr.skipped);
    }

    std::vector<RawPair> pairs;
    for (const auto& r : refs) {
      if (!tokenize(r.message).empty() && !tokenize(r.responses.front()).empty()) {
        pairs.push_back({r.message, r.responses.front()});
      }
    }
    if (!pairs.empty()) {
      const auto annotated = annotate(pairs, schema, model.stats);
      const auto examples = make_examples(model, annotated);
      const NllTotals totals = evaluate_nll(model, examples);
      report.add("perplexity", perplexity(totals));
      report.count("perplexity_tokens", static_cast<std::size_t>(totals.tokens));
    }
    report.config["attributes"] = schema.id();
  }
  return report;
}

}  // namespace mwgen
