#include "mwgen/io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "mwgen/error.hpp"

namespace mwgen {

Json metaword_to_json(const MetaWord& metaword) {
  Json j = Json::object();
  for (const auto& v : metaword.variables) {
    if (v.type == VarType::kCategorical) {
      j[v.key] = v.category;
    } else {
      j[v.key] = v.real;
    }
  }
  return j;
}

MetaWord metaword_from_json(const Json& j, const AttributeSchema& schema) {
  if (!j.is_object()) throw SchemaError("metaword", "expected a JSON object");
  MetaWord mw;
  mw.schema_id = schema.id();
  for (const auto& spec : schema.variables()) {
    if (!j.contains(spec.key)) throw SchemaError(spec.key, "missing from meta-word");
    const Json& v = j.at(spec.key);
    MetaWordVariable var;
    var.key = spec.key;
    var.type = spec.type;
    if (spec.type == VarType::kCategorical) {
      if (!v.is_string()) throw SchemaError(spec.key, "expected a string value");
      var.category = v.get<std::string>();
    } else {
      if (!v.is_number()) throw SchemaError(spec.key, "expected a numeric value");
      var.real = v.get<double>();
    }
    mw.variables.push_back(std::move(var));
  }
  schema.validate(mw);
  return mw;
}

Json vocab_to_json(const Vocab& vocab) {
  Json j;
  j["tokens"] = vocab.tokens();
  j["counts"] = vocab.counts();
  return j;
}

Vocab vocab_from_json(const Json& j) {
  const auto tokens = j.at("tokens").get<std::vector<std::string>>();
  const auto counts = j.at("counts").get<std::vector<std::size_t>>();
  return Vocab::from_tokens(tokens, counts);
}

Json stats_to_json(const FreqStats& stats) {
  Json j;
  j["total_responses"] = stats.total_responses;
  j["k"] = stats.k;
  j["min_doc_count"] = stats.min_doc_count;
  j["max_doc_count"] = stats.max_doc_count;
  j["stopwords"] = std::set<std::string>(stats.stopwords.begin(), stats.stopwords.end());
  j["top_k"] = std::set<std::string>(stats.top_k.begin(), stats.top_k.end());
  j["doc_counts"] =
      std::map<std::string, std::size_t>(stats.doc_counts.begin(), stats.doc_counts.end());
  return j;
}

FreqStats stats_from_json(const Json& j) {
  FreqStats s;
  s.total_responses = j.at("total_responses").get<std::size_t>();
  s.k = j.at("k").get<std::size_t>();
  s.min_doc_count = j.at("min_doc_count").get<std::size_t>();
  s.max_doc_count = j.at("max_doc_count").get<std::size_t>();
  for (const auto& w : j.at("stopwords")) s.stopwords.insert(w.get<std::string>());
  for (const auto& w : j.at("top_k")) s.top_k.insert(w.get<std::string>());
  for (const auto& [w, c] : j.at("doc_counts").items()) s.doc_counts[w] = c.get<std::size_t>();
  return s;
}

std::vector<AnnotatedPair> annotate(std::span<const RawPair> pairs, const AttributeSchema& schema,
                                    const FreqStats& stats) {
  std::vector<AnnotatedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back({p.message, p.response,
                   extract_metaword(tokenize(p.message), tokenize(p.response), schema, stats)});
  }
  return out;
}

void write_annotated(std::ostream& out, std::span<const AnnotatedPair> pairs) {
  for (const auto& p : pairs) {
    Json j;
    j["message"] = p.message;
    j["response"] = p.response;
    j["metaword"] = metaword_to_json(p.metaword);
    out << j.dump() << '\n';
  }
}

std::vector<AnnotatedPair> read_annotated(std::istream& in, const AttributeSchema& schema) {
  std::vector<AnnotatedPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    if (!j.is_object()) throw ParseError("expected a JSON object", line_no);
    for (const char* field : {"message", "response"}) {
      if (!j.contains(field) || !j[field].is_string()) {
        throw ParseError(std::string("missing string field \"") + field + "\"", line_no);
      }
    }
    if (!j.contains("metaword")) throw ParseError("missing field \"metaword\"", line_no);
    AnnotatedPair p;
    p.message = j["message"].get<std::string>();
    p.response = j["response"].get<std::string>();
    try {
      p.metaword = metaword_from_json(j["metaword"], schema);
    } catch (const SchemaError& e) {
      throw ParseError(e.what(), line_no);
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<AnnotatedPair> read_annotated(const std::filesystem::path& path,
                                          const AttributeSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_annotated(in, schema);
}

}  // namespace mwgen
