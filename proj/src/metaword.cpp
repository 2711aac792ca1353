#include "mwgen/metaword.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "mwgen/error.hpp"

namespace mwgen {

namespace {

const std::unordered_set<std::string>& wh_words() {
  static const std::unordered_set<std::string> words = {"who", "what", "when", "where",
                                                        "why", "how",  "which"};
  return words;
}

bool is_terminal(const std::string& tok) { return tok == "." || tok == "?" || tok == "!"; }

struct Utterance {
  std::vector<std::string> tokens;
  std::string terminal;
};

// Splits on . ? ! and drops empty pieces.
std::vector<Utterance> split_utterances(std::span<const std::string> tokens) {
  std::vector<Utterance> out;
  Utterance cur;
  for (const auto& tok : tokens) {
    if (is_terminal(tok)) {
      if (!cur.tokens.empty()) {
        cur.terminal = tok;
        out.push_back(std::move(cur));
      }
      cur = {};
    } else {
      cur.tokens.push_back(tok);
    }
  }
  if (!cur.tokens.empty()) out.push_back(std::move(cur));
  return out;
}

std::size_t word_count(std::span<const std::string> tokens) {
  return static_cast<std::size_t>(std::count_if(
      tokens.begin(), tokens.end(), [](const std::string& t) { return !is_punctuation(t); }));
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

MetaWordVariable categorical(std::string_view key, std::string value) {
  MetaWordVariable v;
  v.key = std::string(key);
  v.type = VarType::kCategorical;
  v.category = std::move(value);
  return v;
}

MetaWordVariable real(std::string_view key, double value) {
  MetaWordVariable v;
  v.key = std::string(key);
  v.type = VarType::kReal;
  v.real = value;
  return v;
}

}  // namespace

bool VariableSpec::has_category(std::string_view value) const { return category_index(value) >= 0; }

int VariableSpec::category_index(std::string_view value) const {
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i] == value) return static_cast<int>(i);
  }
  return -1;
}

std::string MetaWordVariable::value_string() const {
  if (type == VarType::kCategorical) return category;
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, real);
  return std::string(buf, r.ptr);
}

const MetaWordVariable* MetaWord::find(std::string_view key) const {
  for (const auto& v : variables) {
    if (v.key == key) return &v;
  }
  return nullptr;
}

std::string MetaWord::to_string() const {
  std::string out;
  for (const auto& v : variables) {
    if (!out.empty()) out += ',';
    out += v.key + "=" + v.value_string();
  }
  return out;
}

AttributeSchema::AttributeSchema(std::vector<VariableSpec> variables)
    : variables_(std::move(variables)) {
  std::unordered_set<std::string> seen;
  for (const auto& v : variables_) {
    if (!seen.insert(v.key).second) throw SchemaError(v.key, "duplicate key in schema");
  }
}

const std::vector<std::string>& dialogue_acts() {
  static const std::vector<std::string> acts = {"yes-no-question", "wh-question", "statement",
                                                "other"};
  return acts;
}

AttributeSchema AttributeSchema::full() {
  std::vector<std::string> lengths;
  for (int i = 1; i <= kMaxLength; ++i) lengths.push_back(std::to_string(i));
  return AttributeSchema({
      {std::string(keys::kLength), "response length", VarType::kCategorical, lengths,
       UpdateCase::kPrefix},
      {std::string(keys::kAct), "dialogue act", VarType::kCategorical, dialogue_acts(),
       UpdateCase::kFinal},
      {std::string(keys::kMulti), "multiple utterances", VarType::kCategorical,
       {"false", "true"}, UpdateCase::kFinal},
      {std::string(keys::kCopy), "copy ratio", VarType::kReal, {}, UpdateCase::kPrefix},
      {std::string(keys::kSpecificity), "specificity", VarType::kReal, {}, UpdateCase::kPrefix},
  });
}

AttributeSchema AttributeSchema::parse(std::string_view text) {
  const std::string spec = trim(text);
  if (spec == "all") return full();
  if (spec.empty() || spec == "none") return empty();
  std::unordered_set<std::string> wanted;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::transform(item.begin(), item.end(), item.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    wanted.insert(item);
  }
  const AttributeSchema all = full();
  std::vector<VariableSpec> picked;
  for (const auto& v : all.variables()) {
    if (wanted.erase(v.key)) picked.push_back(v);
  }
  if (!wanted.empty()) throw SchemaError(*wanted.begin(), "unknown attribute");
  return AttributeSchema(std::move(picked));
}

const VariableSpec* AttributeSchema::find(std::string_view key) const {
  for (const auto& v : variables_) {
    if (v.key == key) return &v;
  }
  return nullptr;
}

std::string AttributeSchema::id() const {
  if (variables_.empty()) return "none";
  std::string out;
  for (const auto& v : variables_) {
    if (!out.empty()) out += ',';
    out += v.key;
  }
  return out;
}

void AttributeSchema::validate(const MetaWord& metaword) const {
  if (metaword.variables.size() != variables_.size()) {
    for (const auto& spec : variables_) {
      if (!metaword.find(spec.key)) throw SchemaError(spec.key, "missing from meta-word");
    }
    for (const auto& v : metaword.variables) {
      if (!find(v.key)) throw SchemaError(v.key, "not part of schema " + id());
    }
  }
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    const VariableSpec& spec = variables_[i];
    const MetaWordVariable& v = metaword.variables[i];
    if (v.key != spec.key) throw SchemaError(spec.key, "out of schema order (found " + v.key + ")");
    if (v.type != spec.type) throw SchemaError(spec.key, "type mismatch");
    if (spec.type == VarType::kCategorical) {
      if (!spec.has_category(v.category)) {
        throw SchemaError(spec.key, "value '" + v.category + "' not in category inventory");
      }
    } else if (!(v.real >= 0.0 && v.real <= 1.0)) {
      throw SchemaError(spec.key, "value " + v.value_string() + " outside [0, 1]");
    }
  }
}

std::string extract_rl(std::span<const std::string> response) {
  if (response.empty()) throw SchemaError(std::string(keys::kLength), "empty response");
  return std::to_string(std::min<std::size_t>(response.size(), kMaxLength));
}

std::string extract_da(std::span<const std::string> response) {
  const auto utterances = split_utterances(response);
  for (const auto& u : utterances) {
    if (u.terminal != "?") continue;
    auto first = std::find_if(u.tokens.begin(), u.tokens.end(),
                              [](const std::string& t) { return !is_punctuation(t); });
    if (first != u.tokens.end() && wh_words().count(*first)) return "wh-question";
    return "yes-no-question";
  }
  if (word_count(response) >= 3) return "statement";
  return "other";
}

std::string extract_mu(std::span<const std::string> response) {
  std::size_t kept = 0;
  for (const auto& u : split_utterances(response)) {
    if (word_count(u.tokens) >= 3) ++kept;
  }
  return kept > 1 ? "true" : "false";
}

double extract_cr(std::span<const std::string> message, std::span<const std::string> response,
                  const FreqStats& stats) {
  const std::unordered_set<std::string> source(message.begin(), message.end());
  std::unordered_set<std::string> shared;
  std::size_t denominator = 0;
  for (const auto& tok : response) {
    if (is_punctuation(tok) || stats.excluded(tok)) continue;
    ++denominator;
    if (source.count(tok)) shared.insert(tok);
  }
  if (denominator == 0) return 0.0;
  return std::min(1.0, static_cast<double>(shared.size()) / static_cast<double>(denominator));
}

double niwf(const std::string& token, const FreqStats& stats) {
  if (stats.doc_counts.empty()) return 0.0;
  const double scale = std::log(1.0 + static_cast<double>(stats.total_responses));
  auto iwf = [scale](std::size_t count) { return scale / (1.0 + static_cast<double>(count)); };
  const double lo = iwf(stats.max_doc_count);
  const double hi = iwf(stats.min_doc_count);
  if (!(hi > lo)) return 0.0;
  const double v = (iwf(stats.doc_count(token)) - lo) / (hi - lo);
  return std::clamp(v, 0.0, 1.0);
}

double extract_s(std::span<const std::string> response, const FreqStats& stats) {
  double best = 0.0;
  for (const auto& tok : response) best = std::max(best, niwf(tok, stats));
  return best;
}

MetaWord extract_metaword(std::span<const std::string> message,
                          std::span<const std::string> response, const AttributeSchema& schema,
                          const FreqStats& stats) {
  if (response.empty()) throw SchemaError(std::string(keys::kLength), "empty response");
  MetaWord mw;
  mw.schema_id = schema.id();
  for (const auto& spec : schema.variables()) {
    if (spec.key == keys::kLength) {
      mw.variables.push_back(categorical(spec.key, extract_rl(response)));
    } else if (spec.key == keys::kAct) {
      mw.variables.push_back(categorical(spec.key, extract_da(response)));
    } else if (spec.key == keys::kMulti) {
      mw.variables.push_back(categorical(spec.key, extract_mu(response)));
    } else if (spec.key == keys::kCopy) {
      mw.variables.push_back(real(spec.key, extract_cr(message, response, stats)));
    } else if (spec.key == keys::kSpecificity) {
      mw.variables.push_back(real(spec.key, extract_s(response, stats)));
    } else {
      throw SchemaError(spec.key, "no extractor for this variable");
    }
  }
  return mw;
}

MetaWordVariable prefix_feature(std::string_view key, std::span<const std::string> message,
                                std::span<const std::string> prefix, const FreqStats& stats) {
  if (key == keys::kLength) {
    if (prefix.empty()) throw SchemaError(std::string(key), "empty prefix");
    return categorical(key, std::to_string(std::min<std::size_t>(prefix.size(), kMaxLength)));
  }
  if (key == keys::kCopy) return real(key, extract_cr(message, prefix, stats));
  if (key == keys::kSpecificity) return real(key, extract_s(prefix, stats));
  throw SchemaError(std::string(key), "no prefix feature exists for this variable");
}

MetaWord parse_metaword(std::string_view text, const AttributeSchema& schema) {
  std::vector<MetaWordVariable> found;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw SchemaError(item, "expected KEY=VALUE");
    std::string key = trim(std::string_view(item).substr(0, eq));
    const std::string value = trim(std::string_view(item).substr(eq + 1));
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    const VariableSpec* spec = schema.find(key);
    if (!spec) throw SchemaError(key, "not part of schema " + schema.id());
    for (const auto& f : found) {
      if (f.key == key) throw SchemaError(key, "given twice");
    }
    if (spec->type == VarType::kCategorical) {
      if (!spec->has_category(value)) {
        if (key == keys::kLength) throw SchemaError(key, "value '" + value + "' outside 1-25");
        throw SchemaError(key, "value '" + value + "' not in category inventory");
      }
      found.push_back(categorical(key, value));
    } else {
      double x = 0.0;
      const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), x);
      if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw SchemaError(key, "value '" + value + "' is not a number");
      }
      if (!(x >= 0.0 && x <= 1.0)) throw SchemaError(key, "value " + value + " outside [0, 1]");
      found.push_back(real(key, x));
    }
  }
  MetaWord mw;
  mw.schema_id = schema.id();
  for (const auto& spec : schema.variables()) {
    for (const auto& f : found) {
      if (f.key == spec.key) mw.variables.push_back(f);
    }
  }
  return mw;
}

MetaWord merge_metaword(const MetaWord& base, const MetaWord& override_mw,
                        const AttributeSchema& schema) {
  MetaWord out;
  out.schema_id = schema.id();
  for (const auto& spec : schema.variables()) {
    if (const auto* v = override_mw.find(spec.key)) {
      out.variables.push_back(*v);
    } else if (const auto* b = base.find(spec.key)) {
      out.variables.push_back(*b);
    } else {
      throw SchemaError(spec.key, "missing from meta-word");
    }
  }
  schema.validate(out);
  return out;
}

}  // namespace mwgen
