#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mwgen/corpus.hpp"

namespace mwgen {

enum class VarType { kCategorical, kReal };

/// How the state update loss supervises a variable: kPrefix variables have a
/// feature computable on every response prefix, kFinal ones only on the
/// finished response.
enum class UpdateCase { kPrefix, kFinal };

/// Declaration of one meta-word variable.
struct VariableSpec {
  std::string key;
  /// Natural-language key phrase used to build the key representation.
  std::string phrase;
  VarType type = VarType::kCategorical;
  std::vector<std::string> categories;
  UpdateCase update_case = UpdateCase::kFinal;

  bool has_category(std::string_view value) const;
  int category_index(std::string_view value) const;
};

/// One (key, type, value) entry of a meta-word.
struct MetaWordVariable {
  std::string key;
  VarType type = VarType::kCategorical;
  std::string category;
  double real = 0.0;

  std::string value_string() const;
  friend bool operator==(const MetaWordVariable&, const MetaWordVariable&) = default;
};

struct MetaWord {
  std::string schema_id;
  std::vector<MetaWordVariable> variables;

  const MetaWordVariable* find(std::string_view key) const;
  /// "RL=8,DA=statement,..." in schema order.
  std::string to_string() const;
  friend bool operator==(const MetaWord&, const MetaWord&) = default;
};

namespace keys {
inline constexpr std::string_view kLength = "RL";
inline constexpr std::string_view kAct = "DA";
inline constexpr std::string_view kMulti = "MU";
inline constexpr std::string_view kCopy = "CR";
inline constexpr std::string_view kSpecificity = "S";
}  // namespace keys

inline constexpr int kMaxLength = 25;

/// Ordered set of variable declarations a model is conditioned on.
class AttributeSchema {
 public:
  AttributeSchema() = default;
  explicit AttributeSchema(std::vector<VariableSpec> variables);

  /// RL, DA, MU, CR, S.
  static AttributeSchema full();
  static AttributeSchema empty() { return AttributeSchema(); }
  /// Subset of the full schema in canonical order; accepts "RL,MU", "all",
  /// "none" or "". Unknown keys throw SchemaError.
  static AttributeSchema parse(std::string_view keys);

  const std::vector<VariableSpec>& variables() const { return variables_; }
  std::size_t size() const { return variables_.size(); }
  bool empty_schema() const { return variables_.empty(); }
  const VariableSpec* find(std::string_view key) const;
  /// Comma-joined keys, or "none".
  std::string id() const;

  /// Throws SchemaError naming the first offending variable.
  void validate(const MetaWord& metaword) const;

 private:
  std::vector<VariableSpec> variables_;
};

/// Dialogue-act inventory of the rule tagger.
const std::vector<std::string>& dialogue_acts();

std::string extract_rl(std::span<const std::string> response);
std::string extract_da(std::span<const std::string> response);
std::string extract_mu(std::span<const std::string> response);
double extract_cr(std::span<const std::string> message, std::span<const std::string> response,
                  const FreqStats& stats);
double extract_s(std::span<const std::string> response, const FreqStats& stats);
/// Normalized inverse word frequency of one token, in [0, 1].
double niwf(const std::string& token, const FreqStats& stats);

MetaWord extract_metaword(std::span<const std::string> message,
                          std::span<const std::string> response,
                          const AttributeSchema& schema, const FreqStats& stats);

/// Feature F(y_1..t) of a prefix-supervised variable; throws SchemaError for
/// variables without one (DA, MU).
MetaWordVariable prefix_feature(std::string_view key, std::span<const std::string> message,
                                std::span<const std::string> prefix, const FreqStats& stats);

/// Parses "RL=8,DA=yes-no-question,MU=false,CR=0.2,S=0.6". Keys must belong to
/// `schema`; values are range-checked. Missing keys are allowed.
MetaWord parse_metaword(std::string_view text, const AttributeSchema& schema);

/// Replaces the variables of `base` that `override_mw` provides.
MetaWord merge_metaword(const MetaWord& base, const MetaWord& override_mw,
                        const AttributeSchema& schema);

}  // namespace mwgen
