#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mwgen/corpus.hpp"
#include "mwgen/generator.hpp"
#include "mwgen/io.hpp"
#include "mwgen/metaword.hpp"

namespace mwgen {

inline constexpr double kBleuEpsilon = 1e-9;

/// Corpus BLEU with n-gram orders 1..max_order, uniform weights and the
/// brevity penalty. Each precision is (matches + eps) / (total + eps), or eps
/// when the corpus has no n-gram of that order. references[i] holds one or
/// more references of hypotheses[i].
double bleu(std::span<const Tokens> hypotheses, std::span<const std::vector<Tokens>> references,
            int max_order = 4);
/// Single-reference form.
double bleu(std::span<const Tokens> hypotheses, std::span<const Tokens> references,
            int max_order = 4);

/// Distinct n-grams over all n-grams of the response set; 0 when there are none.
double distinct_n(std::span<const Tokens> responses, int n);

/// Token vectors for the embedding metrics. Out-of-vocabulary tokens are
/// skipped.
class EmbeddingSource {
 public:
  EmbeddingSource() = default;
  EmbeddingSource(std::unordered_map<std::string, ad::Vector> vectors, std::string origin);

  /// Response-side embedding table of a generator (reserved tokens excluded).
  static EmbeddingSource from_model(const Generator& model);
  /// "token v1 v2 ..." per line.
  static EmbeddingSource from_file(const std::filesystem::path& path);

  const ad::Vector* find(const std::string& token) const;
  Eigen::Index dim() const { return dim_; }
  const std::string& origin() const { return origin_; }
  std::size_t size() const { return vectors_.size(); }

 private:
  std::unordered_map<std::string, ad::Vector> vectors_;
  Eigen::Index dim_ = 0;
  std::string origin_;
};

/// Cosine similarity; 0 when either vector is zero.
double cosine(const ad::Vector& a, const ad::Vector& b);

/// Mean of the known token vectors; nullopt when none is known.
std::optional<ad::Vector> average_vector(const Tokens& sentence, const EmbeddingSource& source);
/// Per dimension, the entry of largest magnitude across tokens.
std::optional<ad::Vector> extrema_vector(const Tokens& sentence, const EmbeddingSource& source);

struct EmbeddingScores {
  double average = 0.0;
  double extrema = 0.0;
  double greedy = 0.0;
};

/// nullopt when either sentence has no known token.
std::optional<EmbeddingScores> embedding_metrics(const Tokens& hypothesis, const Tokens& reference,
                                                 const EmbeddingSource& source);

struct BowScores {
  double a_precision = 0.0;
  double a_recall = 0.0;
  double e_precision = 0.0;
  double e_recall = 0.0;
};

/// Set-to-set matching of generated and reference responses by average and
/// extrema bag-of-words vectors. Sentences without known tokens are
/// ignored; throws when a set ends up empty.
BowScores abow_ebow(std::span<const Tokens> generated, std::span<const Tokens> references,
                    const EmbeddingSource& source);

struct VariableScore {
  std::string key;
  VarType type = VarType::kCategorical;
  /// Accuracy for categorical variables, mean squared deviation for real ones.
  double value = 0.0;
  std::size_t evaluated = 0;
};

struct ExpressionReport {
  std::vector<VariableScore> variables;
  std::size_t skipped = 0;
};

/// Re-extracts the meta-word of every response and compares it with the
/// meta-word it was generated under. Empty responses are skipped and counted.
ExpressionReport metaword_expression(std::span<const std::string> messages,
                                     std::span<const std::string> responses,
                                     std::span<const MetaWord> targets,
                                     const AttributeSchema& schema, const FreqStats& stats);

struct EvalReport {
  /// Metric name -> value, in insertion order.
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::pair<std::string, std::size_t>> counts;
  Json config = Json::object();

  void add(const std::string& name, double value) { metrics.emplace_back(name, value); }
  void count(const std::string& name, std::size_t value) { counts.emplace_back(name, value); }
  std::optional<double> get(const std::string& name) const;
};

Json report_to_json(const EvalReport& report);
/// Two-column text table.
std::string report_table(const EvalReport& report);

struct GeneratedRecord {
  std::string message;
  std::string response;
  std::optional<MetaWord> metaword;
};

struct ReferenceRecord {
  std::string message;
  std::vector<std::string> responses;
};

/// Reads generation output lines ({"message", "response", optional "metaword"}).
std::vector<GeneratedRecord> read_generated(const std::filesystem::path& path);
/// Reads {"message", "response"} or {"message", "responses": [...]} lines.
std::vector<ReferenceRecord> read_references(const std::filesystem::path& path);

struct EvaluateInputs {
  std::vector<GeneratedRecord> generated;
  std::vector<ReferenceRecord> references;
  const Generator* model = nullptr;
  const EmbeddingSource* embeddings = nullptr;
};

/// Full report. Generated lines align with reference lines one to one, or,
/// when the counts differ, runs of consecutive generated lines with the same
/// message align with one reference line each. Throws on any other layout.
EvalReport evaluate(const EvaluateInputs& inputs);

}  // namespace mwgen
