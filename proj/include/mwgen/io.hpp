#pragma once

// JSON forms of the corpus objects and the annotated dataset format.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "json.hpp"
#include "mwgen/corpus.hpp"
#include "mwgen/generator.hpp"
#include "mwgen/metaword.hpp"

namespace mwgen {

using Json = nlohmann::ordered_json;

/// {"RL": "8", "DA": "statement", ..., "CR": 0.2}: categorical values as
/// strings, real values as numbers.
Json metaword_to_json(const MetaWord& metaword);
/// Reads the variables of `schema` from an object; throws SchemaError for a
/// missing or invalid variable.
MetaWord metaword_from_json(const Json& j, const AttributeSchema& schema);

Json vocab_to_json(const Vocab& vocab);
Vocab vocab_from_json(const Json& j);

Json stats_to_json(const FreqStats& stats);
FreqStats stats_from_json(const Json& j);

/// Extracts the meta-word of every pair under `schema`.
std::vector<AnnotatedPair> annotate(std::span<const RawPair> pairs, const AttributeSchema& schema,
                                    const FreqStats& stats);

/// {"message", "response", "metaword"} per line.
void write_annotated(std::ostream& out, std::span<const AnnotatedPair> pairs);
/// Reads annotated lines; the meta-words must cover `schema`. Parse errors
/// carry the line number.
std::vector<AnnotatedPair> read_annotated(std::istream& in, const AttributeSchema& schema);
std::vector<AnnotatedPair> read_annotated(const std::filesystem::path& path,
                                          const AttributeSchema& schema);

}  // namespace mwgen
