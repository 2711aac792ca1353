#pragma once

// Binary checkpoint container:
//
//   "MWGENCK\0"  u32 version  u64 header-bytes  header (UTF-8 JSON)
//   u64 tensor-count, then per tensor:
//   u32 name-bytes  name  u64 rows  u64 cols  rows*cols f64, row-major
//
// All integers and doubles are little-endian.

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "mwgen/io.hpp"
#include "mwgen/model.hpp"
#include "mwgen/training.hpp"

namespace mwgen {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Container {
  Json header;
  ParameterSet tensors;
};

void write_container(std::ostream& out, const Container& c);
/// Throws ParseError on a bad magic, version or truncated file.
Container read_container(std::istream& in);
void save_container(const std::filesystem::path& path, const Container& c);
Container load_container(const std::filesystem::path& path);

Json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const Json& j);
Json history_to_json(const std::vector<EpochRecord>& history);
std::vector<EpochRecord> history_from_json(const Json& j);

struct GeneratorCheckpoint {
  Generator model;
  TrainConfig config;
  std::vector<EpochRecord> history;
};

void save_generator(const std::filesystem::path& path, const GeneratorCheckpoint& ckpt);
GeneratorCheckpoint load_generator(const std::filesystem::path& path);

}  // namespace mwgen
