#include "mwgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "mwgen/error.hpp"

namespace mwgen {

namespace {

constexpr char kMagic[8] = {'M', 'W', 'G', 'E', 'N', 'C', 'K', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ParseError("truncated checkpoint");
  return v;
}

std::string get_bytes(std::istream& in, std::uint64_t n) {
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw ParseError("truncated checkpoint");
  }
  return s;
}

}  // namespace

void write_container(std::ostream& out, const Container& c) {
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string header = c.header.dump();
  put<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put<std::uint64_t>(out, c.tensors.size());
  for (const auto& [name, m] : c.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index col = 0; col < m.cols(); ++col) put<double>(out, m(r, col));
    }
  }
  if (!out) throw Error("failed writing checkpoint");
}

Container read_container(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ParseError("not a checkpoint file (bad magic)");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  Container c;
  const std::string header = get_bytes(in, get<std::uint64_t>(in));
  try {
    c.header = Json::parse(header);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("bad checkpoint header: ") + e.what());
  }
  const auto count = get<std::uint64_t>(in);
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name = get_bytes(in, get<std::uint32_t>(in));
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index col = 0; col < m.cols(); ++col) m(r, col) = get<double>(in);
    }
    c.tensors.emplace(std::move(name), std::move(m));
  }
  return c;
}

void save_container(const std::filesystem::path& path, const Container& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  write_container(out, c);
}

Container load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return read_container(in);
}

Json train_config_to_json(const TrainConfig& c) {
  Json j;
  j["d"] = c.d;
  j["lambda"] = c.lambda;
  j["batch_size"] = c.batch_size;
  j["clip_norm"] = c.clip_norm;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["attributes"] = c.schema.id();
  j["seed"] = c.seed;
  j["rho"] = c.rho;
  j["epsilon"] = c.epsilon;
  j["init_scale"] = c.init_scale;
  j["validation_fraction"] = c.validation_fraction;
  j["max_vocab"] = c.max_vocab;
  j["top_k"] = c.top_k;
  return j;
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  c.d = j.at("d").get<int>();
  c.lambda = j.at("lambda").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.patience = j.at("patience").get<int>();
  c.schema = AttributeSchema::parse(j.at("attributes").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.rho = j.at("rho").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.init_scale = j.at("init_scale").get<double>();
  c.validation_fraction = j.at("validation_fraction").get<double>();
  c.max_vocab = j.at("max_vocab").get<std::size_t>();
  c.top_k = j.at("top_k").get<std::size_t>();
  return c;
}

Json history_to_json(const std::vector<EpochRecord>& history) {
  Json j = Json::array();
  for (const auto& r : history) {
    j.push_back({{"epoch", r.epoch},
                 {"train_loss", r.train_loss},
                 {"train_nll", r.train_nll},
                 {"train_state_update", r.train_state_update},
                 {"val_perplexity", r.val_perplexity},
                 {"improved", r.improved}});
  }
  return j;
}

std::vector<EpochRecord> history_from_json(const Json& j) {
  std::vector<EpochRecord> out;
  for (const auto& e : j) {
    EpochRecord r;
    r.epoch = e.at("epoch").get<int>();
    r.train_loss = e.at("train_loss").get<double>();
    r.train_nll = e.at("train_nll").get<double>();
    r.train_state_update = e.at("train_state_update").get<double>();
    r.val_perplexity = e.at("val_perplexity").get<double>();
    r.improved = e.at("improved").get<bool>();
    out.push_back(r);
  }
  return out;
}

void save_generator(const std::filesystem::path& path, const GeneratorCheckpoint& ckpt) {
  Container c;
  c.header["kind"] = "generator";
  c.header["format_version"] = kCheckpointVersion;
  c.header["config"] = train_config_to_json(ckpt.config);
  c.header["d"] = ckpt.model.config.d;
  c.header["attributes"] = ckpt.model.config.schema.id();
  c.header["message_vocab"] = vocab_to_json(ckpt.model.message_vocab);
  c.header["response_vocab"] = vocab_to_json(ckpt.model.response_vocab);
  c.header["meta_vocab"] = ckpt.model.meta.tokens();
  c.header["stats"] = stats_to_json(ckpt.model.stats);
  c.header["history"] = history_to_json(ckpt.history);
  c.tensors = ckpt.model.params;
  save_container(path, c);
}

GeneratorCheckpoint load_generator(const std::filesystem::path& path) {
  Container c = load_container(path);
  const Json& h = c.header;
  if (h.value("kind", "") != "generator") {
    throw ParseError(path.string() + " is not a generator checkpoint");
  }
  GeneratorCheckpoint out;
  out.config = train_config_from_json(h.at("config"));
  out.history = history_from_json(h.at("history"));
  Generator& g = out.model;
  g.config.d = h.at("d").get<int>();
  g.config.schema = AttributeSchema::parse(h.at("attributes").get<std::string>());
  g.message_vocab = vocab_from_json(h.at("message_vocab"));
  g.response_vocab = vocab_from_json(h.at("response_vocab"));
  g.stats = stats_from_json(h.at("stats"));
  if (h.at("meta_vocab").get<std::vector<std::string>>() != g.meta.tokens()) {
    throw ParseError(path.string() + ": meta-word vocabulary differs from this build");
  }
  const ParameterSet expected = make_generator_parameters(
      g.config.d, g.message_vocab.size(), g.response_vocab.size(), g.meta.size());
  for (const auto& [name, m] : expected) {
    auto it = c.tensors.find(name);
    if (it == c.tensors.end()) throw ParseError(path.string() + ": missing tensor " + name);
    if (it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
      throw ParseError(path.string() + ": tensor " + name + " has the wrong shape");
    }
  }
  if (c.tensors.size() != expected.size()) {
    throw ParseError(path.string() + ": unexpected extra tensors");
  }
  g.params = std::move(c.tensors);
  return out;
}

}  // namespace mwgen
