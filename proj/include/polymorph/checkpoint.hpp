#ifndef POLYMORPH_CHECKPOINT_HPP_
#define POLYMORPH_CHECKPOINT_HPP_

// Weight checkpoints. Two encodings of the same document:
//
//   binary (value-exact):
//     "PMCK" | u32 version | u64 meta_len | meta (JSON text)
//     | u64 tensor_count | per tensor:
//         u64 name_len | name | u64 rank | u64 dims[rank] | f64 values[prod]
//     all integers and doubles little-endian.
//
//   JSON:
//     {"version": 1, "meta": {...},
//      "tensors": [{"name": ..., "shape": [...], "values": [...]}, ...]}

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "polymorph/errors.hpp"
#include "polymorph/nn.hpp"

namespace polymorph {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<ParamTensor> tensors;

  const ParamTensor& find(const std::string& name) const {
    for (const ParamTensor& t : tensors) {
      if (t.name == name) return t;
    }
    throw ConfigError("checkpoint has no tensor named '" + name + "'");
  }
};

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ConfigError("truncated checkpoint");
  return v;
}

inline std::string read_string(std::istream& is, std::uint64_t len) {
  if (len > (1ull << 32)) throw ConfigError("corrupt checkpoint string length");
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  if (!is) throw ConfigError("truncated checkpoint");
  return s;
}

}  // namespace detail

inline void write_binary(std::ostream& os, const Checkpoint& ckpt) {
  os.write("PMCK", 4);
  detail::write_pod(os, kCheckpointVersion);
  const std::string meta = ckpt.meta.dump();
  detail::write_pod(os, static_cast<std::uint64_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  detail::write_pod(os, static_cast<std::uint64_t>(ckpt.tensors.size()));
  for (const ParamTensor& t : ckpt.tensors) {
    detail::write_pod(os, static_cast<std::uint64_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::write_pod(os, static_cast<std::uint64_t>(t.shape.size()));
    for (std::size_t d : t.shape) {
      detail::write_pod(os, static_cast<std::uint64_t>(d));
    }
    os.write(reinterpret_cast<const char*>(t.values.data()),
             static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
}

inline Checkpoint read_binary(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PMCK", 4) != 0) {
    throw ConfigError("not a polymorph checkpoint (bad magic)");
  }
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version " +
                      std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.meta = nlohmann::json::parse(
      detail::read_string(is, detail::read_pod<std::uint64_t>(is)));
  const auto count = detail::read_pod<std::uint64_t>(is);
  for (std::uint64_t k = 0; k < count; ++k) {
    ParamTensor t;
    t.name = detail::read_string(is, detail::read_pod<std::uint64_t>(is));
    const auto rank = detail::read_pod<std::uint64_t>(is);
    if (rank == 0 || rank > 8) throw ConfigError("corrupt tensor rank");
    for (std::uint64_t r = 0; r < rank; ++r) {
      t.shape.push_back(detail::read_pod<std::uint64_t>(is));
    }
    t.values.resize(ParamTensor::element_count(t.shape));
    is.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (!is) throw ConfigError("truncated checkpoint tensor '" + t.name + "'");
    t.grad.assign(t.values.size(), 0.0);
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

inline nlohmann::json to_json(const Checkpoint& ckpt) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["meta"] = ckpt.meta;
  j["tensors"] = nlohmann::json::array();
  for (const ParamTensor& t : ckpt.tensors) {
    j["tensors"].push_back(
        {{"name", t.name}, {"shape", t.shape}, {"values", t.values}});
  }
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("version", 0u) != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version");
  }
  Checkpoint ckpt;
  ckpt.meta = j.at("meta");
  for (const auto& jt : j.at("tensors")) {
    ParamTensor t;
    t.name = jt.at("name").get<std::string>();
    t.shape = jt.at("shape").get<std::vector<std::size_t>>();
    t.values = jt.at("values").get<std::vector<double>>();
    if (t.values.size() != ParamTensor::element_count(t.shape)) {
      throw ConfigError("tensor '" + t.name + "' values do not match shape");
    }
    t.grad.assign(t.values.size(), 0.0);
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

// Chooses the encoding from the extension: ".json" -> JSON, else binary.
inline void save_checkpoint(const std::filesystem::path& path,
                            const Checkpoint& ckpt) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  if (path.extension() == ".json") {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    os << to_json(ckpt).dump();
  } else {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + path.string());
    write_binary(os, ckpt);
  }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (path.extension() == ".json") {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read " + path.string());
    return checkpoint_from_json(nlohmann::json::parse(is));
  }
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read " + path.string());
  return read_binary(is);
}

// --- Mlp <-> checkpoint -----------------------------------------------------

inline nlohmann::json topology_json(const Mlp& net) {
  nlohmann::json acts = nlohmann::json::array();
  for (const DenseLayer& l : net.layers()) {
    acts.push_back(std::string(to_string(l.activation)));
  }
  const MlpSpec s = net.spec();
  return {{"input_dim", s.input_dim},
          {"hidden", s.hidden},
          {"output_dim", s.output_dim},
          {"activations", acts}};
}

inline void append_tensors(Checkpoint& ckpt, const Mlp& net) {
  for (const ParamTensor* p : net.parameters()) ckpt.tensors.push_back(*p);
}

// Rebuilds a net from its topology entry, pulling tensors by their names.
inline Mlp restore_mlp(const Checkpoint& ckpt, const nlohmann::json& topo,
                       const std::string& prefix) {
  const auto acts = topo.at("activations").get<std::vector<std::string>>();
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < acts.size(); ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    DenseLayer layer;
    layer.weight = ckpt.find(base + ".weight");
    layer.bias = ckpt.find(base + ".bias");
    layer.activation = activation_from_string(acts[l]);
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

}  // namespace polymorph

#endif  // POLYMORPH_CHECKPOINT_HPP_
