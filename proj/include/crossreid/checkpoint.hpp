#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "crossreid/data.hpp"
#include "crossreid/network.hpp"

namespace crossreid {

/// Versioned parameter container. The header pins the architecture (embedding
/// dimension, conv configuration), seeds, the training epoch reached, the RNG
/// stream state, and the train-split channel statistics; entries map parameter
/// names to shape plus raw little-endian scalar values at the checkpoint's
/// precision (32-bit in the default training mode). Round-trips bit-exactly.
struct CheckpointHeader {
  std::uint32_t scalar_bytes = 4;
  NetworkConfig network;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;
  ChannelStats stats;
  std::string rng_state;  // textual mt19937_64 stream state
};

namespace ckpt_detail {

constexpr char kMagic[8] = {'X', 'R', 'I', 'D', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

inline void write_bytes(std::ofstream& os, const void* data, std::size_t n) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

template <typename V>
void write_pod(std::ofstream& os, V v) {
  write_bytes(os, &v, sizeof(V));
}

inline void write_string(std::ofstream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  write_bytes(os, s.data(), s.size());
}

inline void read_bytes(std::ifstream& is, void* data, std::size_t n, const std::string& path) {
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (!is) throw IoError("truncated checkpoint: " + path);
}

template <typename V>
V read_pod(std::ifstream& is, const std::string& path) {
  V v;
  read_bytes(is, &v, sizeof(V), path);
  return v;
}

inline std::string read_string(std::ifstream& is, const std::string& path) {
  const auto n = read_pod<std::uint32_t>(is, path);
  std::string s(n, '\0');
  if (n) read_bytes(is, s.data(), n, path);
  return s;
}

}  // namespace ckpt_detail

template <typename T>
void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                     const NamedTensors<T>& entries) {
  namespace d = ckpt_detail;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot create checkpoint: " + path);

  d::write_bytes(os, d::kMagic, sizeof(d::kMagic));
  d::write_pod<std::uint32_t>(os, d::kVersion);
  d::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(sizeof(T)));

  const auto& e = header.network.encoder;
  for (std::int64_t v : {e.channels, e.resolution, e.conv1_channels, e.conv2_channels, e.kernel,
                         e.pool, e.feature_dim, header.network.num_classes}) {
    d::write_pod<std::int64_t>(os, v);
  }
  d::write_pod<std::uint8_t>(os, header.network.fmr_enabled ? 1 : 0);
  d::write_pod<std::uint64_t>(os, header.network.fixed_seed);
  d::write_pod<std::uint64_t>(os, header.seed);
  d::write_pod<std::int64_t>(os, header.epoch);
  for (int c = 0; c < 3; ++c) d::write_pod<double>(os, header.stats.mean[static_cast<std::size_t>(c)]);
  for (int c = 0; c < 3; ++c) {
    d::write_pod<double>(os, header.stats.stddev[static_cast<std::size_t>(c)]);
  }
  d::write_string(os, header.rng_state);

  d::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    d::write_string(os, name);
    d::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(tensor->shape.size()));
    for (auto dim : tensor->shape) d::write_pod<std::int64_t>(os, dim);
    d::write_bytes(os, tensor->values.data(), tensor->values.size() * sizeof(T));
  }
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

template <typename T>
struct LoadedCheckpoint {
  CheckpointHeader header;
  NamedTensors<T> entries;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  namespace d = ckpt_detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);

  char magic[8];
  d::read_bytes(is, magic, sizeof(magic), path);
  if (std::memcmp(magic, d::kMagic, sizeof(magic)) != 0) {
    throw IoError("not a checkpoint file: " + path);
  }
  const auto version = d::read_pod<std::uint32_t>(is, path);
  if (version != d::kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in: " + path);
  }
  const auto scalar_bytes = d::read_pod<std::uint32_t>(is, path);
  if (scalar_bytes != sizeof(T)) {
    throw IoError("checkpoint precision (" + std::to_string(scalar_bytes * 8) +
                  "-bit) does not match requested mode in: " + path);
  }

  LoadedCheckpoint<T> loaded;
  loaded.header.scalar_bytes = scalar_bytes;
  auto& e = loaded.header.network.encoder;
  e.channels = d::read_pod<std::int64_t>(is, path);
  e.resolution = d::read_pod<std::int64_t>(is, path);
  e.conv1_channels = d::read_pod<std::int64_t>(is, path);
  e.conv2_channels = d::read_pod<std::int64_t>(is, path);
  e.kernel = d::read_pod<std::int64_t>(is, path);
  e.pool = d::read_pod<std::int64_t>(is, path);
  e.feature_dim = d::read_pod<std::int64_t>(is, path);
  loaded.header.network.num_classes = d::read_pod<std::int64_t>(is, path);
  loaded.header.network.fmr_enabled = d::read_pod<std::uint8_t>(is, path) != 0;
  loaded.header.network.fixed_seed = d::read_pod<std::uint64_t>(is, path);
  loaded.header.seed = d::read_pod<std::uint64_t>(is, path);
  loaded.header.epoch = d::read_pod<std::int64_t>(is, path);
  for (int c = 0; c < 3; ++c) {
    loaded.header.stats.mean[static_cast<std::size_t>(c)] = d::read_pod<double>(is, path);
  }
  for (int c = 0; c < 3; ++c) {
    loaded.header.stats.stddev[static_cast<std::size_t>(c)] = d::read_pod<double>(is, path);
  }
  loaded.header.rng_state = d::read_string(is, path);

  const auto n_entries = d::read_pod<std::uint32_t>(is, path);
  loaded.entries.reserve(n_entries);
  for (std::uint32_t i = 0; i < n_entries; ++i) {
    const std::string name = d::read_string(is, path);
    const auto ndim = d::read_pod<std::uint8_t>(is, path);
    std::vector<std::int64_t> shape(ndim);
    for (auto& dim : shape) dim = d::read_pod<std::int64_t>(is, path);
    auto tensor = Tensor<T>::zeros(shape);
    d::read_bytes(is, tensor->values.data(), tensor->values.size() * sizeof(T), path);
    loaded.entries.emplace_back(name, std::move(tensor));
  }
  return loaded;
}

/// Rebuilds a network from a checkpoint: architecture from the header, weights
/// copied into freshly initialized parameters by name.
template <typename T>
Network<T> restore_network(const LoadedCheckpoint<T>& ckpt) {
  Network<T> net = make_network<T>(ckpt.header.network, ckpt.header.seed);
  auto params = named_parameters(net);
  if (params.size() != ckpt.entries.size()) {
    throw IoError("checkpoint entry count " + std::to_string(ckpt.entries.size()) +
                  " does not match network parameter count " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [want_name, dst] = params[i];
    const auto& [got_name, src] = ckpt.entries[i];
    if (want_name != got_name || dst->shape != src->shape) {
      throw IoError("checkpoint entry '" + got_name + "' does not match parameter '" +
                    want_name + "'");
    }
    dst->values = src->values;
  }
  return net;
}

}  // namespace crossreid
