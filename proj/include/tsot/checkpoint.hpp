// tsot/checkpoint.hpp

// Copyright 2026  tsot-fnt authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Checkpoint layout:
//
//   "TSOTCKPT"            8 bytes magic
//   version               uint32, little endian (currently 1)
//   manifest_len          uint64, little endian
//   manifest              UTF-8 JSON, manifest_len bytes:
//                           {"tensors": [{"name", "dtype", "shape", "offset",
//                                         "nbytes"}, ...],
//                            "meta": {...}}
//   data                  raw little-endian arrays; offsets are relative to
//                         the first byte after the manifest.

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "tsot/params.hpp"
#include "tsot/tensor.hpp"

namespace tsot {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename S>
struct NamedTensor {
  std::string name;
  Tensor<S> value;
};

template <typename S>
struct Checkpoint {
  std::vector<NamedTensor<S>> tensors;
  nlohmann::json meta = nlohmann::json::object();

  const Tensor<S>* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t.value;
    return nullptr;
  }
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'T', 'S', 'O', 'T', 'C', 'K', 'P', 'T'};

template <typename S>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<S, float>) return "f32";
  else return "f64";
}

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw CheckpointError("checkpoint: truncated header");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

template <typename Src, typename Dst>
void decode_array(const unsigned char* bytes, std::size_t n, Dst* out) {
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char buf[sizeof(Src)];
    std::memcpy(buf, bytes + i * sizeof(Src), sizeof(Src));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(Src));
    Src v;
    std::memcpy(&v, buf, sizeof(Src));
    out[i] = static_cast<Dst>(v);
  }
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::string& path, const Checkpoint<S>& ckpt) {
  nlohmann::json manifest;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    std::uint64_t nbytes = t.value.size() * sizeof(S);
    manifest["tensors"].push_back({{"name", t.name},
                                   {"dtype", detail::dtype_name<S>()},
                                   {"shape", t.value.shape()},
                                   {"offset", offset},
                                   {"nbytes", nbytes}});
    offset += nbytes;
  }
  manifest["meta"] = ckpt.meta;
  std::string header = manifest.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("checkpoint: cannot open '" + path + "' for writing");
  os.write(detail::kCheckpointMagic, 8);
  detail::write_le<std::uint32_t>(os, 1);
  detail::write_le<std::uint64_t>(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& t : ckpt.tensors)
    for (S v : t.value.storage()) detail::write_le<S>(os, v);
  if (!os) throw CheckpointError("checkpoint: write failed for '" + path + "'");
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint: cannot open '" + path + "'");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
    throw CheckpointError("checkpoint: '" + path + "' has no TSOTCKPT magic");
  auto version = detail::read_le<std::uint32_t>(is);
  if (version != 1)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  auto hlen = detail::read_le<std::uint64_t>(is);
  std::string header(hlen, '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(hlen)))
    throw CheckpointError("checkpoint: truncated manifest in '" + path + "'");
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  auto manifest = nlohmann::json::parse(header);

  Checkpoint<S> out;
  out.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& m : manifest.at("tensors")) {
    auto shape = m.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2) throw CheckpointError("checkpoint: expected 2-d tensor shapes");
    auto offset = m.at("offset").get<std::uint64_t>();
    auto nbytes = m.at("nbytes").get<std::uint64_t>();
    auto dtype = m.at("dtype").get<std::string>();
    std::size_t n = shape[0] * shape[1];
    std::size_t elem = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
    if (elem == 0) throw CheckpointError("checkpoint: unknown dtype '" + dtype + "'");
    if (nbytes != n * elem || offset + nbytes > blob.size())
      throw CheckpointError("checkpoint: tensor '" + m.at("name").get<std::string>() +
                            "' extends past end of data");
    Tensor<S> t(shape[0], shape[1]);
    if (elem == 4)
      detail::decode_array<float>(blob.data() + offset, n, t.data());
    else
      detail::decode_array<double>(blob.data() + offset, n, t.data());
    out.tensors.push_back({m.at("name").get<std::string>(), std::move(t)});
  }
  return out;
}

/// Copies every parameter of `store` into a checkpoint, in store order.
template <typename S>
Checkpoint<S> to_checkpoint(const ParamStore<S>& store, nlohmann::json meta = {}) {
  Checkpoint<S> c;
  for (const auto& e : store) c.tensors.push_back({e.name, e.value});
  c.meta = meta.is_null() ? nlohmann::json::object() : std::move(meta);
  return c;
}

/// Loads checkpoint tensors whose names start with `prefix` into `store`.
/// With `require_all`, every store parameter under the prefix must be present.
/// Shape differences are reported all at once.
template <typename S>
std::size_t load_into(ParamStore<S>& store, const Checkpoint<S>& ckpt,
                      const std::string& prefix = "", bool require_all = true) {
  std::string diffs;
  std::size_t loaded = 0;
  for (auto& e : store) {
    if (e.name.rfind(prefix, 0) != 0) continue;
    const Tensor<S>* src = ckpt.find(e.name);
    if (!src) {
      if (require_all) diffs += " missing:" + e.name;
      continue;
    }
    if (!src->same_shape(e.value)) {
      diffs += " " + e.name + ":model" + e.value.shape_str() + "!=ckpt" + src->shape_str();
      continue;
    }
    e.value = *src;
    ++loaded;
  }
  if (!diffs.empty()) throw CheckpointError("architecture mismatch:" + diffs);
  return loaded;
}

}  // namespace tsot
