#pragma once

// Binary checkpoint container shared by every trained model:
//
//   "STUDACKP" | u32 version | u64 payload_bytes | payload | u32 crc32(payload)
//   payload  = u32 meta_len | meta JSON (config echo + metadata)
//              u32 blob_count | blobs...
//   blob     = u32 name_len | name | u8 dtype (0=f32, 1=f64) | u32 rank | i32 dims[rank] | raw little-endian data

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <type_traits>
#include <vector>

#include "studa/core/errors.hpp"
#include "studa/core/nn.hpp"
#include "studa/core/tensor.hpp"

namespace studa {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'S', 'T', 'U', 'D', 'A', 'C', 'K', 'P'};

struct Blob {
  std::uint8_t dtype = 0;
  Shape shape;
  std::vector<std::uint8_t> bytes;
};

template <class T>
constexpr std::uint8_t dtype_code() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? 0 : 1;
}

class Checkpoint {
 public:
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Blob> blobs;

  template <class T>
  void put(const std::string& name, const Tensor<T>& t) {
    Blob b;
    b.dtype = dtype_code<T>();
    b.shape = t.shape();
    b.bytes.resize(t.size() * sizeof(T));
    std::memcpy(b.bytes.data(), t.data(), b.bytes.size());
    blobs[name] = std::move(b);
  }

  template <class T>
  Tensor<T> get(const std::string& name) const {
    auto it = blobs.find(name);
    if (it == blobs.end()) throw CheckpointError("missing blob " + name);
    const Blob& b = it->second;
    if (b.dtype != dtype_code<T>()) throw CheckpointError("blob " + name + " has a different scalar type");
    Tensor<T> t(b.shape);
    std::memcpy(t.data(), b.bytes.data(), b.bytes.size());
    return t;
  }

  template <class T>
  void put_parameters(const nn::ParameterSet<T>& ps) {
    for (const auto& [n, v] : ps.items()) put(n, v.value());
  }

  template <class T>
  void load_parameters(nn::ParameterSet<T>& ps) const {
    std::map<std::string, Tensor<T>> m;
    for (const auto& [n, _] : ps.items()) m.emplace(n, get<T>(n));
    ps.load(m);
  }

  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> payload;
    auto put_raw = [&](const void* p, std::size_t n) {
      const auto* c = static_cast<const std::uint8_t*>(p);
      payload.insert(payload.end(), c, c + n);
    };
    auto put_u32 = [&](std::uint32_t v) { put_raw(&v, 4); };
    const std::string m = meta.dump();
    put_u32(static_cast<std::uint32_t>(m.size()));
    put_raw(m.data(), m.size());
    put_u32(static_cast<std::uint32_t>(blobs.size()));
    for (const auto& [name, b] : blobs) {
      put_u32(static_cast<std::uint32_t>(name.size()));
      put_raw(name.data(), name.size());
      put_raw(&b.dtype, 1);
      put_u32(static_cast<std::uint32_t>(b.shape.size()));
      for (int d : b.shape) put_raw(&d, 4);
      put_raw(b.bytes.data(), b.bytes.size());
    }
    std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 8);
    auto append = [&](const void* p, std::size_t n) {
      const auto* c = static_cast<const std::uint8_t*>(p);
      out.insert(out.end(), c, c + n);
    };
    append(&kCheckpointVersion, 4);
    const std::uint64_t len = payload.size();
    append(&len, 8);
    out.insert(out.end(), payload.begin(), payload.end());
    const std::uint32_t crc = static_cast<std::uint32_t>(crc32(0L, payload.data(), static_cast<uInt>(payload.size())));
    append(&crc, 4);
    return out;
  }

  static Checkpoint deserialize(const std::vector<std::uint8_t>& buf) {
    if (buf.size() < 20 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
      throw CorruptionError("bad magic or truncated header");
    std::uint32_t version;
    std::memcpy(&version, buf.data() + 8, 4);
    if (version != kCheckpointVersion)
      throw VersionError("file format version " + std::to_string(version) + ", reader supports " +
                         std::to_string(kCheckpointVersion));
    std::uint64_t len;
    std::memcpy(&len, buf.data() + 12, 8);
    if (buf.size() != 20 + len + 4) throw CorruptionError("truncated or oversized payload");
    const std::uint8_t* payload = buf.data() + 20;
    std::uint32_t crc;
    std::memcpy(&crc, payload + len, 4);
    if (crc != static_cast<std::uint32_t>(crc32(0L, payload, static_cast<uInt>(len))))
      throw CorruptionError("checksum mismatch");

    std::size_t pos = 0;
    auto take = [&](void* dst, std::size_t n) {
      if (pos + n > len) throw CorruptionError("payload overrun");
      std::memcpy(dst, payload + pos, n);
      pos += n;
    };
    auto take_u32 = [&] {
      std::uint32_t v;
      take(&v, 4);
      return v;
    };
    Checkpoint ck;
    std::string m(take_u32(), '\0');
    take(m.data(), m.size());
    ck.meta = nlohmann::json::parse(m);
    const std::uint32_t count = take_u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name(take_u32(), '\0');
      take(name.data(), name.size());
      Blob b;
      take(&b.dtype, 1);
      if (b.dtype > 1) throw CorruptionError("unknown dtype in blob " + name);
      b.shape.resize(take_u32());
      for (auto& d : b.shape) take(&d, 4);
      b.bytes.resize(numel_of(b.shape) * (b.dtype == 0 ? 4 : 8));
      take(b.bytes.data(), b.bytes.size());
      ck.blobs.emplace(std::move(name), std::move(b));
    }
    if (pos != len) throw CorruptionError("trailing payload bytes");
    return ck;
  }

  // Writes via a temporary file and rename so a crash never leaves a
  // half-written checkpoint under the final name.
  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto bytes = serialize();
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary);
      if (!f) throw Error("cannot write " + tmp);
      f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      if (!f) throw Error("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open " + path.string());
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize(buf);
  }
};

// FNV-1a over the raw file bytes, hex encoded. Used to prove an artifact is
// unchanged across pipeline rounds.
inline std::string file_hash(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace studa
