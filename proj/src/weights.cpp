// SPDX-License-Identifier: Apache-2.0
#include "dpc/weights.hpp"

#include <cstdio>
#include <cstring>

namespace dpc {

namespace {

constexpr char kMagic[4] = {'D', 'P', 'C', 'W'};

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& b, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(b, u);
}

struct Reader {
  const std::vector<std::uint8_t>& b;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > b.size())
      throw FormatError("weights file truncated at offset " + std::to_string(pos));
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(b[pos] | (b[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() {
    std::uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

std::vector<std::uint8_t> serialize_weights(const WeightsFile& wf) {
  std::vector<std::uint8_t> b;
  b.insert(b.end(), kMagic, kMagic + 4);
  put_u16(b, kWeightsVersion);
  put_u16(b, wf.kind);
  put_u16(b, static_cast<std::uint16_t>(wf.config.size()));
  for (auto c : wf.config) put_u32(b, c);
  put_u32(b, static_cast<std::uint32_t>(wf.params.size()));
  for (const auto& [name, t] : wf.params) {
    put_u16(b, static_cast<std::uint16_t>(name.size()));
    b.insert(b.end(), name.begin(), name.end());
    put_u16(b, static_cast<std::uint16_t>(t->rank()));
    for (int d : t->shape) put_u32(b, static_cast<std::uint32_t>(d));
    for (float v : t->values) put_f32(b, v);
  }
  return b;
}

WeightsFile deserialize_weights(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("weights file: bad magic at offset 0");
  r.pos = 4;
  std::uint16_t version = r.u16();
  if (version != kWeightsVersion)
    throw FormatError("weights file: unsupported version " + std::to_string(version));
  WeightsFile wf;
  wf.kind = r.u16();
  std::uint16_t nconf = r.u16();
  wf.config.resize(nconf);
  for (auto& c : wf.config) c = r.u32();
  std::uint32_t nparams = r.u32();
  wf.params.reserve(nparams);
  for (std::uint32_t i = 0; i < nparams; ++i) {
    std::uint16_t nl = r.u16();
    std::string name = r.str(nl);
    std::uint16_t rank = r.u16();
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    std::int64_t n = shape_numel(shape);
    auto t = make_tensor(shape);
    for (std::int64_t j = 0; j < n; ++j) t->values[static_cast<std::size_t>(j)] = r.f32();
    wf.params.emplace_back(std::move(name), std::move(t));
  }
  if (r.pos != bytes.size())
    throw FormatError("weights file: trailing bytes at offset " + std::to_string(r.pos));
  return wf;
}

void save_weights(const WeightsFile& wf, const std::string& path) {
  auto bytes = serialize_weights(wf);
  std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw Error("cannot open for write: " + tmp);
  std::size_t written = std::fwrite(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (written != bytes.size()) {
    std::remove(tmp.c_str());
    throw Error("short write: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error("cannot rename into place: " + path);
  }
}

WeightsFile load_weights(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error("cannot open weights file: " + path);
  std::fseek(f, 0, SEEK_END);
  long sz = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(sz));
  std::size_t got = std::fread(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (got != bytes.size()) throw FormatError("weights file: short read from " + path);
  return deserialize_weights(bytes);
}

std::uint64_t weights_hash(const WeightsFile& wf) {
  auto bytes = serialize_weights(wf);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace dpc
