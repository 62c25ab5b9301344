// SPDX-License-Identifier: Apache-2.0
//
// Portable weights container. Layout, all little-endian:
//   magic "DPCW" | version u16 | kind u16 | nconfig u16 | config u32[n]
//   | nparams u32 | per param: name_len u16, name bytes, rank u16,
//     dims u32[rank], raw f32 values.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpc/tensor.hpp"

namespace dpc {

inline constexpr std::uint16_t kWeightsVersion = 1;
inline constexpr std::uint16_t kWeightsKindCodec = 1;
inline constexpr std::uint16_t kWeightsKindFeatureNet = 2;

struct WeightsFile {
  std::uint16_t kind = 0;
  std::vector<std::uint32_t> config;
  std::vector<std::pair<std::string, TensorPtr>> params;
};

void save_weights(const WeightsFile& wf, const std::string& path);
WeightsFile load_weights(const std::string& path);

// Serialized byte image of the file (what save_weights writes).
std::vector<std::uint8_t> serialize_weights(const WeightsFile& wf);
WeightsFile deserialize_weights(const std::vector<std::uint8_t>& bytes);

// FNV-1a over the serialized bytes; stored in bitstream headers so the
// decoder can detect a model mismatch.
std::uint64_t weights_hash(const WeightsFile& wf);

}  // namespace dpc
