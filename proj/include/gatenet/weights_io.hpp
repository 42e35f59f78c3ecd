#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "gatenet/net.hpp"
#include "gatenet/tensor.hpp"

namespace gatenet {

// On-disk model container, little-endian:
//   magic "GNWT" | u32 version | u32 entry count | entries
// entry: u16 name length | name bytes | u8 dtype | u8 ndim | u32 dims[ndim] |
// payload. dtype 1 = 64-bit reals, dtype 2 = raw bytes (used for the embedded
// JSON config). Round trips are bit-exact.
struct WeightEntry {
  std::string name;
  std::uint8_t dtype = 1;
  std::vector<std::uint32_t> dims;
  std::vector<double> f64;        // dtype 1 payload
  std::vector<std::uint8_t> raw;  // dtype 2 payload
};

struct WeightContainer {
  std::uint32_t version = 1;
  std::vector<WeightEntry> entries;

  const WeightEntry* find(const std::string& name) const;
};

void save_weights(const WeightContainer& container, std::ostream& out);
void save_weights(const WeightContainer& container, const std::string& path);
WeightContainer load_weights(std::istream& in);
WeightContainer load_weights(const std::string& path);

// Model packing: one dtype-1 entry per parameter plus a dtype-2 "config"
// entry holding the ModelConfig as JSON.
WeightContainer pack_model(const ModelConfig& cfg, const ModelParams& params);
std::pair<ModelConfig, ModelParams> unpack_model(const WeightContainer& container);

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& json_text);

}  // namespace gatenet
