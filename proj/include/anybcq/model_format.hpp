#pragma once

// ABCQ container for multi-precision models, and memory-footprint accounting.
//
// Layout (little-endian):
//   "ABCQ" | u32 version | u32 header_length | header (JSON text)
//   | planes 1..pH, each rows * ceil(cols/32) u32 words, row-major
//   | scale sets p = pL..pH, each p*rows*groups values (plane, row, group)
//   | offsets for each p = pL..pH, rows*groups values (asymmetric only)
//   | u32 CRC-32 of every preceding byte
// Scale values are real32 (scale_width 4) or IEEE half (scale_width 2).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "anybcq/progressive.hpp"

namespace anybcq {

inline constexpr std::uint32_t kAbcqVersion = 1;
// Magic, version, header length and trailing CRC.
inline constexpr std::size_t kAbcqFixedBytes = 16;

struct SerializeOptions {
  std::size_t scale_width = 4;
  // Free-form strings stored under "metadata" in the header.
  std::map<std::string, std::string> metadata;
};

struct ContainerInfo {
  std::size_t scale_width = 4;
  std::size_t header_bytes = 0;
  std::size_t file_bytes = 0;
  std::map<std::string, std::string> metadata;
};

std::vector<std::uint8_t> encode_model(const MultiPrecisionModel& model,
                                       const SerializeOptions& opts = {});
MultiPrecisionModel decode_model(std::span<const std::uint8_t> bytes, ContainerInfo* info = nullptr);

void serialize(const MultiPrecisionModel& model, const std::filesystem::path& path,
               const SerializeOptions& opts = {});
MultiPrecisionModel deserialize(const std::filesystem::path& path, ContainerInfo* info = nullptr);

std::uint16_t float_to_half(float value);
float half_to_float(std::uint16_t bits);

struct FootprintRow {
  std::string label;
  std::uint64_t scale_bytes = 0;
  std::uint64_t binary_bytes = 0;
  std::uint64_t total_bytes = 0;
};

struct FootprintReport {
  std::vector<FootprintRow> per_precision;  // one standalone model per p
  FootprintRow multi_model;                 // sum of the standalone models
  FootprintRow shared;                      // planes once + every scale set
};

struct FootprintQuery {
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::uint64_t group_size = 128;
  std::size_t min_precision = 2;
  std::size_t max_precision = 4;
  QuantMode mode = QuantMode::kSymmetric;
  std::size_t scale_width = 2;
};

FootprintReport footprint(const FootprintQuery& query);
FootprintQuery footprint_query(const MultiPrecisionModel& model, std::size_t scale_width = 2);

// Aligned table in decimal gigabytes (1e9 bytes) with Scale/Binary/Total.
std::string format_footprint_table(const FootprintReport& report);
// One `key=value` line per entry, values in bytes.
std::string format_footprint_kv(const FootprintReport& report);
std::string format_footprint_csv(const FootprintReport& report);

}  // namespace anybcq
