#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/gaussian_layer.hpp"
#include "core/network.hpp"

namespace momentflow {

inline constexpr const char* kNetworkSchema = "momentflow-net/1";
inline constexpr const char* kMomentsSchema = "momentflow-moments/1";
inline constexpr const char* kTraceSchema = "momentflow-trace/1";

/// CRC-64/XZ (reflected ECMA-182 polynomial). check("123456789") =
/// 0x995dc9bbdf1939fa.
std::uint64_t crc64(std::span<const std::byte> data);

// On-disk container: an 8-byte little-endian manifest length, the JSON
// manifest, then a float64 little-endian blob. The manifest records the
// schema string, the blob byte count and its CRC-64.
struct Container {
  nlohmann::json manifest;
  std::vector<std::byte> blob;

  // Appends values to the blob, returning the byte offset of the first one.
  std::uint64_t append(std::span<const double> values);
  // Reads `count` doubles at `offset`; throws shape_error when out of range.
  std::vector<double> read(std::uint64_t offset, std::size_t count) const;
};

void write_container(const std::filesystem::path& path, Container& container,
                     const std::string& schema);
Container read_container(const std::filesystem::path& path,
                         const std::string& expected_schema);

void save_network(const NetworkSpec& net, const std::filesystem::path& path);
NetworkSpec load_network(const std::filesystem::path& path);

void save_moments(const GaussianMoments& moments, const std::filesystem::path& path);
GaussianMoments load_moments(const std::filesystem::path& path);

}  // namespace momentflow
