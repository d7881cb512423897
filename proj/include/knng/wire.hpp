#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "knng/annsearch.hpp"
#include "knng/core.hpp"
#include "knng/graphopt.hpp"

namespace knng::wire {

// Serialized region layout, little-endian, bit-exact:
//   magic u32 | kind u8 | rows u64 | cols u64 | elem_kind u8 | payload
// Payloads: dataset -> row-major values; knng/result -> u32 id matrix then
// f32 distance matrix; sgraph -> u32 id matrix.
inline constexpr std::uint32_t kMagic = 0x474E4E4BU;  // "KNNG"
inline constexpr std::size_t kHeaderBytes = 4 + 1 + 8 + 8 + 1;

enum class RegionKind : std::uint8_t { dataset = 0, knng = 1, sgraph = 2, result = 3 };

// elem_kind byte values
inline constexpr std::uint8_t kElemF32 = 0;
inline constexpr std::uint8_t kElemU8 = 1;
inline constexpr std::uint8_t kElemU32 = 2;

struct Region {
  std::vector<std::byte> bytes;
  std::size_t size() const { return bytes.size(); }
};

struct Header {
  RegionKind kind = RegionKind::dataset;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::uint8_t elem_kind = kElemF32;
};

std::size_t region_size(RegionKind kind, std::uint64_t rows, std::uint64_t cols,
                        std::uint8_t elem_kind);

Region serialize(const Dataset& d);
Region serialize(const KnnGraph& g);
Region serialize(const SearchGraph& g);
Region serialize(const SearchResult& r);

/// Validates magic and payload size; throws std::runtime_error on corruption.
Header peek_header(const Region& r);

Dataset deserialize_dataset(const Region& r, MetricKind metric);
KnnGraph deserialize_knng(const Region& r, IdSpace space);
SearchGraph deserialize_sgraph(const Region& r, IdSpace space);
SearchResult deserialize_result(const Region& r);

void save_region(const Region& r, const std::filesystem::path& path);
Region load_region(const std::filesystem::path& path);

}  // namespace knng::wire
