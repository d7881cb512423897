#include "knng/wire.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace knng::wire {

namespace {

void put_bytes(std::vector<std::byte>& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::byte*>(p);
  out.insert(out.end(), b, b + n);
}

template <class T>
void put_le(std::vector<std::byte>& out, T v) {
  // Little-endian host assumed for the scalar stores below.
  static_assert(std::is_trivially_copyable_v<T>);
  put_bytes(out, &v, sizeof(T));
}

template <class T>
T get_le(const std::byte* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

std::vector<std::byte> make_header(RegionKind kind, std::uint64_t rows,
                                   std::uint64_t cols, std::uint8_t elem) {
  std::vector<std::byte> out;
  out.reserve(kHeaderBytes);
  put_le(out, kMagic);
  put_le(out, static_cast<std::uint8_t>(kind));
  put_le(out, rows);
  put_le(out, cols);
  put_le(out, elem);
  return out;
}

std::size_t payload_size(RegionKind kind, std::uint64_t rows, std::uint64_t cols,
                         std::uint8_t elem) {
  const std::uint64_t cells = rows * cols;
  switch (kind) {
    case RegionKind::dataset:
      return cells * (elem == kElemU8 ? 1 : 4);
    case RegionKind::knng:
    case RegionKind::result:
      return cells * (sizeof(PointId) + sizeof(float));
    case RegionKind::sgraph:
      return cells * sizeof(PointId);
  }
  throw std::runtime_error("wire: unknown region kind");
}

}  // namespace

std::size_t region_size(RegionKind kind, std::uint64_t rows, std::uint64_t cols,
                        std::uint8_t elem_kind) {
  return kHeaderBytes + payload_size(kind, rows, cols, elem_kind);
}

Region serialize(const Dataset& d) {
  const std::uint8_t elem = d.elem_kind == ElemKind::f32 ? kElemF32 : kElemU8;
  Region r;
  r.bytes = make_header(RegionKind::dataset, d.num_points, d.dims, elem);
  if (d.elem_kind == ElemKind::f32) {
    put_bytes(r.bytes, d.f32.data(), d.f32.size() * sizeof(float));
  } else {
    put_bytes(r.bytes, d.u8.data(), d.u8.size());
  }
  return r;
}

Region serialize(const KnnGraph& g) {
  Region r;
  r.bytes = make_header(RegionKind::knng, g.num_sources, g.k, kElemF32);
  put_bytes(r.bytes, g.ids.data(), g.ids.size() * sizeof(PointId));
  put_bytes(r.bytes, g.dists.data(), g.dists.size() * sizeof(float));
  return r;
}

Region serialize(const SearchGraph& g) {
  Region r;
  r.bytes = make_header(RegionKind::sgraph, g.num_sources, g.out_degree, kElemU32);
  put_bytes(r.bytes, g.ids.data(), g.ids.size() * sizeof(PointId));
  return r;
}

Region serialize(const SearchResult& res) {
  Region r;
  r.bytes = make_header(RegionKind::result, res.num_queries, res.k_s, kElemF32);
  put_bytes(r.bytes, res.ids.data(), res.ids.size() * sizeof(PointId));
  put_bytes(r.bytes, res.dists.data(), res.dists.size() * sizeof(float));
  return r;
}

Header peek_header(const Region& r) {
  if (r.bytes.size() < kHeaderBytes)
    throw std::runtime_error("wire: region truncated before header end");
  const std::byte* p = r.bytes.data();
  const auto magic = get_le<std::uint32_t>(p);
  if (magic != kMagic) throw std::runtime_error("wire: bad magic");
  Header h;
  const auto kind = get_le<std::uint8_t>(p + 4);
  if (kind > 3) throw std::runtime_error("wire: bad region kind");
  h.kind = static_cast<RegionKind>(kind);
  h.rows = get_le<std::uint64_t>(p + 5);
  h.cols = get_le<std::uint64_t>(p + 13);
  h.elem_kind = get_le<std::uint8_t>(p + 21);
  if (h.elem_kind > kElemU32) throw std::runtime_error("wire: bad elem kind");
  const std::size_t want =
      kHeaderBytes + payload_size(h.kind, h.rows, h.cols, h.elem_kind);
  if (r.bytes.size() != want)
    throw std::runtime_error("wire: payload size mismatch");
  return h;
}

Dataset deserialize_dataset(const Region& r, MetricKind metric) {
  const Header h = peek_header(r);
  if (h.kind != RegionKind::dataset)
    throw std::runtime_error("wire: expected dataset region");
  Dataset d = Dataset::empty(h.cols, h.elem_kind == kElemU8 ? ElemKind::u8 : ElemKind::f32,
                             metric);
  d.num_points = h.rows;
  const std::byte* p = r.bytes.data() + kHeaderBytes;
  const std::size_t cells = h.rows * h.cols;
  if (d.elem_kind == ElemKind::f32) {
    d.f32.resize(cells);
    std::memcpy(d.f32.data(), p, cells * sizeof(float));
  } else {
    d.u8.resize(cells);
    std::memcpy(d.u8.data(), p, cells);
  }
  return d;
}

KnnGraph deserialize_knng(const Region& r, IdSpace space) {
  const Header h = peek_header(r);
  if (h.kind != RegionKind::knng)
    throw std::runtime_error("wire: expected knng region");
  KnnGraph g = KnnGraph::allocate(h.rows, h.cols, space);
  const std::byte* p = r.bytes.data() + kHeaderBytes;
  const std::size_t cells = h.rows * h.cols;
  std::memcpy(g.ids.data(), p, cells * sizeof(PointId));
  std::memcpy(g.dists.data(), p + cells * sizeof(PointId), cells * sizeof(float));
  return g;
}

SearchGraph deserialize_sgraph(const Region& r, IdSpace space) {
  const Header h = peek_header(r);
  if (h.kind != RegionKind::sgraph)
    throw std::runtime_error("wire: expected sgraph region");
  SearchGraph g;
  g.num_sources = h.rows;
  g.out_degree = h.cols;
  g.id_space = space;
  g.ids.resize(h.rows * h.cols);
  std::memcpy(g.ids.data(), r.bytes.data() + kHeaderBytes,
              g.ids.size() * sizeof(PointId));
  return g;
}

SearchResult deserialize_result(const Region& r) {
  const Header h = peek_header(r);
  if (h.kind != RegionKind::result)
    throw std::runtime_error("wire: expected result region");
  SearchResult res;
  res.num_queries = h.rows;
  res.k_s = h.cols;
  const std::size_t cells = h.rows * h.cols;
  res.ids.resize(cells);
  res.dists.resize(cells);
  const std::byte* p = r.bytes.data() + kHeaderBytes;
  std::memcpy(res.ids.data(), p, cells * sizeof(PointId));
  std::memcpy(res.dists.data(), p + cells * sizeof(PointId), cells * sizeof(float));
  return res;
}

void save_region(const Region& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("wire: cannot open for write: " + path.string());
  out.write(reinterpret_cast<const char*>(r.bytes.data()),
            static_cast<std::streamsize>(r.bytes.size()));
  if (!out) throw std::runtime_error("wire: write failed: " + path.string());
}

Region load_region(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("wire: cannot open: " + path.string());
  const std::streamsize n = in.tellg();
  in.seekg(0);
  Region r;
  r.bytes.resize(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(r.bytes.data()), n);
  if (!in) throw std::runtime_error("wire: read failed: " + path.string());
  return r;
}

}  // namespace knng::wire
