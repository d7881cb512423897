#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace knng {

using PointId = std::uint32_t;

enum class ElemKind : std::uint8_t { f32 = 0, u8 = 1 };
enum class MetricKind : std::uint8_t { l2 = 0, cosine = 1 };
enum class IdSpace : std::uint8_t { local = 0, global = 1 };

const char* to_string(MetricKind m);
MetricKind metric_from_string(const std::string& s);

namespace detail {

inline float l2_f32(const float* a, const float* b, std::size_t d) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < d; ++i) {
    const float t = a[i] - b[i];
    acc += t * t;
  }
  return std::sqrt(acc);
}

inline float l2_u8(const std::uint8_t* a, const std::uint8_t* b, std::size_t d) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < d; ++i) {
    const float t = static_cast<float>(a[i]) - static_cast<float>(b[i]);
    acc += t * t;
  }
  return std::sqrt(acc);
}

template <class T>
inline float cosine_t(const T* a, const T* b, std::size_t d) {
  float dot = 0.0f, na = 0.0f, nb = 0.0f;
  for (std::size_t i = 0; i < d; ++i) {
    const float x = static_cast<float>(a[i]);
    const float y = static_cast<float>(b[i]);
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  // Zero vectors carry no direction; treat as "no similarity".
  if (na == 0.0f || nb == 0.0f) return 1.0f;
  const float v = 1.0f - dot / (std::sqrt(na) * std::sqrt(nb));
  return v < 0.0f ? 0.0f : v;
}

}  // namespace detail

/// Checked distance between two raw vectors. Throws on dimension mismatch.
float distance(MetricKind m, std::span<const float> a, std::span<const float> b);
float distance(MetricKind m, std::span<const std::uint8_t> a,
               std::span<const std::uint8_t> b);

/// N fixed-dimensional feature vectors bound to an element type and metric.
/// uint8 data is promoted to float at distance-computation time; distances are
/// always float32.
struct Dataset {
  std::size_t num_points = 0;
  std::size_t dims = 0;
  ElemKind elem_kind = ElemKind::f32;
  MetricKind metric = MetricKind::l2;
  std::vector<float> f32;
  std::vector<std::uint8_t> u8;

  static Dataset empty(std::size_t dims, ElemKind kind, MetricKind metric);

  std::span<const float> frow(std::size_t i) const {
    return {f32.data() + i * dims, dims};
  }
  std::span<const std::uint8_t> brow(std::size_t i) const {
    return {u8.data() + i * dims, dims};
  }

  float row_distance(std::size_t i, std::size_t j) const {
    if (elem_kind == ElemKind::f32) {
      const float* base = f32.data();
      return metric == MetricKind::l2
                 ? detail::l2_f32(base + i * dims, base + j * dims, dims)
                 : detail::cosine_t(base + i * dims, base + j * dims, dims);
    }
    const std::uint8_t* base = u8.data();
    return metric == MetricKind::l2
               ? detail::l2_u8(base + i * dims, base + j * dims, dims)
               : detail::cosine_t(base + i * dims, base + j * dims, dims);
  }

  /// Rows [begin, begin+count) as a new dataset.
  Dataset slice(std::size_t begin, std::size_t count) const;
  /// Appends rows of other (same dims, kind, metric).
  void append(const Dataset& other);
  /// FNV-1a over shape, metric and raw payload bytes.
  std::uint64_t content_hash() const;
  std::size_t payload_bytes() const;
  void validate() const;
};

/// Distance between row i of a and row j of b (same dims/kind/metric assumed;
/// callers validate once per batch, not per pair).
inline float cross_distance(const Dataset& a, std::size_t i, const Dataset& b,
                            std::size_t j) {
  if (a.elem_kind == ElemKind::f32) {
    return a.metric == MetricKind::l2
               ? detail::l2_f32(a.f32.data() + i * a.dims,
                                b.f32.data() + j * b.dims, a.dims)
               : detail::cosine_t(a.f32.data() + i * a.dims,
                                  b.f32.data() + j * b.dims, a.dims);
  }
  return a.metric == MetricKind::l2
             ? detail::l2_u8(a.u8.data() + i * a.dims, b.u8.data() + j * b.dims,
                             a.dims)
             : detail::cosine_t(a.u8.data() + i * a.dims,
                                b.u8.data() + j * b.dims, a.dims);
}

struct NeighborEntry {
  PointId id = 0;
  float dist = 0.0f;
  bool flag = false;  // "new" marker consumed by neighbor sampling

  bool operator==(const NeighborEntry& o) const {
    return id == o.id && dist == o.dist;
  }
};

/// Global tie rule: (dist, id) lexicographic ascending.
inline bool closer(const NeighborEntry& a, const NeighborEntry& b) {
  if (a.dist != b.dist) return a.dist < b.dist;
  return a.id < b.id;
}

/// Inserts cand into the sorted, duplicate-free prefix row[0..fill) of a
/// k-bounded list. Returns false if cand.id is already present or cand is not
/// closer than the current k-th entry. The final contents of a row depend only
/// on the set of offered candidates, not on their order.
bool knn_insert(NeighborEntry* row, std::size_t& fill, std::size_t k,
                const NeighborEntry& cand);

/// k closest distinct entries of the union of two sorted, duplicate-free rows.
std::vector<NeighborEntry> merge_rows(std::span<const NeighborEntry> a,
                                      std::span<const NeighborEntry> b,
                                      std::size_t k);

/// N x k neighbor-ID matrix plus a parallel N x k distance matrix, both
/// row-major and contiguous. Rows are sorted ascending by (dist, id), free of
/// duplicates and self-loops.
struct KnnGraph {
  std::size_t num_sources = 0;
  std::size_t k = 0;
  IdSpace id_space = IdSpace::local;
  std::vector<PointId> ids;
  std::vector<float> dists;
  std::vector<std::uint8_t> flags;  // transient construction state

  static KnnGraph allocate(std::size_t n, std::size_t k, IdSpace space);

  std::span<PointId> ids_row(std::size_t r) { return {ids.data() + r * k, k}; }
  std::span<const PointId> ids_row(std::size_t r) const {
    return {ids.data() + r * k, k};
  }
  std::span<float> dists_row(std::size_t r) {
    return {dists.data() + r * k, k};
  }
  std::span<const float> dists_row(std::size_t r) const {
    return {dists.data() + r * k, k};
  }

  std::vector<NeighborEntry> row_entries(std::size_t r) const;
  void set_row(std::size_t r, std::span<const NeighborEntry> entries);
};

/// Throws std::logic_error on any violated row invariant. Test/debug helper.
void check_graph_invariants(const KnnGraph& g);

}  // namespace knng
