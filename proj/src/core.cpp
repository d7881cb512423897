#include "knng/core.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace knng {

const char* to_string(MetricKind m) {
  return m == MetricKind::l2 ? "l2" : "cosine";
}

MetricKind metric_from_string(const std::string& s) {
  if (s == "l2") return MetricKind::l2;
  if (s == "cosine") return MetricKind::cosine;
  throw std::invalid_argument("unknown metric: " + s);
}

float distance(MetricKind m, std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("distance: dimension mismatch");
  return m == MetricKind::l2 ? detail::l2_f32(a.data(), b.data(), a.size())
                             : detail::cosine_t(a.data(), b.data(), a.size());
}

float distance(MetricKind m, std::span<const std::uint8_t> a,
               std::span<const std::uint8_t> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("distance: dimension mismatch");
  return m == MetricKind::l2 ? detail::l2_u8(a.data(), b.data(), a.size())
                             : detail::cosine_t(a.data(), b.data(), a.size());
}

Dataset Dataset::empty(std::size_t dims, ElemKind kind, MetricKind metric) {
  Dataset d;
  d.dims = dims;
  d.elem_kind = kind;
  d.metric = metric;
  return d;
}

Dataset Dataset::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > num_points)
    throw std::invalid_argument("Dataset::slice out of range");
  Dataset out = empty(dims, elem_kind, metric);
  out.num_points = count;
  if (elem_kind == ElemKind::f32) {
    out.f32.assign(f32.begin() + begin * dims, f32.begin() + (begin + count) * dims);
  } else {
    out.u8.assign(u8.begin() + begin * dims, u8.begin() + (begin + count) * dims);
  }
  return out;
}

void Dataset::append(const Dataset& other) {
  if (other.dims != dims || other.elem_kind != elem_kind || other.metric != metric)
    throw std::invalid_argument("Dataset::append: incompatible dataset");
  if (elem_kind == ElemKind::f32) {
    f32.insert(f32.end(), other.f32.begin(), other.f32.end());
  } else {
    u8.insert(u8.end(), other.u8.begin(), other.u8.end());
  }
  num_points += other.num_points;
}

std::uint64_t Dataset::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::uint64_t shape[2] = {num_points, dims};
  const std::uint8_t tags[2] = {static_cast<std::uint8_t>(elem_kind),
                                static_cast<std::uint8_t>(metric)};
  feed(shape, sizeof(shape));
  feed(tags, sizeof(tags));
  if (elem_kind == ElemKind::f32) {
    feed(f32.data(), f32.size() * sizeof(float));
  } else {
    feed(u8.data(), u8.size());
  }
  return h;
}

std::size_t Dataset::payload_bytes() const {
  return elem_kind == ElemKind::f32 ? f32.size() * sizeof(float) : u8.size();
}

void Dataset::validate() const {
  const std::size_t n =
      elem_kind == ElemKind::f32 ? f32.size() : u8.size();
  if (n != num_points * dims)
    throw std::logic_error("Dataset: data length != num_points * dims");
}

bool knn_insert(NeighborEntry* row, std::size_t& fill, std::size_t k,
                const NeighborEntry& cand) {
  for (std::size_t i = 0; i < fill; ++i) {
    if (row[i].id == cand.id) return false;
  }
  if (fill >= k && !closer(cand, row[k - 1])) return false;
  std::size_t pos = fill < k ? fill : k - 1;
  while (pos > 0 && closer(cand, row[pos - 1])) --pos;
  const std::size_t last = fill < k ? fill : k - 1;
  for (std::size_t i = last; i > pos; --i) row[i] = row[i - 1];
  row[pos] = cand;
  if (fill < k) ++fill;
  return true;
}

std::vector<NeighborEntry> merge_rows(std::span<const NeighborEntry> a,
                                      std::span<const NeighborEntry> b,
                                      std::size_t k) {
  std::vector<NeighborEntry> out;
  out.reserve(std::min(k, a.size() + b.size()));
  std::size_t i = 0, j = 0;
  auto push = [&out](const NeighborEntry& e) {
    for (const auto& o : out) {
      if (o.id == e.id) return;
    }
    out.push_back(e);
  };
  while (out.size() < k && (i < a.size() || j < b.size())) {
    if (j >= b.size() || (i < a.size() && closer(a[i], b[j]))) {
      push(a[i++]);
    } else {
      push(b[j++]);
    }
  }
  return out;
}

KnnGraph KnnGraph::allocate(std::size_t n, std::size_t k, IdSpace space) {
  KnnGraph g;
  g.num_sources = n;
  g.k = k;
  g.id_space = space;
  g.ids.assign(n * k, 0);
  g.dists.assign(n * k, 0.0f);
  g.flags.assign(n * k, 0);
  return g;
}

std::vector<NeighborEntry> KnnGraph::row_entries(std::size_t r) const {
  std::vector<NeighborEntry> out(k);
  for (std::size_t j = 0; j < k; ++j) {
    out[j] = {ids[r * k + j], dists[r * k + j],
              flags.empty() ? false : flags[r * k + j] != 0};
  }
  return out;
}

void KnnGraph::set_row(std::size_t r, std::span<const NeighborEntry> entries) {
  if (entries.size() != k)
    throw std::invalid_argument("KnnGraph::set_row: wrong row length");
  for (std::size_t j = 0; j < k; ++j) {
    ids[r * k + j] = entries[j].id;
    dists[r * k + j] = entries[j].dist;
    if (!flags.empty()) flags[r * k + j] = entries[j].flag ? 1 : 0;
  }
}

void check_graph_invariants(const KnnGraph& g) {
  if (g.ids.size() != g.num_sources * g.k || g.dists.size() != g.ids.size())
    throw std::logic_error("KnnGraph: matrix shape mismatch");
  for (std::size_t r = 0; r < g.num_sources; ++r) {
    auto ids = g.ids_row(r);
    auto ds = g.dists_row(r);
    for (std::size_t j = 0; j < g.k; ++j) {
      if (ds[j] < 0.0f) throw std::logic_error("KnnGraph: negative distance");
      if (ids[j] == r && g.id_space == IdSpace::local)
        throw std::logic_error("KnnGraph: self-loop");
      if (j > 0) {
        const bool ordered = ds[j - 1] < ds[j] ||
                             (ds[j - 1] == ds[j] && ids[j - 1] < ids[j]);
        if (!ordered) throw std::logic_error("KnnGraph: row not sorted");
      }
      for (std::size_t m = j + 1; m < g.k; ++m) {
        if (ids[j] == ids[m]) throw std::logic_error("KnnGraph: duplicate id");
      }
    }
  }
}

}  // namespace knng
