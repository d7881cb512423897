#include "knng/evalio.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "knng/parallel.hpp"
#include "knng/rng.hpp"

namespace knng {

namespace {

std::size_t elem_bytes(ElemKind k) { return k == ElemKind::f32 ? 4 : 1; }

std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open: " + path.string());
  const std::streamsize n = in.tellg();
  in.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(n));
  in.read(buf.data(), n);
  if (!in) throw FormatError("read failed: " + path.string());
  return buf;
}

}  // namespace

Dataset read_vecs(const std::filesystem::path& path, ElemKind kind,
                  MetricKind metric) {
  const auto buf = read_all(path);
  Dataset d = Dataset::empty(0, kind, metric);
  const std::size_t esz = elem_bytes(kind);
  std::size_t pos = 0;
  while (pos < buf.size()) {
    if (pos + 4 > buf.size())
      throw FormatError(path.string() + ": truncated dimension field");
    std::int32_t dim;
    std::memcpy(&dim, buf.data() + pos, 4);
    pos += 4;
    if (dim <= 0) throw FormatError(path.string() + ": non-positive row dimension");
    if (d.num_points == 0) {
      d.dims = static_cast<std::size_t>(dim);
    } else if (static_cast<std::size_t>(dim) != d.dims) {
      std::ostringstream os;
      os << path.string() << ": inconsistent row dimension " << dim
         << " (expected " << d.dims << ")";
      throw FormatError(os.str());
    }
    const std::size_t row_bytes = d.dims * esz;
    if (pos + row_bytes > buf.size())
      throw FormatError(path.string() + ": truncated row payload");
    if (kind == ElemKind::f32) {
      const std::size_t off = d.f32.size();
      d.f32.resize(off + d.dims);
      std::memcpy(d.f32.data() + off, buf.data() + pos, row_bytes);
    } else {
      const std::size_t off = d.u8.size();
      d.u8.resize(off + d.dims);
      std::memcpy(d.u8.data() + off, buf.data() + pos, row_bytes);
    }
    pos += row_bytes;
    ++d.num_points;
  }
  return d;
}

void write_vecs(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for write: " + path.string());
  const auto dim = static_cast<std::int32_t>(d.dims);
  for (std::size_t i = 0; i < d.num_points; ++i) {
    out.write(reinterpret_cast<const char*>(&dim), 4);
    if (d.elem_kind == ElemKind::f32) {
      out.write(reinterpret_cast<const char*>(d.f32.data() + i * d.dims),
                static_cast<std::streamsize>(d.dims * 4));
    } else {
      out.write(reinterpret_cast<const char*>(d.u8.data() + i * d.dims),
                static_cast<std::streamsize>(d.dims));
    }
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

IdMatrix read_ivecs(const std::filesystem::path& path) {
  const auto buf = read_all(path);
  IdMatrix m;
  std::size_t pos = 0;
  while (pos < buf.size()) {
    if (pos + 4 > buf.size()) throw FormatError(path.string() + ": truncated dimension field");
    std::int32_t dim;
    std::memcpy(&dim, buf.data() + pos, 4);
    pos += 4;
    if (dim <= 0) throw FormatError(path.string() + ": non-positive row dimension");
    if (m.rows == 0) {
      m.cols = static_cast<std::size_t>(dim);
    } else if (static_cast<std::size_t>(dim) != m.cols) {
      throw FormatError(path.string() + ": inconsistent row dimension");
    }
    if (pos + m.cols * 4 > buf.size())
      throw FormatError(path.string() + ": truncated row payload");
    const std::size_t off = m.v.size();
    m.v.resize(off + m.cols);
    std::memcpy(m.v.data() + off, buf.data() + pos, m.cols * 4);
    pos += m.cols * 4;
    ++m.rows;
  }
  return m;
}

void write_ivecs(const IdMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for write: " + path.string());
  const auto dim = static_cast<std::int32_t>(m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    out.write(reinterpret_cast<const char*>(&dim), 4);
    out.write(reinterpret_cast<const char*>(m.v.data() + i * m.cols),
              static_cast<std::streamsize>(m.cols * 4));
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

GroundTruth brute_force_knng(const Dataset& d, std::size_t k, std::size_t workers) {
  if (k >= d.num_points)
    throw std::invalid_argument("brute_force_knng: k must be < N");
  GroundTruth gt;
  gt.graph = KnnGraph::allocate(d.num_points, k, IdSpace::local);
  gt.dataset_hash = d.content_hash();
  gt.k = k;
  gt.metric = d.metric;
  KnnGraph& g = gt.graph;
  parallel_for(d.num_points, workers, [&](std::size_t b, std::size_t e, std::size_t) {
    std::vector<NeighborEntry> row(k);
    for (std::size_t r = b; r < e; ++r) {
      std::size_t fill = 0;
      for (std::size_t j = 0; j < d.num_points; ++j) {
        if (j == r) continue;
        knn_insert(row.data(), fill, k,
                   {static_cast<PointId>(j), d.row_distance(r, j), false});
      }
      g.set_row(r, row);
    }
  });
  return gt;
}

GroundTruth brute_force_knng_cached(const Dataset& d, std::size_t k,
                                    const std::filesystem::path& cache_dir,
                                    std::size_t workers) {
  std::filesystem::create_directories(cache_dir);
  std::ostringstream name;
  name << "gt_" << std::hex << d.content_hash() << std::dec << "_k" << k << "_"
       << to_string(d.metric) << ".knng";
  const auto path = cache_dir / name.str();
  if (std::filesystem::exists(path)) {
    GroundTruth gt;
    gt.graph = load_graph(path, IdSpace::local);
    gt.dataset_hash = d.content_hash();
    gt.k = k;
    gt.metric = d.metric;
    if (gt.graph.num_sources == d.num_points && gt.graph.k == k) return gt;
  }
  GroundTruth gt = brute_force_knng(d, k, workers);
  save_graph(gt.graph, path);
  return gt;
}

double recall_at_k(const KnnGraph& test, const KnnGraph& truth, std::size_t k_eval) {
  if (k_eval == 0 || k_eval > test.k || k_eval > truth.k)
    throw std::invalid_argument("recall_at_k: k_eval out of range");
  // Rows must describe the same point set; a source-count mismatch means the
  // graphs live in different id spaces.
  if (test.num_sources != truth.num_sources)
    throw std::invalid_argument("recall_at_k: graphs not comparable");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < test.num_sources; ++r) {
    auto t = test.ids_row(r);
    auto g = truth.ids_row(r);
    for (std::size_t i = 0; i < k_eval; ++i) {
      for (std::size_t j = 0; j < k_eval; ++j) {
        if (t[i] == g[j]) {
          ++hits;
          break;
        }
      }
    }
  }
  return static_cast<double>(hits) /
         static_cast<double>(test.num_sources * k_eval);
}

double recall_at_k(const KnnGraph& test, const GroundTruth& truth,
                   std::size_t k_eval) {
  return recall_at_k(test, truth.graph, k_eval);
}

double distance_threshold_recall(const KnnGraph& test, const KnnGraph& reference,
                                 std::size_t k_eval) {
  if (k_eval == 0 || k_eval > test.k || k_eval > reference.k)
    throw std::invalid_argument("distance_threshold_recall: k_eval out of range");
  if (test.num_sources != reference.num_sources)
    throw std::invalid_argument("distance_threshold_recall: graphs not comparable");
  double total = 0.0;
  for (std::size_t r = 0; r < test.num_sources; ++r) {
    const float threshold = reference.dists_row(r)[k_eval - 1];
    auto ds = test.dists_row(r);
    std::size_t count = 0;
    for (std::size_t j = 0; j < test.k && ds[j] <= threshold; ++j) ++count;
    total += static_cast<double>(std::min(count, k_eval)) /
             static_cast<double>(k_eval);
  }
  return total / static_cast<double>(test.num_sources);
}

Dataset synth_shifted_copies(const Dataset& d, std::size_t copies, float epsilon) {
  if (epsilon <= 0.0f)
    throw std::invalid_argument("synth_shifted_copies: epsilon must be > 0");
  if (copies < 1) throw std::invalid_argument("synth_shifted_copies: copies >= 1");
  if (d.dims == 0 || d.elem_kind != ElemKind::f32)
    throw std::invalid_argument("synth_shifted_copies: needs float data with >= 1 dim");
  Dataset out = d;
  for (std::size_t c = 1; c < copies; ++c) {
    const std::size_t axis = (c - 1) % d.dims;
    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    for (std::size_t i = 0; i < out.num_points; ++i) {
      const float v = out.f32[i * d.dims + axis];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const float shift = hi - lo + epsilon;
    Dataset copy = d;
    for (std::size_t i = 0; i < copy.num_points; ++i)
      copy.f32[i * d.dims + axis] += shift;
    out.append(copy);
  }
  return out;
}

Dataset gen_random_dataset(std::size_t n, std::size_t dims, Distribution dist,
                           std::uint64_t seed, std::size_t clusters,
                           MetricKind metric) {
  if (n == 0) throw std::invalid_argument("gen_random_dataset: n must be >= 1");
  if (dims == 0) throw std::invalid_argument("gen_random_dataset: dims must be >= 1");
  Dataset d = Dataset::empty(dims, ElemKind::f32, metric);
  d.num_points = n;
  d.f32.resize(n * dims);
  Rng rng(mix_seed(seed, 0xda7a5e7));
  switch (dist) {
    case Distribution::uniform:
      for (auto& v : d.f32) v = rng.next_float();
      break;
    case Distribution::gaussian:
      for (auto& v : d.f32) v = rng.next_gaussian();
      break;
    case Distribution::clustered: {
      if (clusters == 0)
        throw std::invalid_argument("gen_random_dataset: clustered needs clusters >= 1");
      std::vector<float> centers(clusters * dims);
      for (auto& v : centers) v = 5.0f * rng.next_gaussian();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % clusters;
        for (std::size_t j = 0; j < dims; ++j)
          d.f32[i * dims + j] = centers[c * dims + j] + rng.next_gaussian();
      }
      break;
    }
  }
  return d;
}

void save_graph(const KnnGraph& g, const std::filesystem::path& path) {
  wire::save_region(wire::serialize(g), path);
}

KnnGraph load_graph(const std::filesystem::path& path, IdSpace space) {
  return wire::deserialize_knng(wire::load_region(path), space);
}

void save_sgraph(const SearchGraph& g, const std::filesystem::path& path) {
  wire::save_region(wire::serialize(g), path);
}

SearchGraph load_sgraph(const std::filesystem::path& path, IdSpace space) {
  return wire::deserialize_sgraph(wire::load_region(path), space);
}

}  // namespace knng
