#include "knng/graphopt.hpp"

#include <algorithm>
#include <stdexcept>

#include "knng/parallel.hpp"

namespace knng {

namespace {

struct RankedEdge {
  PointId id;
  float dist;
};

inline bool edge_closer(const RankedEdge& a, const RankedEdge& b) {
  if (a.dist != b.dist) return a.dist < b.dist;
  return a.id < b.id;
}

}  // namespace

SearchGraph optimize_graph(const KnnGraph& graph, const Dataset& dataset,
                           std::size_t out_degree, std::size_t workers) {
  if (out_degree == 0) out_degree = graph.k;
  if (out_degree > graph.k)
    throw std::invalid_argument("optimize_graph: out_degree must be <= k");
  if (graph.num_sources != dataset.num_points)
    throw std::invalid_argument("optimize_graph: graph/dataset size mismatch");

  const std::size_t n = graph.num_sources;
  const std::size_t k = graph.k;

  // Pass 1: detour pruning, independent per row.
  std::vector<std::uint8_t> kept(n * k, 0);
  parallel_for(n, workers, [&](std::size_t b, std::size_t e, std::size_t) {
    std::vector<PointId> kept_ids;
    for (std::size_t u = b; u < e; ++u) {
      kept_ids.clear();
      auto ids = graph.ids_row(u);
      auto ds = graph.dists_row(u);
      for (std::size_t j = 0; j < k; ++j) {
        const PointId w = ids[j];
        bool detourable = false;
        for (const PointId v : kept_ids) {
          if (dataset.row_distance(v, w) < ds[j]) {
            detourable = true;
            break;
          }
        }
        if (!detourable) {
          kept[u * k + j] = 1;
          kept_ids.push_back(w);
        }
      }
    }
  });

  // Reverse candidates of kept edges, aggregated serially, then sorted.
  std::vector<std::vector<RankedEdge>> reverse(n);
  for (std::size_t u = 0; u < n; ++u) {
    auto ids = graph.ids_row(u);
    auto ds = graph.dists_row(u);
    for (std::size_t j = 0; j < k; ++j) {
      if (kept[u * k + j])
        reverse[ids[j]].push_back({static_cast<PointId>(u), ds[j]});
    }
  }

  SearchGraph out;
  out.num_sources = n;
  out.out_degree = out_degree;
  out.id_space = graph.id_space;
  out.ids.assign(n * out_degree, 0);

  // Pass 2: fill each row to exactly out_degree.
  parallel_for(n, workers, [&](std::size_t b, std::size_t e, std::size_t) {
    std::vector<PointId> row;
    for (std::size_t u = b; u < e; ++u) {
      row.clear();
      auto ids = graph.ids_row(u);
      auto contains = [&row](PointId id) {
        return std::find(row.begin(), row.end(), id) != row.end();
      };
      for (std::size_t j = 0; j < k && row.size() < out_degree; ++j) {
        if (kept[u * k + j]) row.push_back(ids[j]);
      }
      if (row.size() < out_degree) {
        std::sort(reverse[u].begin(), reverse[u].end(), edge_closer);
        for (const auto& cand : reverse[u]) {
          if (row.size() >= out_degree) break;
          if (cand.id != u && !contains(cand.id)) row.push_back(cand.id);
        }
      }
      for (std::size_t j = 0; j < k && row.size() < out_degree; ++j) {
        if (!kept[u * k + j] && !contains(ids[j])) row.push_back(ids[j]);
      }
      // kept + pruned forward edges alone are k >= out_degree ids, so the
      // row is always full here.
      std::copy(row.begin(), row.end(), out.ids.begin() + u * out_degree);
    }
  });
  return out;
}

}  // namespace knng
