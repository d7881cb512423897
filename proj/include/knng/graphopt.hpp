#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "knng/core.hpp"

namespace knng {

/// Fixed-out-degree, ID-only adjacency optimized for greedy search. Carries no
/// distance matrix; detour checks recompute distances from the dataset.
struct SearchGraph {
  std::size_t num_sources = 0;
  std::size_t out_degree = 0;
  IdSpace id_space = IdSpace::local;
  std::vector<PointId> ids;

  std::span<const PointId> row(std::size_t r) const {
    return {ids.data() + r * out_degree, out_degree};
  }
  std::span<PointId> row(std::size_t r) {
    return {ids.data() + r * out_degree, out_degree};
  }
};

/// Converts a kNNG into a search graph. Two passes:
///  1. detour pruning: scanning each row in ascending rank, edge (u,w) is
///     pruned if some earlier-kept neighbor v has sigma(v,w) < sigma(u,w);
///  2. each row is refilled to exactly out_degree from kept forward edges,
///     then reverse edges of kept forward edges (closest first), then pruned
///     forward edges (closest first).
/// Deterministic for identical inputs regardless of worker count.
SearchGraph optimize_graph(const KnnGraph& graph, const Dataset& dataset,
                           std::size_t out_degree, std::size_t workers = 0);

}  // namespace knng
