#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "knng/core.hpp"
#include "knng/graphopt.hpp"

namespace knng {

struct SearchParams {
  std::size_t k_s = 10;             // results per query
  std::size_t beam_width = 64;      // internal candidate pool size (>= k_s)
  std::size_t num_entry_points = 16;  // random starts per query (capped at N)
  std::size_t max_hops = 0;         // 0 -> beam_width * 4
  std::uint64_t seed = 0;
  std::size_t workers = 0;
};

/// Q x k_s ID matrix plus parallel distance matrix, rows sorted by (dist, id).
struct SearchResult {
  std::size_t num_queries = 0;
  std::size_t k_s = 0;
  std::vector<PointId> ids;
  std::vector<float> dists;

  std::span<const PointId> ids_row(std::size_t q) const {
    return {ids.data() + q * k_s, k_s};
  }
  std::span<const float> dists_row(std::size_t q) const {
    return {dists.data() + q * k_s, k_s};
  }
};

/// Diagnostics hooks for tests; normal callers pass nullptr.
struct SearchDiagnostics {
  bool collect_scored_ids = false;
  std::vector<std::vector<PointId>> scored_ids;  // per query, in scoring order
  std::vector<std::size_t> hops;                 // expansions per query
};

/// Greedy best-first batch search over a search graph. Each query seeds a
/// bounded sorted beam with random entry points, then repeatedly expands the
/// closest unexpanded beam entry, scoring unvisited out-neighbors, until the
/// beam holds no unexpanded entry or max_hops is reached. Returns the best
/// k_s per query. Queries run independently; results land in disjoint rows.
SearchResult ann_search(const Dataset& queries, const SearchGraph& sgraph,
                        const Dataset& vectors, const SearchParams& params,
                        SearchDiagnostics* diag = nullptr);

struct ThroughputCase {
  std::size_t source_count = 0;
  const SearchGraph* sgraph = nullptr;
  const Dataset* vectors = nullptr;
};

struct ThroughputRow {
  std::size_t source_count = 0;
  std::size_t num_queries = 0;
  double seconds = 0.0;
  double qps = 0.0;
};

/// Measures batch-search throughput per graph size for a fixed query set.
/// Input cases must be ordered by ascending source count.
std::vector<ThroughputRow> search_throughput_probe(
    const std::vector<ThroughputCase>& cases, const Dataset& queries,
    const SearchParams& params);

}  // namespace knng
