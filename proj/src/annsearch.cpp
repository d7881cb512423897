#include "knng/annsearch.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "knng/parallel.hpp"
#include "knng/rng.hpp"

namespace knng {

namespace {

struct BeamEntry {
  PointId id;
  float dist;
  bool expanded;
};

inline bool beam_closer(const BeamEntry& a, const BeamEntry& b) {
  if (a.dist != b.dist) return a.dist < b.dist;
  return a.id < b.id;
}

// Bounded sorted insert; drops the tail when the beam is full.
void beam_insert(std::vector<BeamEntry>& beam, std::size_t width, BeamEntry e) {
  if (beam.size() == width && !beam_closer(e, beam.back())) return;
  auto it = std::upper_bound(beam.begin(), beam.end(), e, beam_closer);
  beam.insert(it, e);
  if (beam.size() > width) beam.pop_back();
}

// Visit stamps shared across the queries one worker handles; avoids an O(N)
// clear per query.
struct VisitedSet {
  std::vector<std::uint32_t> stamp;
  std::uint32_t epoch = 0;

  explicit VisitedSet(std::size_t n) : stamp(n, 0) {}
  void next_query() { ++epoch; }
  bool test_and_set(PointId id) {
    if (stamp[id] == epoch) return true;
    stamp[id] = epoch;
    return false;
  }
};

}  // namespace

SearchResult ann_search(const Dataset& queries, const SearchGraph& sgraph,
                        const Dataset& vectors, const SearchParams& params,
                        SearchDiagnostics* diag) {
  if (queries.dims != vectors.dims || queries.elem_kind != vectors.elem_kind ||
      queries.metric != vectors.metric)
    throw std::invalid_argument("ann_search: query/vector datasets incompatible");
  if (sgraph.num_sources != vectors.num_points)
    throw std::invalid_argument("ann_search: graph/vector row count mismatch");
  if (params.k_s == 0 || params.k_s > vectors.num_points)
    throw std::invalid_argument("ann_search: k_s must be in [1, num points]");
  if (params.k_s > params.beam_width)
    throw std::invalid_argument("ann_search: k_s must be <= beam_width");

  const std::size_t nq = queries.num_points;
  const std::size_t n = vectors.num_points;
  const std::size_t width = params.beam_width;
  const std::size_t max_hops =
      params.max_hops ? params.max_hops : params.beam_width * 4;
  // Seeding at least k_s distinct starts keeps result rows full even on
  // poorly connected graphs.
  const std::size_t entries =
      std::min(n, std::max(params.num_entry_points, params.k_s));

  SearchResult result;
  result.num_queries = nq;
  result.k_s = params.k_s;
  result.ids.assign(nq * params.k_s, 0);
  result.dists.assign(nq * params.k_s, 0.0f);
  if (diag) {
    diag->hops.assign(nq, 0);
    if (diag->collect_scored_ids) diag->scored_ids.assign(nq, {});
  }
  if (nq == 0) return result;

  parallel_for(nq, params.workers, [&](std::size_t b, std::size_t e, std::size_t) {
    VisitedSet visited(n);
    std::vector<BeamEntry> beam;
    beam.reserve(width + 1);
    for (std::size_t q = b; q < e; ++q) {
      visited.next_query();
      beam.clear();
      auto score = [&](PointId id) {
        const float d = cross_distance(queries, q, vectors, id);
        if (diag && diag->collect_scored_ids) diag->scored_ids[q].push_back(id);
        return d;
      };
      Rng rng(mix_seed(params.seed, 0xa11ce000ULL + q));
      const auto starts = sample_distinct(n, entries, rng);
      for (const auto id : starts) {
        visited.test_and_set(id);
        beam_insert(beam, width, {id, score(id), false});
      }
      std::size_t hops = 0;
      while (hops < max_hops) {
        std::size_t idx = beam.size();
        for (std::size_t i = 0; i < beam.size(); ++i) {
          if (!beam[i].expanded) {
            idx = i;
            break;
          }
        }
        if (idx == beam.size()) break;  // every beam entry expanded
        beam[idx].expanded = true;
        const PointId u = beam[idx].id;
        for (const PointId nb : sgraph.row(u)) {
          if (visited.test_and_set(nb)) continue;
          beam_insert(beam, width, {nb, score(nb), false});
        }
        ++hops;
      }
      if (diag) diag->hops[q] = hops;
      const std::size_t out = std::min(params.k_s, beam.size());
      for (std::size_t i = 0; i < out; ++i) {
        result.ids[q * params.k_s + i] = beam[i].id;
        result.dists[q * params.k_s + i] = beam[i].dist;
      }
    }
  });
  return result;
}

std::vector<ThroughputRow> search_throughput_probe(
    const std::vector<ThroughputCase>& cases, const Dataset& queries,
    const SearchParams& params) {
  if (queries.num_points == 0)
    throw std::invalid_argument("search_throughput_probe: empty query set");
  for (std::size_t i = 1; i < cases.size(); ++i) {
    if (cases[i].source_count < cases[i - 1].source_count)
      throw std::invalid_argument("search_throughput_probe: sizes must ascend");
  }
  std::vector<ThroughputRow> table;
  table.reserve(cases.size());
  for (const auto& c : cases) {
    const auto t0 = std::chrono::steady_clock::now();
    ann_search(queries, *c.sgraph, *c.vectors, params);
    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    ThroughputRow row;
    row.source_count = c.source_count;
    row.num_queries = queries.num_points;
    row.seconds = secs;
    row.qps = secs > 0.0 ? static_cast<double>(queries.num_points) / secs : 0.0;
    table.push_back(row);
  }
  return table;
}

}  // namespace knng
