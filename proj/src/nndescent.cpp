#include "knng/nndescent.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "knng/parallel.hpp"
#include "knng/rng.hpp"

namespace knng {

CandidateBuffer::CandidateBuffer(std::size_t num_points, std::size_t capacity)
    : num_points_(num_points),
      capacity_(capacity),
      slots_(num_points * capacity),
      counts_(std::make_unique<std::atomic<std::uint32_t>[]>(num_points)),
      worst_(num_points, std::numeric_limits<float>::infinity()) {
  for (std::size_t i = 0; i < num_points_; ++i)
    counts_[i].store(0, std::memory_order_relaxed);
}

void CandidateBuffer::refresh_worst(const KnnGraph& g) {
  for (std::size_t i = 0; i < num_points_; ++i)
    worst_[i] = g.dists_row(i)[g.k - 1];
}

KnnGraph init_random_graph(const Dataset& dataset, std::size_t k,
                           std::uint64_t seed, std::size_t workers) {
  const std::size_t n = dataset.num_points;
  if (k == 0 || k >= n)
    throw std::invalid_argument("init_random_graph: need 1 <= k < N");
  KnnGraph g = KnnGraph::allocate(n, k, IdSpace::local);
  parallel_for(n, workers, [&](std::size_t b, std::size_t e, std::size_t) {
    std::vector<NeighborEntry> row(k);
    for (std::size_t r = b; r < e; ++r) {
      Rng rng(mix_seed(seed, r));
      std::size_t fill = 0;
      while (fill < k) {
        // Draw from [0, n-1] skipping r so self never appears.
        auto id = static_cast<PointId>(rng.next_below(n - 1));
        if (id >= r) ++id;
        bool dup = false;
        for (std::size_t j = 0; j < fill; ++j) {
          if (row[j].id == id) {
            dup = true;
            break;
          }
        }
        if (dup) continue;
        row[fill++] = {id, dataset.row_distance(r, id), true};
      }
      std::sort(row.begin(), row.end(),
                [](const NeighborEntry& a, const NeighborEntry& b) {
                  return closer(a, b);
                });
      g.set_row(r, row);
    }
  });
  return g;
}

NeighborSamples sample_neighbors(KnnGraph& graph, double rho, std::uint64_t seed,
                                 std::size_t iter, std::size_t workers) {
  if (rho <= 0.0 || rho > 1.0)
    throw std::invalid_argument("sample_neighbors: rho must be in (0, 1]");
  const std::size_t n = graph.num_sources;
  const std::size_t k = graph.k;
  const auto bound =
      static_cast<std::size_t>(std::ceil(rho * static_cast<double>(k)));
  NeighborSamples s;
  s.bound = bound;
  s.new_fwd.resize(n);
  s.old_fwd.resize(n);
  s.new_rev.resize(n);
  s.old_rev.resize(n);
  const std::uint64_t iter_seed = mix_seed(seed, 0x5a3f1e00ULL + iter);

  parallel_for(n, workers, [&](std::size_t b, std::size_t e, std::size_t) {
    std::vector<std::uint32_t> new_positions;
    for (std::size_t p = b; p < e; ++p) {
      new_positions.clear();
      for (std::size_t j = 0; j < k; ++j) {
        if (graph.flags[p * k + j]) {
          new_positions.push_back(static_cast<std::uint32_t>(j));
        } else {
          s.old_fwd[p].push_back(graph.ids[p * k + j]);
        }
      }
      if (new_positions.size() > bound) {
        Rng rng(mix_seed(iter_seed, p));
        const auto picks = sample_distinct(new_positions.size(), bound, rng);
        std::vector<std::uint32_t> chosen(picks.size());
        for (std::size_t i = 0; i < picks.size(); ++i)
          chosen[i] = new_positions[picks[i]];
        new_positions = std::move(chosen);
      }
      for (const auto j : new_positions) {
        s.new_fwd[p].push_back(graph.ids[p * k + j]);
        graph.flags[p * k + j] = 0;  // consumed by this join round
      }
    }
  });

  // Transposition is a serial aggregation; the per-point reverse sampling
  // that follows is independent again.
  for (std::size_t p = 0; p < n; ++p) {
    for (const auto id : s.new_fwd[p])
      s.new_rev[id].push_back(static_cast<PointId>(p));
    for (const auto id : s.old_fwd[p])
      s.old_rev[id].push_back(static_cast<PointId>(p));
  }
  parallel_for(n, workers, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t p = b; p < e; ++p) {
      Rng rng(mix_seed(iter_seed, 0x8000000000000000ULL | p));
      for (auto* list : {&s.new_rev[p], &s.old_rev[p]}) {
        if (list->size() > bound) {
          const auto picks = sample_distinct(list->size(), bound, rng);
          std::vector<PointId> chosen(picks.size());
          for (std::size_t i = 0; i < picks.size(); ++i)
            chosen[i] = (*list)[picks[i]];
          *list = std::move(chosen);
        }
      }
    }
  });
  return s;
}

namespace {

// new = new_fwd ∪ new_rev, old = (old_fwd ∪ old_rev) \ new, deduplicated, so
// each unordered pair is generated at most once per common point.
void build_join_lists(const NeighborSamples& s, std::size_t p,
                      std::vector<PointId>& new_list,
                      std::vector<PointId>& old_list) {
  new_list.clear();
  old_list.clear();
  auto add_unique = [](std::vector<PointId>& v, PointId id) {
    if (std::find(v.begin(), v.end(), id) == v.end()) v.push_back(id);
  };
  for (const auto id : s.new_fwd[p]) add_unique(new_list, id);
  for (const auto id : s.new_rev[p]) add_unique(new_list, id);
  for (const auto id : s.old_fwd[p]) {
    if (std::find(new_list.begin(), new_list.end(), id) == new_list.end())
      add_unique(old_list, id);
  }
  for (const auto id : s.old_rev[p]) {
    if (std::find(new_list.begin(), new_list.end(), id) == new_list.end())
      add_unique(old_list, id);
  }
}

}  // namespace

JoinCounts local_join(const Dataset& dataset, const NeighborSamples& samples,
                      CandidateBuffer& buffers, std::size_t workers) {
  const std::size_t n = samples.new_fwd.size();
  std::atomic<std::size_t> pairs{0}, appended{0}, dropped{0};
  parallel_for(n, workers, [&](std::size_t b, std::size_t e, std::size_t) {
    std::size_t local_pairs = 0, local_app = 0, local_drop = 0;
    std::vector<PointId> new_list, old_list;
    auto offer = [&](PointId u, PointId v, float d) {
      if (buffers.try_append(u, {v, d, true})) {
        ++local_app;
      } else {
        ++local_drop;
      }
      if (buffers.try_append(v, {u, d, true})) {
        ++local_app;
      } else {
        ++local_drop;
      }
    };
    for (std::size_t p = b; p < e; ++p) {
      build_join_lists(samples, p, new_list, old_list);
      for (std::size_t i = 0; i < new_list.size(); ++i) {
        for (std::size_t j = i + 1; j < new_list.size(); ++j) {
          const float d = dataset.row_distance(new_list[i], new_list[j]);
          ++local_pairs;
          offer(new_list[i], new_list[j], d);
        }
        for (const auto v : old_list) {
          if (v == new_list[i]) continue;
          const float d = dataset.row_distance(new_list[i], v);
          ++local_pairs;
          offer(new_list[i], v, d);
        }
      }
    }
    pairs.fetch_add(local_pairs, std::memory_order_relaxed);
    appended.fetch_add(local_app, std::memory_order_relaxed);
    dropped.fetch_add(local_drop, std::memory_order_relaxed);
  });
  return {pairs.load(), appended.load(), dropped.load()};
}

std::size_t apply_candidates(KnnGraph& graph, CandidateBuffer& buffers,
                             std::size_t workers) {
  const std::size_t n = graph.num_sources;
  std::atomic<std::size_t> accepted{0};
  parallel_for(n, workers, [&](std::size_t b, std::size_t e, std::size_t) {
    std::size_t local_accepted = 0;
    std::vector<NeighborEntry> row;
    for (std::size_t p = b; p < e; ++p) {
      const std::size_t m = buffers.fill(p);
      if (m != 0) {
        row = graph.row_entries(p);
        std::size_t fill = row.size();
        const NeighborEntry* cands = buffers.entries(p);
        for (std::size_t c = 0; c < m; ++c) {
          if (knn_insert(row.data(), fill, graph.k, cands[c])) ++local_accepted;
        }
        graph.set_row(p, row);
        buffers.set_worst(p, row[graph.k - 1].dist);
        buffers.reset(p);
      }
    }
    accepted.fetch_add(local_accepted, std::memory_order_relaxed);
  });
  return accepted.load();
}

KnnGraph nn_descent(const Dataset& dataset, const NnDescentParams& params,
                    NnDescentStats* stats) {
  if (params.rho <= 0.0 || params.rho > 1.0)
    throw std::invalid_argument("nn_descent: rho must be in (0, 1]");
  if (params.delta < 0.0)
    throw std::invalid_argument("nn_descent: delta must be >= 0");
  const std::size_t capacity =
      params.candidate_capacity ? params.candidate_capacity : 2 * params.k;
  if (capacity < params.k)
    throw std::invalid_argument("nn_descent: candidate_capacity must be >= k");

  KnnGraph graph =
      init_random_graph(dataset, params.k, params.seed, params.workers);
  CandidateBuffer buffers(dataset.num_points, capacity);
  buffers.refresh_worst(graph);

  const double threshold = params.delta * static_cast<double>(params.k) *
                           static_cast<double>(dataset.num_points);
  if (stats) {
    stats->accepted_per_iter.clear();
    stats->iterations = 0;
  }
  for (std::size_t iter = 0; iter < params.max_iters; ++iter) {
    NeighborSamples samples = sample_neighbors(graph, params.rho, params.seed,
                                               iter, params.workers);
    local_join(dataset, samples, buffers, params.workers);
    const std::size_t accepted = apply_candidates(graph, buffers, params.workers);
    if (stats) {
      stats->accepted_per_iter.push_back(accepted);
      stats->iterations = iter + 1;
    }
    if (static_cast<double>(accepted) < threshold) break;
  }
  return graph;
}

}  // namespace knng
