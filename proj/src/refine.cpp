#include "knng/refine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <stdexcept>

#include "knng/parallel.hpp"
#include "knng/rng.hpp"

namespace knng {

namespace {

bool is_pow2(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::size_t log2_exact(std::size_t v) {
  std::size_t l = 0;
  while ((std::size_t{1} << l) < v) ++l;
  return l;
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void append_graph_rows(KnnGraph& acc, const KnnGraph& g) {
  if (acc.num_sources == 0) {
    acc = g;
    return;
  }
  if (acc.k != g.k) throw std::invalid_argument("graph concat: k mismatch");
  acc.ids.insert(acc.ids.end(), g.ids.begin(), g.ids.end());
  acc.dists.insert(acc.dists.end(), g.dists.begin(), g.dists.end());
  acc.flags.insert(acc.flags.end(), g.flags.begin(), g.flags.end());
  acc.num_sources += g.num_sources;
}

void shift_ids(KnnGraph& g, std::int64_t delta) {
  for (auto& id : g.ids)
    id = static_cast<PointId>(static_cast<std::int64_t>(id) + delta);
}

// Folds a search-result row (ids offset by id_base into the internal global
// space) into each local graph row.
void merge_results_into(KnnGraph& graph, const SearchResult& res,
                        std::size_t id_base) {
  std::vector<NeighborEntry> cand(res.k_s);
  for (std::size_t r = 0; r < graph.num_sources; ++r) {
    auto ids = res.ids_row(r);
    auto ds = res.dists_row(r);
    for (std::size_t j = 0; j < res.k_s; ++j)
      cand[j] = {static_cast<PointId>(ids[j] + id_base), ds[j], false};
    const auto merged = merge_rows(graph.row_entries(r), cand, graph.k);
    graph.set_row(r, merged);
  }
}

std::size_t effective_out_degree(const RefineConfig& cfg) {
  return cfg.out_degree ? cfg.out_degree : cfg.k;
}

}  // namespace

RuntimeBreakdown predicted_runtime(const CostModel& cm, double n_points,
                                   std::size_t ranks, std::size_t groups) {
  if (!is_pow2(ranks) || !is_pow2(groups) || groups > ranks)
    throw std::invalid_argument(
        "predicted_runtime: P and M must be powers of two with M <= P");
  const double p = static_cast<double>(ranks);
  const double m = static_cast<double>(groups);
  const double per_rank = n_points / p;
  const double hop = cm.alpha + per_rank * cm.beta;
  const double levels = std::log2(p / m);
  RuntimeBreakdown r;
  r.tree = cm.query_seconds * per_rank * levels + (p / m - 1.0) * hop;
  r.merge = (p / m) * hop;
  r.flat = (m - 1.0) * (cm.query_seconds * per_rank + (p / m) * hop);
  r.total = r.tree + r.merge + r.flat;
  return r;
}

Partition partition_dataset(const Dataset& dataset, std::size_t ranks,
                            std::uint64_t seed) {
  const std::size_t n = dataset.num_points;
  if (ranks == 0 || ranks > n)
    throw std::invalid_argument("partition_dataset: need 1 <= P <= N");
  Partition part;
  part.to_external.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    part.to_external[i] = static_cast<PointId>(i);
  if (ranks > 1) {
    Rng rng(mix_seed(seed, 0x9a71710ULL));
    shuffle(part.to_external, rng);
  }
  part.offsets.resize(ranks + 1, 0);
  const std::size_t base = n / ranks;
  const std::size_t extra = n % ranks;
  for (std::size_t r = 0; r < ranks; ++r)
    part.offsets[r + 1] = part.offsets[r] + base + (r < extra ? 1 : 0);
  part.locals.reserve(ranks);
  for (std::size_t r = 0; r < ranks; ++r) {
    Dataset local = Dataset::empty(dataset.dims, dataset.elem_kind, dataset.metric);
    local.num_points = part.size_of(r);
    if (dataset.elem_kind == ElemKind::f32) {
      local.f32.resize(local.num_points * dataset.dims);
    } else {
      local.u8.resize(local.num_points * dataset.dims);
    }
    for (std::size_t i = 0; i < local.num_points; ++i) {
      const std::size_t src = part.to_external[part.offsets[r] + i];
      if (dataset.elem_kind == ElemKind::f32) {
        std::copy_n(dataset.f32.data() + src * dataset.dims, dataset.dims,
                    local.f32.data() + i * dataset.dims);
      } else {
        std::copy_n(dataset.u8.data() + src * dataset.dims, dataset.dims,
                    local.u8.data() + i * dataset.dims);
      }
    }
    part.locals.push_back(std::move(local));
  }
  return part;
}

std::size_t tree_levels(std::size_t ranks, std::size_t groups) {
  if (!is_pow2(ranks) || !is_pow2(groups) || groups > ranks)
    throw std::invalid_argument("tree_levels: invalid P or M");
  return log2_exact(ranks / groups);
}

TreeLevel tree_schedule(std::size_t ranks, std::size_t groups, std::size_t rank,
                        std::size_t level) {
  const std::size_t levels = tree_levels(ranks, groups);
  if (rank >= ranks) throw std::invalid_argument("tree_schedule: rank out of range");
  if (level >= levels)
    throw std::invalid_argument("tree_schedule: level out of range");
  const std::size_t size = std::size_t{1} << level;
  const std::size_t block = rank / size;
  TreeLevel t;
  t.group_lo = block * size;
  t.group_hi = t.group_lo + size;
  const std::size_t partner_lo = (block ^ 1U) * size;
  t.partners.resize(size);
  for (std::size_t i = 0; i < size; ++i) t.partners[i] = partner_lo + i;
  return t;
}

namespace refine_detail {

SearchParams effective_search_params(const RefineConfig& cfg) {
  SearchParams sp = cfg.search;
  sp.k_s = cfg.k_s ? cfg.k_s : cfg.k;
  sp.workers = 1;  // ranks are already concurrent
  return sp;
}

std::size_t effective_groups(const Partition& partition, const RefineConfig& cfg) {
  const std::size_t p = partition.num_ranks();
  if (p == 1) return 1;
  bool skip = cfg.skip_tree_phase;
  if (!skip && cfg.max_concat_bytes != 0) {
    // Largest per-rank footprint on the tree path: one group span of dataset
    // rows plus its kNNG rows plus the optimized graph.
    const std::size_t group_size = p / cfg.groups;
    std::size_t span_points = 0;
    for (std::size_t g = 0; g < cfg.groups; ++g) {
      span_points = std::max(span_points,
                             partition.offsets[(g + 1) * group_size] -
                                 partition.offsets[g * group_size]);
    }
    const std::size_t dims = partition.locals.front().dims;
    const std::size_t esz =
        partition.locals.front().elem_kind == ElemKind::f32 ? 4 : 1;
    const std::size_t estimate =
        span_points * (dims * esz + cfg.k * (sizeof(PointId) + sizeof(float)) +
                       effective_out_degree(cfg) * sizeof(PointId));
    if (estimate > cfg.max_concat_bytes) skip = true;
  }
  return skip ? p : cfg.groups;
}

// One tree level: pull the adjacent partner group's datasets and graphs,
// concatenate in rank order, remap ids into the concatenated index space,
// optimize, search with the local points as queries, and fold the global-id
// results into the local graph. A barrier closes every level.
static void tree_level_rank(RankHandle& h, const Partition& partition,
                            const RefineConfig& cfg, std::size_t level,
                            std::size_t groups, KnnGraph& graph,
                            Dataset* span_ds) {
  const std::size_t i = h.rank();
  const Dataset& local = partition.locals[i];
  const TreeLevel sched =
      tree_schedule(partition.num_ranks(), groups, i, level);
  const std::size_t base = partition.offsets[sched.partners.front()];

  Dataset pulled_ds = Dataset::empty(local.dims, local.elem_kind, local.metric);
  KnnGraph pulled_g;
  for (const std::size_t j : sched.partners) {
    pulled_ds.append(
        wire::deserialize_dataset(h.get(j, kDatasetRegion), local.metric));
    append_graph_rows(pulled_g,
                      wire::deserialize_knng(h.get(j, kGraphRegion), IdSpace::global));
  }
  shift_ids(pulled_g, -static_cast<std::int64_t>(base));
  pulled_g.id_space = IdSpace::local;

  const SearchGraph sg =
      optimize_graph(pulled_g, pulled_ds, effective_out_degree(cfg), 1);
  const SearchResult res =
      ann_search(local, sg, pulled_ds, effective_search_params(cfg));
  merge_results_into(graph, res, base);

  if (span_ds != nullptr) {
    // The partner block is adjacent to the span accumulated so far; keep the
    // accumulation in rank order so the grouped merge can reuse it.
    if (base < partition.offsets[sched.group_lo]) {
      Dataset joined = std::move(pulled_ds);
      joined.append(*span_ds);
      *span_ds = std::move(joined);
    } else {
      span_ds->append(pulled_ds);
    }
  }

  h.publish(kGraphRegion, wire::serialize(graph));
  h.barrier();
}

void tree_refine_rank(RankHandle& h, const Partition& partition,
                      const RefineConfig& cfg, KnnGraph& graph,
                      std::vector<KnnGraph>* level_snapshots) {
  const std::size_t groups = effective_groups(partition, cfg);
  const std::size_t levels = tree_levels(partition.num_ranks(), groups);
  for (std::size_t level = 0; level < levels; ++level) {
    tree_level_rank(h, partition, cfg, level, groups, graph, nullptr);
    if (level_snapshots) level_snapshots->push_back(graph);
  }
}

// span_ds variant used by the full pipeline (keeps the pulled datasets).
static void tree_refine_rank_span(RankHandle& h, const Partition& partition,
                                  const RefineConfig& cfg, KnnGraph& graph,
                                  Dataset& span_ds,
                                  std::vector<KnnGraph>* level_snapshots) {
  const std::size_t groups = effective_groups(partition, cfg);
  const std::size_t levels = tree_levels(partition.num_ranks(), groups);
  for (std::size_t level = 0; level < levels; ++level) {
    tree_level_rank(h, partition, cfg, level, groups, graph, &span_ds);
    if (level_snapshots) level_snapshots->push_back(graph);
  }
}

SearchGraph grouped_merge_rank(RankHandle& h, const Partition& partition,
                               const RefineConfig& cfg, const KnnGraph& graph,
                               const Dataset* span_ds) {
  const std::size_t i = h.rank();
  const std::size_t groups = effective_groups(partition, cfg);
  const std::size_t group_size = partition.num_ranks() / groups;
  const std::size_t glo = (i / group_size) * group_size;
  const std::size_t ghi = glo + group_size;
  const std::size_t base = partition.offsets[glo];

  KnnGraph concat;
  Dataset group_ds =
      Dataset::empty(partition.locals[i].dims, partition.locals[i].elem_kind,
                     partition.locals[i].metric);
  for (std::size_t j = glo; j < ghi; ++j) {
    if (j == i) {
      append_graph_rows(concat, graph);
    } else {
      append_graph_rows(concat, wire::deserialize_knng(h.get(j, kGraphRegion),
                                                       IdSpace::global));
    }
    if (span_ds == nullptr) {
      if (j == i) {
        group_ds.append(partition.locals[i]);
      } else {
        group_ds.append(wire::deserialize_dataset(h.get(j, kDatasetRegion),
                                                  partition.locals[i].metric));
      }
    }
  }
  shift_ids(concat, -static_cast<std::int64_t>(base));
  concat.id_space = IdSpace::local;
  const Dataset& vectors = span_ds ? *span_ds : group_ds;
  SearchGraph gs = optimize_graph(concat, vectors, effective_out_degree(cfg), 1);
  h.publish(kSearchGraphRegion, wire::serialize(gs));
  h.barrier();
  return gs;
}

SearchGraph grouped_merge_rank(RankHandle& h, const Partition& partition,
                               const RefineConfig& cfg, const KnnGraph& graph) {
  return grouped_merge_rank(h, partition, cfg, graph, nullptr);
}

void flat_refine_rank(RankHandle& h, const Partition& partition,
                      const RefineConfig& cfg, const SearchGraph& /*group_graph*/,
                      KnnGraph& graph) {
  const std::size_t i = h.rank();
  const std::size_t groups = effective_groups(partition, cfg);
  if (groups <= 1) return;
  const std::size_t group_size = partition.num_ranks() / groups;
  const std::size_t my_group = i / group_size;
  const std::size_t pos = i % group_size;
  const Dataset& local = partition.locals[i];
  const SearchParams sp = effective_search_params(cfg);

  struct Pulled {
    std::size_t group = 0;
    wire::Region sgraph;
    std::vector<wire::Region> datasets;
  };
  auto fetch = [&](std::size_t step) {
    Pulled p;
    p.group = (my_group + step) % groups;
    // Same-position rank in the target group, staggered across pullers.
    p.sgraph = h.get(p.group * group_size + pos, kSearchGraphRegion);
    p.datasets.reserve(group_size);
    for (std::size_t j = p.group * group_size; j < (p.group + 1) * group_size; ++j)
      p.datasets.push_back(h.get(j, kDatasetRegion));
    return p;
  };
  auto process = [&](Pulled& p) {
    Dataset vectors = Dataset::empty(local.dims, local.elem_kind, local.metric);
    for (const auto& reg : p.datasets)
      vectors.append(wire::deserialize_dataset(reg, local.metric));
    const SearchGraph sg = wire::deserialize_sgraph(p.sgraph, IdSpace::local);
    const SearchResult res = ann_search(local, sg, vectors, sp);
    merge_results_into(graph, res, partition.offsets[p.group * group_size]);
  };

  if (!cfg.double_buffer) {
    for (std::size_t step = 1; step < groups; ++step) {
      Pulled p = fetch(step);
      process(p);
    }
    return;
  }
  // Double buffering: the next group's pulls overlap the current search.
  std::future<Pulled> inflight = std::async(std::launch::async, fetch, 1);
  for (std::size_t step = 1; step < groups; ++step) {
    Pulled current = inflight.get();
    if (step + 1 < groups)
      inflight = std::async(std::launch::async, fetch, step + 1);
    process(current);
  }
}

}  // namespace refine_detail

using namespace refine_detail;

namespace {

void validate_config(const Partition& partition, const RefineConfig& cfg) {
  const std::size_t p = partition.num_ranks();
  if (!is_pow2(p))
    throw std::invalid_argument("refine: P must be a power of two");
  if (p > 1) {
    if (!is_pow2(cfg.groups) || cfg.groups < 2 || cfg.groups > p)
      throw std::invalid_argument(
          "refine: M must be a power of two with 2 <= M <= P");
  }
  std::size_t min_block = partition.size_of(0);
  for (std::size_t r = 1; r < p; ++r)
    min_block = std::min(min_block, partition.size_of(r));
  if (cfg.k >= min_block)
    throw std::invalid_argument("refine: k must be < points per rank");
  const std::size_t ks = cfg.k_s ? cfg.k_s : cfg.k;
  if (ks > min_block)
    throw std::invalid_argument("refine: k_s must be <= points per rank");
  if (effective_out_degree(cfg) > cfg.k)
    throw std::invalid_argument("refine: out_degree must be <= k");
}

KnnGraph local_build_rank(const Partition& partition, const RefineConfig& cfg,
                          std::size_t rank, NnDescentStats* stats = nullptr) {
  NnDescentParams np = cfg.nn;
  np.k = cfg.k;
  np.workers = 1;
  np.seed = partition.num_ranks() == 1 ? cfg.nn.seed : mix_seed(cfg.nn.seed, rank);
  KnnGraph g = nn_descent(partition.locals[rank], np, stats);
  shift_ids(g, static_cast<std::int64_t>(partition.offsets[rank]));
  g.id_space = IdSpace::global;
  return g;
}

// Gathers per-rank graphs (internal ids) into one N-row graph in external
// order with external neighbor ids; rows are re-sorted because the tie rule
// depends on ids.
KnnGraph translate_to_external(const Partition& partition,
                               const std::vector<KnnGraph>& graphs) {
  const std::size_t n = partition.total_points();
  const std::size_t k = graphs.front().k;
  KnnGraph out = KnnGraph::allocate(n, k, IdSpace::global);
  for (std::size_t r = 0; r < partition.num_ranks(); ++r) {
    const KnnGraph& g = graphs[r];
    for (std::size_t row = 0; row < g.num_sources; ++row) {
      auto entries = g.row_entries(row);
      for (auto& e : entries) {
        e.id = partition.to_external[e.id];
        e.flag = false;
      }
      std::sort(entries.begin(), entries.end(),
                [](const NeighborEntry& a, const NeighborEntry& b) {
                  return closer(a, b);
                });
      out.set_row(partition.to_external[partition.offsets[r] + row], entries);
    }
  }
  return out;
}

}  // namespace

std::vector<KnnGraph> build_local_graphs(const Partition& partition,
                                         const RefineConfig& cfg) {
  validate_config(partition, cfg);
  std::vector<KnnGraph> graphs;
  graphs.reserve(partition.num_ranks());
  for (std::size_t r = 0; r < partition.num_ranks(); ++r)
    graphs.push_back(local_build_rank(partition, cfg, r));
  return graphs;
}

std::vector<KnnGraph> binary_tree_refine(RankWorld& world,
                                         const Partition& partition,
                                         std::vector<KnnGraph> graphs,
                                         const RefineConfig& cfg) {
  validate_config(partition, cfg);
  return run_ranks(world, [&](RankHandle& h) {
    KnnGraph g = graphs[h.rank()];
    h.publish(kDatasetRegion, wire::serialize(partition.locals[h.rank()]));
    h.publish(kGraphRegion, wire::serialize(g));
    h.barrier();
    tree_refine_rank(h, partition, cfg, g, nullptr);
    return g;
  });
}

std::vector<SearchGraph> grouped_merge(RankWorld& world,
                                       const Partition& partition,
                                       const std::vector<KnnGraph>& graphs,
                                       const RefineConfig& cfg) {
  validate_config(partition, cfg);
  return run_ranks(world, [&](RankHandle& h) {
    h.publish(kDatasetRegion, wire::serialize(partition.locals[h.rank()]));
    h.publish(kGraphRegion, wire::serialize(graphs[h.rank()]));
    h.barrier();
    return grouped_merge_rank(h, partition, cfg, graphs[h.rank()]);
  });
}

std::vector<KnnGraph> flat_refine(RankWorld& world, const Partition& partition,
                                  std::vector<KnnGraph> graphs,
                                  const std::vector<SearchGraph>& group_graphs,
                                  const RefineConfig& cfg) {
  validate_config(partition, cfg);
  return run_ranks(world, [&](RankHandle& h) {
    KnnGraph g = graphs[h.rank()];
    h.publish(kDatasetRegion, wire::serialize(partition.locals[h.rank()]));
    h.publish(kSearchGraphRegion, wire::serialize(group_graphs[h.rank()]));
    h.barrier();
    flat_refine_rank(h, partition, cfg, group_graphs[h.rank()], g);
    return g;
  });
}

std::vector<KnnGraph> all_to_all_refine(RankWorld& world,
                                        const Partition& partition,
                                        std::vector<KnnGraph> graphs,
                                        const RefineConfig& cfg) {
  validate_config(partition, cfg);
  const std::size_t p = partition.num_ranks();
  return run_ranks(world, [&](RankHandle& h) {
    const std::size_t i = h.rank();
    KnnGraph g = graphs[i];
    KnnGraph own_local = g;
    shift_ids(own_local, -static_cast<std::int64_t>(partition.offsets[i]));
    own_local.id_space = IdSpace::local;
    const SearchGraph gs = optimize_graph(own_local, partition.locals[i],
                                          effective_out_degree(cfg), 1);
    h.publish(kDatasetRegion, wire::serialize(partition.locals[i]));
    h.publish(kSearchGraphRegion, wire::serialize(gs));
    h.barrier();
    const SearchParams sp = effective_search_params(cfg);
    for (std::size_t step = 1; step < p; ++step) {
      const std::size_t j = (i + step) % p;
      const SearchGraph remote =
          wire::deserialize_sgraph(h.get(j, kSearchGraphRegion), IdSpace::local);
      const Dataset vectors = wire::deserialize_dataset(
          h.get(j, kDatasetRegion), partition.locals[i].metric);
      const SearchResult res = ann_search(partition.locals[i], remote, vectors, sp);
      merge_results_into(g, res, partition.offsets[j]);
    }
    return g;
  });
}

DistBuildResult build_distributed(const Dataset& dataset, const RefineConfig& cfg) {
  Partition partition = partition_dataset(dataset, cfg.ranks, cfg.seed);
  validate_config(partition, cfg);
  const std::size_t p = partition.num_ranks();

  DistBuildResult result;
  std::vector<double> local_t(p, 0.0), tree_t(p, 0.0), merge_t(p, 0.0),
      flat_t(p, 0.0);
  std::vector<KnnGraph> graphs(p);
  std::vector<std::vector<KnnGraph>> level_snaps(p);
  std::vector<KnnGraph> local_snaps(p), flat_snaps(p);
  const std::size_t groups = effective_groups(partition, cfg);
  const std::size_t levels = tree_levels(p, groups);

  if (p == 1) {
    const double t0 = now_seconds();
    graphs[0] = local_build_rank(partition, cfg, 0);
    local_t[0] = now_seconds() - t0;
    if (cfg.capture_snapshots) local_snaps[0] = graphs[0];
  } else {
    RankWorld world(p);
    run_ranks(world, [&](RankHandle& h) {
      const std::size_t i = h.rank();
      double t = now_seconds();
      KnnGraph g = local_build_rank(partition, cfg, i);
      local_t[i] = now_seconds() - t;
      if (cfg.capture_snapshots) local_snaps[i] = g;

      h.publish(kDatasetRegion, wire::serialize(partition.locals[i]));
      h.publish(kGraphRegion, wire::serialize(g));
      h.barrier();

      t = now_seconds();
      Dataset span_ds = partition.locals[i];
      tree_refine_rank_span(h, partition, cfg, g, span_ds,
                            cfg.capture_snapshots ? &level_snaps[i] : nullptr);
      tree_t[i] = now_seconds() - t;

      t = now_seconds();
      const SearchGraph gs = grouped_merge_rank(h, partition, cfg, g, &span_ds);
      merge_t[i] = now_seconds() - t;

      t = now_seconds();
      flat_refine_rank(h, partition, cfg, gs, g);
      flat_t[i] = now_seconds() - t;
      if (cfg.capture_snapshots) flat_snaps[i] = g;
      graphs[i] = std::move(g);
    });
    result.comm_log = world.comm_log();
  }

  const double etc0 = now_seconds();
  result.graph = translate_to_external(partition, graphs);
  if (cfg.capture_snapshots) {
    result.snapshots.push_back(
        {"local", translate_to_external(partition, local_snaps)});
    for (std::size_t level = 0; level < levels; ++level) {
      std::vector<KnnGraph> at_level(p);
      for (std::size_t r = 0; r < p; ++r) at_level[r] = level_snaps[r][level];
      result.snapshots.push_back(
          {"tree_level_" + std::to_string(level),
           translate_to_external(partition, at_level)});
    }
    if (p > 1)
      result.snapshots.push_back(
          {"flat", translate_to_external(partition, flat_snaps)});
  }
  result.phases.etc_s = now_seconds() - etc0;

  auto max_of = [](const std::vector<double>& v) {
    double m = 0.0;
    for (const double x : v) m = std::max(m, x);
    return m;
  };
  result.phases.local_s = max_of(local_t);
  result.phases.tree_s = max_of(tree_t);
  result.phases.merge_s = max_of(merge_t);
  result.phases.flat_s = max_of(flat_t);
  result.levels = levels;
  result.merge_epoch = p == 1 ? 0 : levels + 1;
  result.flat_epoch = p == 1 ? 0 : levels + 2;
  return result;
}

}  // namespace knng
