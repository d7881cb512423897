#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "knng/annsearch.hpp"
#include "knng/core.hpp"
#include "knng/distsim.hpp"
#include "knng/graphopt.hpp"
#include "knng/nndescent.hpp"

namespace knng {

/// Seconds-per-query S plus latency alpha and inverse bandwidth beta of the
/// alpha-beta communication model.
struct CostModel {
  double query_seconds = 0.0;  // S
  double alpha = 0.0;
  double beta = 0.0;
};

struct RuntimeBreakdown {
  double tree = 0.0;
  double merge = 0.0;
  double flat = 0.0;
  double total = 0.0;
};

/// Closed-form predicted refinement runtime:
///   tree  = S*(N/P)*log2(P/M) + (P/M - 1)*(alpha + (N/P)*beta)
///   merge = (P/M)*(alpha + (N/P)*beta)
///   flat  = (M - 1)*[S*(N/P) + (P/M)*(alpha + (N/P)*beta)]
RuntimeBreakdown predicted_runtime(const CostModel& cm, double n_points,
                                   std::size_t ranks, std::size_t groups);

struct RefineConfig {
  std::size_t ranks = 1;   // P, power of two
  std::size_t groups = 2;  // M, power of two, 2 <= M <= P (ignored when P == 1)
  std::size_t k = 32;
  std::size_t k_s = 0;        // search results per query; 0 -> k
  std::size_t out_degree = 0; // search-graph degree; 0 -> k
  NnDescentParams nn;
  SearchParams search;
  bool skip_tree_phase = false;
  bool double_buffer = false;
  /// Estimated per-rank bytes for the largest concatenated graph+dataset the
  /// tree path would hold; exceeding it skips the tree phase. 0 = unlimited.
  std::size_t max_concat_bytes = 0;
  std::uint64_t seed = 0;
  bool capture_snapshots = false;
};

/// Seeded random partition into contiguous, near-equal blocks. Internal global
/// ids are positions in the shuffled order, so every rank's span is a
/// contiguous range; to_external maps them back to original indices.
struct Partition {
  std::vector<PointId> to_external;
  std::vector<std::size_t> offsets;  // size P+1
  std::vector<Dataset> locals;

  std::size_t num_ranks() const { return locals.size(); }
  std::size_t total_points() const { return to_external.size(); }
  std::size_t size_of(std::size_t rank) const {
    return offsets[rank + 1] - offsets[rank];
  }
};

Partition partition_dataset(const Dataset& dataset, std::size_t ranks,
                            std::uint64_t seed);

/// Number of tree levels L = log2(P / M).
std::size_t tree_levels(std::size_t ranks, std::size_t groups);

/// A rank's own group bounds [group_lo, group_hi) at a level plus the adjacent
/// partner group it pulls from. Group size at level l is 2^l.
struct TreeLevel {
  std::size_t group_lo = 0;
  std::size_t group_hi = 0;
  std::vector<std::size_t> partners;
};

TreeLevel tree_schedule(std::size_t ranks, std::size_t groups, std::size_t rank,
                        std::size_t level);

struct PhaseSnapshot {
  std::string label;
  KnnGraph graph;  // all N rows, internal id order
};

struct DistBuildResult {
  KnnGraph graph;  // external global ids, original point order
  struct Phases {
    double local_s = 0.0;
    double tree_s = 0.0;
    double merge_s = 0.0;
    double flat_s = 0.0;
    double etc_s = 0.0;
  } phases;
  std::size_t levels = 0;  // tree levels actually run
  // Epoch layout of the single world run: tree pulls happen in epochs
  // [1, levels], the grouped merge in levels+1, the flat phase in levels+2.
  std::uint64_t merge_epoch = 0;
  std::uint64_t flat_epoch = 0;
  std::vector<GetRecord> comm_log;
  std::vector<PhaseSnapshot> snapshots;  // when capture_snapshots is set
};

/// Full pipeline: partition -> per-rank local build -> tree refinement ->
/// grouped merge -> flat refinement -> translate ids back to the external
/// space and gather rows in original point order.
DistBuildResult build_distributed(const Dataset& dataset, const RefineConfig& cfg);

// World-level phase drivers. Each publishes what its phase needs, so they can
// be composed or exercised in isolation. Graphs are carried in internal
// global ids.
std::vector<KnnGraph> build_local_graphs(const Partition& partition,
                                         const RefineConfig& cfg);
std::vector<KnnGraph> binary_tree_refine(RankWorld& world,
                                         const Partition& partition,
                                         std::vector<KnnGraph> graphs,
                                         const RefineConfig& cfg);
std::vector<SearchGraph> grouped_merge(RankWorld& world,
                                       const Partition& partition,
                                       const std::vector<KnnGraph>& graphs,
                                       const RefineConfig& cfg);
std::vector<KnnGraph> flat_refine(RankWorld& world, const Partition& partition,
                                  std::vector<KnnGraph> graphs,
                                  const std::vector<SearchGraph>& group_graphs,
                                  const RefineConfig& cfg);
/// Unscaled baseline: every rank pulls every other rank's search graph and
/// dataset, searches, and merges.
std::vector<KnnGraph> all_to_all_refine(RankWorld& world,
                                        const Partition& partition,
                                        std::vector<KnnGraph> graphs,
                                        const RefineConfig& cfg);

namespace refine_detail {

// Region names used by the pipeline.
inline constexpr const char* kDatasetRegion = "dataset";
inline constexpr const char* kGraphRegion = "graph";
inline constexpr const char* kSearchGraphRegion = "sgraph";

std::size_t effective_groups(const Partition& partition, const RefineConfig& cfg);
SearchParams effective_search_params(const RefineConfig& cfg);

// Rank-side phase bodies shared by build_distributed and the standalone
// drivers. All graphs use internal global ids.
void tree_refine_rank(RankHandle& h, const Partition& partition,
                      const RefineConfig& cfg, KnnGraph& graph,
                      std::vector<KnnGraph>* level_snapshots);
SearchGraph grouped_merge_rank(RankHandle& h, const Partition& partition,
                               const RefineConfig& cfg, const KnnGraph& graph);
void flat_refine_rank(RankHandle& h, const Partition& partition,
                      const RefineConfig& cfg, const SearchGraph& group_graph,
                      KnnGraph& graph);

}  // namespace refine_detail

}  // namespace knng
