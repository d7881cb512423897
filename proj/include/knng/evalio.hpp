#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "knng/core.hpp"
#include "knng/graphopt.hpp"
#include "knng/wire.hpp"

namespace knng {

/// Thrown for malformed .fvecs/.bvecs/.ivecs input.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reads a .fvecs (f32) or .bvecs (u8) file: per row, a little-endian i32
/// dimension count followed by that many elements. All rows must share one
/// dimension.
Dataset read_vecs(const std::filesystem::path& path, ElemKind kind,
                  MetricKind metric = MetricKind::l2);
/// Inverse of read_vecs; bit-exact round trip.
void write_vecs(const Dataset& d, const std::filesystem::path& path);

struct IdMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> v;
};
IdMatrix read_ivecs(const std::filesystem::path& path);
void write_ivecs(const IdMatrix& m, const std::filesystem::path& path);

/// Exact kNNG computed by brute force, with provenance for cache keying.
struct GroundTruth {
  KnnGraph graph;
  std::uint64_t dataset_hash = 0;
  std::size_t k = 0;
  MetricKind metric = MetricKind::l2;
};

GroundTruth brute_force_knng(const Dataset& d, std::size_t k,
                             std::size_t workers = 0);
/// Disk-cached variant keyed by (dataset hash, k, metric); brute force
/// dominates evaluation time otherwise.
GroundTruth brute_force_knng_cached(const Dataset& d, std::size_t k,
                                    const std::filesystem::path& cache_dir,
                                    std::size_t workers = 0);

/// Mean over points of |top-k_eval(test row) intersect top-k_eval(truth row)|
/// divided by k_eval.
double recall_at_k(const KnnGraph& test, const KnnGraph& truth,
                   std::size_t k_eval);
double recall_at_k(const KnnGraph& test, const GroundTruth& truth,
                   std::size_t k_eval);

/// Distance-only recall: the reference row's k_eval-th distance is a per-point
/// threshold; counts test entries with dist <= threshold (capped at k_eval).
/// Neighbor IDs are ignored, so score(A,B) and score(B,A) can differ.
double distance_threshold_recall(const KnnGraph& test, const KnnGraph& reference,
                                 std::size_t k_eval);

/// copies-1 shifted duplicates appended to the dataset. Copy c shifts
/// coordinate (c-1) mod dims of every point by (max - min + epsilon), where
/// max/min are taken over that coordinate in the output built so far, keeping
/// coordinate ranges disjoint.
Dataset synth_shifted_copies(const Dataset& d, std::size_t copies, float epsilon);

enum class Distribution { uniform, gaussian, clustered };

/// Deterministic synthetic data. clustered draws `clusters` gaussian centers
/// (sd 5) and scatters points around them (sd 1); point i belongs to center
/// i % clusters.
Dataset gen_random_dataset(std::size_t n, std::size_t dims, Distribution dist,
                           std::uint64_t seed, std::size_t clusters = 0,
                           MetricKind metric = MetricKind::l2);

// Graph files use the serialized-region layout.
void save_graph(const KnnGraph& g, const std::filesystem::path& path);
KnnGraph load_graph(const std::filesystem::path& path, IdSpace space = IdSpace::global);
void save_sgraph(const SearchGraph& g, const std::filesystem::path& path);
SearchGraph load_sgraph(const std::filesystem::path& path,
                        IdSpace space = IdSpace::global);

}  // namespace knng
