#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <vector>

#include "knng/core.hpp"

namespace knng {

struct NnDescentParams {
  std::size_t k = 32;
  double delta = 0.0001;  // convergence threshold; stop when accepted < delta*k*N
  double rho = 0.5;       // sampling rate in (0, 1]
  std::size_t max_iters = 100;
  std::size_t candidate_capacity = 0;  // 0 -> 2*k
  std::uint64_t seed = 0;
  std::size_t workers = 0;  // 0 -> hardware concurrency
};

/// Per-point fixed-capacity candidate list with a lock-free append path.
///
/// Writers reserve a slot with a relaxed fetch_add and write the entry into
/// the reserved slot; nothing blocks. Appends past capacity are dropped (the
/// iterative algorithm retries those pairs in later rounds). worst[] holds the
/// previous round's k-th distance per point; it is read without
/// synchronization during the join phase (stale values only admit extra
/// candidates) and rewritten only in the single-owner apply phase.
class CandidateBuffer {
 public:
  CandidateBuffer(std::size_t num_points, std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  std::size_t num_points() const { return num_points_; }

  /// Lock-free append of cand to point's list if cand.dist beats the worst
  /// snapshot. Returns false if filtered out or dropped on overflow.
  bool try_append(std::size_t point, const NeighborEntry& cand) {
    if (cand.dist >= worst_[point]) return false;
    const std::uint32_t slot =
        counts_[point].fetch_add(1, std::memory_order_relaxed);
    if (slot >= capacity_) return false;
    slots_[point * capacity_ + slot] = cand;
    return true;
  }

  /// Number of readable entries for a point (raw counter clamped to capacity).
  std::size_t fill(std::size_t point) const {
    const std::uint32_t c = counts_[point].load(std::memory_order_relaxed);
    return c < capacity_ ? c : capacity_;
  }

  const NeighborEntry* entries(std::size_t point) const {
    return slots_.data() + point * capacity_;
  }

  float worst(std::size_t point) const { return worst_[point]; }
  void set_worst(std::size_t point, float w) { worst_[point] = w; }
  void refresh_worst(const KnnGraph& g);
  void reset(std::size_t point) {
    counts_[point].store(0, std::memory_order_relaxed);
  }

 private:
  std::size_t num_points_;
  std::size_t capacity_;
  std::vector<NeighborEntry> slots_;
  std::unique_ptr<std::atomic<std::uint32_t>[]> counts_;
  std::vector<float> worst_;
};

/// Forward samples are bounded by ceil(rho*k); reverse lists are the
/// transposed forward lists, sampled to the same bound. old_fwd keeps every
/// already-joined neighbor.
struct NeighborSamples {
  std::size_t bound = 0;  // ceil(rho * k)
  std::vector<std::vector<PointId>> new_fwd;
  std::vector<std::vector<PointId>> old_fwd;
  std::vector<std::vector<PointId>> new_rev;
  std::vector<std::vector<PointId>> old_rev;
};

struct JoinCounts {
  std::size_t pairs = 0;     // distance evaluations
  std::size_t appended = 0;  // candidates accepted into buffers
  std::size_t dropped = 0;   // filtered or lost to full buffers
};

/// Each row gets k distinct non-self ids drawn uniformly without replacement,
/// with computed distances, sorted; every entry flagged new.
KnnGraph init_random_graph(const Dataset& dataset, std::size_t k,
                           std::uint64_t seed, std::size_t workers = 0);

/// Selects at most ceil(rho*k) new-flagged neighbors per point (clearing their
/// flags), keeps all old neighbors, and forms reverse lists by transposition
/// sampled to the same bound.
NeighborSamples sample_neighbors(KnnGraph& graph, double rho, std::uint64_t seed,
                                 std::size_t iter, std::size_t workers = 0);

/// For each point p, evaluates sigma(u, v) once for every pair u in new(p),
/// v in new(p) ∪ old(p) (new/old = forward ∪ reverse samples) and offers the
/// result to both endpoints' candidate buffers.
JoinCounts local_join(const Dataset& dataset, const NeighborSamples& samples,
                      CandidateBuffer& buffers, std::size_t workers = 0);

/// Folds buffered candidates into the graph row by row (exclusive ownership
/// per row), flagging insertions as new, then resets the buffers. Returns the
/// number of accepted insertions.
std::size_t apply_candidates(KnnGraph& graph, CandidateBuffer& buffers,
                             std::size_t workers = 0);

struct NnDescentStats {
  std::vector<std::size_t> accepted_per_iter;
  std::size_t iterations = 0;
};

/// Full NN-Descent loop: {sample -> join -> apply} until the accepted-update
/// count falls below delta*k*N or max_iters is reached.
KnnGraph nn_descent(const Dataset& dataset, const NnDescentParams& params,
                    NnDescentStats* stats = nullptr);

}  // namespace knng
