#include "knng/distsim.hpp"

namespace knng {

RankWorld::RankWorld(std::size_t num_ranks, std::chrono::milliseconds watchdog)
    : num_ranks_(num_ranks), watchdog_(watchdog) {
  if (num_ranks == 0) throw std::invalid_argument("RankWorld: P must be >= 1");
}

std::uint64_t RankWorld::epoch() const {
  std::lock_guard lock(mu_);
  return epoch_;
}

void RankWorld::check_rank(std::size_t rank) const {
  if (rank >= num_ranks_)
    throw std::invalid_argument("RankWorld: rank out of range");
}

void RankWorld::throw_if_aborted() const {
  if (aborted_) throw WorldAborted("world aborted: " + abort_reason_);
}

void RankWorld::publish(std::size_t rank, std::string_view name,
                        wire::Region payload) {
  check_rank(rank);
  std::lock_guard lock(mu_);
  throw_if_aborted();
  Slot& slot = store_[{rank, std::string(name)}];
  if (slot.published_once && slot.last_publish_epoch == epoch_) {
    throw WorldError("publish: region '" + std::string(name) +
                     "' already published by rank " + std::to_string(rank) +
                     " in epoch " + std::to_string(epoch_));
  }
  if (!slot.has_current) {
    slot.current = std::move(payload);
    slot.has_current = true;
  } else {
    slot.staged = std::move(payload);
    slot.has_staged = true;
  }
  slot.published_once = true;
  slot.last_publish_epoch = epoch_;
}

wire::Region RankWorld::one_sided_get(std::size_t src_rank,
                                      std::size_t target_rank,
                                      std::string_view name) {
  check_rank(src_rank);
  check_rank(target_rank);
  std::lock_guard lock(mu_);
  throw_if_aborted();
  auto it = store_.find({target_rank, std::string(name)});
  if (it == store_.end() || !it->second.has_current) {
    throw WorldError("one_sided_get: region '" + std::string(name) +
                     "' not published by rank " + std::to_string(target_rank));
  }
  wire::Region snapshot = it->second.current;  // copy = transfer
  log_.push_back({src_rank, target_rank, std::string(name), snapshot.size(),
                  epoch_});
  return snapshot;
}

void RankWorld::barrier(std::size_t rank) {
  check_rank(rank);
  std::unique_lock lock(mu_);
  throw_if_aborted();
  const std::uint64_t my_generation = barrier_generation_;
  if (++barrier_arrived_ == num_ranks_) {
    // Last arriver: swap staged regions in and open the next epoch.
    for (auto& [key, slot] : store_) {
      if (slot.has_staged) {
        slot.current = std::move(slot.staged);
        slot.staged = wire::Region{};
        slot.has_staged = false;
      }
    }
    ++epoch_;
    barrier_arrived_ = 0;
    ++barrier_generation_;
    cv_.notify_all();
    return;
  }
  const bool done = cv_.wait_for(lock, watchdog_, [&] {
    return barrier_generation_ != my_generation || aborted_;
  });
  throw_if_aborted();
  if (!done) {
    // Watchdog: some rank never arrived (mismatched barrier counts).
    aborted_ = true;
    abort_reason_ = "barrier watchdog timeout at rank " + std::to_string(rank);
    cv_.notify_all();
    throw WorldError(abort_reason_);
  }
}

void RankWorld::abort(const std::string& reason) {
  std::lock_guard lock(mu_);
  if (!aborted_) {
    aborted_ = true;
    abort_reason_ = reason;
  }
  cv_.notify_all();
}

std::vector<GetRecord> RankWorld::comm_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

}  // namespace knng
