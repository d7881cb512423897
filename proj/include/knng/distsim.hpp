#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "knng/wire.hpp"

namespace knng {

struct WorldError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised in every rank once some rank has failed, so barrier waiters unblock.
struct WorldAborted : WorldError {
  using WorldError::WorldError;
};

struct GetRecord {
  std::size_t src = 0;
  std::size_t target = 0;
  std::string region;
  std::size_t bytes = 0;
  std::uint64_t epoch = 0;
};

/// P simulated ranks sharing an immutable-snapshot region store.
///
/// Semantics: a region first published under a name becomes readable by all
/// ranks immediately; republishing the same name stages the new payload, which
/// replaces the visible one only when the next barrier completes. A name may
/// be published at most once per epoch. one_sided_get returns a snapshot by
/// value and requires no action from the owning rank; the barrier is the only
/// blocking primitive and advances the epoch counter. Every get is logged
/// with its serialized byte count.
class RankWorld {
 public:
  explicit RankWorld(std::size_t num_ranks,
                     std::chrono::milliseconds watchdog = std::chrono::seconds(60));

  std::size_t num_ranks() const { return num_ranks_; }
  std::uint64_t epoch() const;

  void publish(std::size_t rank, std::string_view name, wire::Region payload);
  wire::Region one_sided_get(std::size_t src_rank, std::size_t target_rank,
                             std::string_view name);
  void barrier(std::size_t rank);

  /// Marks the world failed and wakes all barrier waiters.
  void abort(const std::string& reason);

  std::vector<GetRecord> comm_log() const;

 private:
  struct Slot {
    wire::Region current;
    bool has_current = false;
    wire::Region staged;
    bool has_staged = false;
    std::uint64_t last_publish_epoch = 0;
    bool published_once = false;
  };

  void check_rank(std::size_t rank) const;
  void throw_if_aborted() const;  // callers hold mu_

  const std::size_t num_ranks_;
  const std::chrono::milliseconds watchdog_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::pair<std::size_t, std::string>, Slot> store_;
  std::vector<GetRecord> log_;
  std::uint64_t epoch_ = 0;
  std::uint64_t barrier_generation_ = 0;
  std::size_t barrier_arrived_ = 0;
  bool aborted_ = false;
  std::string abort_reason_;
};

/// A rank's view of the world; passed to rank bodies.
class RankHandle {
 public:
  RankHandle(RankWorld& world, std::size_t rank) : world_(&world), rank_(rank) {}

  std::size_t rank() const { return rank_; }
  std::size_t world_size() const { return world_->num_ranks(); }
  RankWorld& world() { return *world_; }

  void publish(std::string_view name, wire::Region payload) {
    world_->publish(rank_, name, std::move(payload));
  }
  wire::Region get(std::size_t target, std::string_view name) {
    return world_->one_sided_get(rank_, target, name);
  }
  void barrier() { world_->barrier(rank_); }

 private:
  RankWorld* world_;
  std::size_t rank_;
};

namespace detail {

template <class Body, class R>
struct RankRunner {
  static std::vector<R> run(RankWorld& world, Body& body) {
    const std::size_t p = world.num_ranks();
    std::vector<R> results(p);
    std::vector<std::exception_ptr> errors(p);
    std::vector<std::thread> threads;
    threads.reserve(p);
    for (std::size_t i = 0; i < p; ++i) {
      threads.emplace_back([&, i] {
        RankHandle h(world, i);
        try {
          if constexpr (std::is_void_v<R>) {
            body(h);
          } else {
            results[i] = body(h);
          }
        } catch (...) {
          errors[i] = std::current_exception();
          world.abort("rank " + std::to_string(i) + " failed");
        }
      });
    }
    for (auto& t : threads) t.join();
    // Prefer the original failure over secondary WorldAborted unwinds.
    std::exception_ptr first;
    for (auto& e : errors) {
      if (!e) continue;
      if (!first) first = e;
      try {
        std::rethrow_exception(e);
      } catch (const WorldAborted&) {
      } catch (...) {
        first = e;
        break;
      }
    }
    if (first) std::rethrow_exception(first);
    return results;
  }
};

template <class Body>
struct RankRunner<Body, void> {
  static void run(RankWorld& world, Body& body) {
    const std::size_t p = world.num_ranks();
    std::vector<std::exception_ptr> errors(p);
    std::vector<std::thread> threads;
    threads.reserve(p);
    for (std::size_t i = 0; i < p; ++i) {
      threads.emplace_back([&, i] {
        RankHandle h(world, i);
        try {
          body(h);
        } catch (...) {
          errors[i] = std::current_exception();
          world.abort("rank " + std::to_string(i) + " failed");
        }
      });
    }
    for (auto& t : threads) t.join();
    std::exception_ptr first;
    for (auto& e : errors) {
      if (!e) continue;
      if (!first) first = e;
      try {
        std::rethrow_exception(e);
      } catch (const WorldAborted&) {
      } catch (...) {
        first = e;
        break;
      }
    }
    if (first) std::rethrow_exception(first);
  }
};

}  // namespace detail

/// Runs body(RankHandle&) concurrently for every rank of an existing world,
/// collecting per-rank results. Propagates the first genuine failure.
template <class Body>
auto run_ranks(RankWorld& world, Body&& body) {
  using R = std::invoke_result_t<Body&, RankHandle&>;
  return detail::RankRunner<Body, R>::run(world, body);
}

/// Convenience form owning a fresh world.
template <class Body>
auto spawn_world(std::size_t num_ranks, Body&& body) {
  RankWorld world(num_ranks);
  return run_ranks(world, std::forward<Body>(body));
}

}  // namespace knng
