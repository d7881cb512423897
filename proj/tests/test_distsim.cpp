#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <thread>
#include <vector>

#include "knng/distsim.hpp"
#include "knng/evalio.hpp"

using namespace knng;
using Clock = std::chrono::steady_clock;

namespace {

wire::Region payload_of(std::uint64_t tag, std::size_t n_points = 4) {
  Dataset d = Dataset::empty(2, ElemKind::f32, MetricKind::l2);
  d.num_points = n_points;
  d.f32.resize(n_points * 2);
  for (std::size_t i = 0; i < d.f32.size(); ++i)
    d.f32[i] = static_cast<float>(tag * 100 + i);
  return wire::serialize(d);
}

bool same_bytes(const wire::Region& a, const wire::Region& b) {
  return a.bytes == b.bytes;
}

}  // namespace

TEST_CASE("spawn_world collects per-rank results in rank order") {
  auto one = spawn_world(1, [](RankHandle& h) { return h.rank(); });
  CHECK(one == std::vector<std::size_t>{0});
  auto four = spawn_world(4, [](RankHandle& h) { return h.rank(); });
  CHECK(four == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("matched barriers complete without deadlock") {
  auto counts = spawn_world(4, [](RankHandle& h) {
    for (int i = 0; i < 4; ++i) h.barrier();
    return 1;
  });
  CHECK(counts == std::vector<int>(4, 1));
}

TEST_CASE("rank failures propagate out of spawn_world") {
  CHECK_THROWS_WITH_AS(
      spawn_world(3,
                  [](RankHandle& h) {
                    if (h.rank() == 1) throw std::runtime_error("boom at rank 1");
                    h.barrier();  // other ranks must not hang
                    return 0;
                  }),
      "boom at rank 1", std::runtime_error);
}

TEST_CASE("get own region equals the published payload byte-for-byte") {
  spawn_world(2, [](RankHandle& h) {
    const auto region = payload_of(h.rank());
    h.publish("data", region);
    CHECK(same_bytes(h.get(h.rank(), "data"), region));
    return 0;
  });
}

TEST_CASE("get before publish is an error") {
  spawn_world(2, [](RankHandle& h) {
    if (h.rank() == 0) {
      CHECK_THROWS_AS(h.get(1, "missing"), WorldError);
    }
    return 0;
  });
}

TEST_CASE("republishing a name within one epoch is a usage error") {
  spawn_world(1, [](RankHandle& h) {
    h.publish("x", payload_of(1));
    CHECK_THROWS_AS(h.publish("x", payload_of(2)), WorldError);
    h.barrier();  // next epoch: republish becomes legal again
    CHECK_NOTHROW(h.publish("x", payload_of(3)));
    return 0;
  });
}

TEST_CASE("snapshot isolation: staged republish is invisible until the barrier") {
  RankWorld world(2);
  run_ranks(world, [](RankHandle& h) {
    if (h.rank() == 0) {
      h.publish("g", payload_of(1));
      h.barrier();                    // epoch 1: v1 visible
      h.publish("g", payload_of(2));  // staged
      h.barrier();                    // epoch 2: v2 swapped in
    } else {
      h.barrier();
      const auto before = h.get(0, "g");
      CHECK(same_bytes(before, payload_of(1)));
      h.barrier();
      const auto after = h.get(0, "g");
      CHECK(same_bytes(after, payload_of(2)));
    }
    return 0;
  });
}

TEST_CASE("one-sidedness: gets complete while the owner is pinned in compute") {
  // Rank 0 publishes, then spins without touching the world. Rank 1's get
  // must finish before the owner leaves its compute loop.
  std::atomic<bool> getter_done{false};
  Clock::time_point get_end{};
  Clock::time_point spin_end{};
  bool payload_ok = false;

  spawn_world(2, [&](RankHandle& h) {
    if (h.rank() == 0) {
      h.publish("data", payload_of(7, 64));
      h.barrier();
      volatile double sink = 0.0;
      const auto deadline = Clock::now() + std::chrono::milliseconds(500);
      while (Clock::now() < deadline) {
        for (int i = 0; i < 1000; ++i) sink = sink + 1.0;
      }
      spin_end = Clock::now();
    } else {
      h.barrier();
      const auto got = h.get(0, "data");
      get_end = Clock::now();
      payload_ok = same_bytes(got, payload_of(7, 64));
      getter_done.store(true);
    }
    return 0;
  });
  CHECK(payload_ok);
  CHECK(getter_done.load());
  CHECK(get_end < spin_end);
}

TEST_CASE("comm log conserves byte counts exactly") {
  RankWorld world(3);
  run_ranks(world, [](RankHandle& h) {
    h.publish("data", payload_of(h.rank(), 8 + h.rank()));
    h.barrier();
    for (std::size_t t = 0; t < h.world_size(); ++t) {
      if (t != h.rank()) h.get(t, "data");
    }
    return 0;
  });
  const auto log = world.comm_log();
  CHECK(log.size() == 6);  // each of 3 ranks pulls 2 peers
  std::size_t total = 0;
  for (const auto& rec : log) {
    const std::size_t expect = wire::region_size(
        wire::RegionKind::dataset, 8 + rec.target, 2, wire::kElemF32);
    CHECK(rec.bytes == expect);
    total += rec.bytes;
  }
  std::size_t expect_total = 0;
  for (std::size_t t = 0; t < 3; ++t)
    expect_total +=
        2 * wire::region_size(wire::RegionKind::dataset, 8 + t, 2, wire::kElemF32);
  CHECK(total == expect_total);
}

TEST_CASE("epochs advance once per barrier") {
  RankWorld world(2);
  run_ranks(world, [&](RankHandle& h) {
    CHECK(world.epoch() == 0);
    h.barrier();
    CHECK(world.epoch() == 1);
    h.barrier();
    CHECK(world.epoch() == 2);
    return 0;
  });
}

TEST_CASE("mismatched barrier counts trip the watchdog") {
  RankWorld world(2, std::chrono::milliseconds(200));
  CHECK_THROWS_AS(run_ranks(world,
                            [](RankHandle& h) {
                              if (h.rank() == 0) h.barrier();  // rank 1 never arrives
                              return 0;
                            }),
                  WorldError);
}

TEST_CASE("published regions survive many epochs") {
  spawn_world(2, [](RankHandle& h) {
    if (h.rank() == 0) h.publish("stable", payload_of(9));
    h.barrier();
    h.barrier();
    h.barrier();
    CHECK(same_bytes(h.get(0, "stable"), payload_of(9)));
    return 0;
  });
}
