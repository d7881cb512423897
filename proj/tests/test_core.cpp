#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "knng/core.hpp"
#include "knng/rng.hpp"

using namespace knng;

namespace {

// Independent oracle: k closest distinct entries of a candidate multiset,
// computed by full sort. Duplicate ids keep their single (identical) distance.
std::vector<NeighborEntry> oracle_bottom_k(std::vector<NeighborEntry> all,
                                           std::size_t k) {
  std::sort(all.begin(), all.end(),
            [](const NeighborEntry& a, const NeighborEntry& b) {
              return closer(a, b);
            });
  std::vector<NeighborEntry> out;
  for (const auto& e : all) {
    if (out.size() == k) break;
    bool dup = false;
    for (const auto& o : out) {
      if (o.id == e.id) dup = true;
    }
    if (!dup) out.push_back(e);
  }
  return out;
}

bool rows_equal(const std::vector<NeighborEntry>& a,
                const std::vector<NeighborEntry>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] == b[i])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("l2 distance basics") {
  const std::vector<float> a{0.f, 0.f}, b{3.f, 4.f};
  CHECK(distance(MetricKind::l2, std::span<const float>(a),
                 std::span<const float>(b)) == 5.0f);
  CHECK(distance(MetricKind::l2, std::span<const float>(a),
                 std::span<const float>(a)) == 0.0f);
}

TEST_CASE("cosine distance basics") {
  const std::vector<float> v{3.f, 4.f};
  const std::vector<float> ex{1.f, 0.f}, ey{0.f, 1.f};
  CHECK(distance(MetricKind::cosine, std::span<const float>(v),
                 std::span<const float>(v)) == 0.0f);
  CHECK(distance(MetricKind::cosine, std::span<const float>(ex),
                 std::span<const float>(ey)) == 1.0f);
}

TEST_CASE("cosine with a zero vector is defined as 1.0") {
  const std::vector<float> z{0.f, 0.f}, v{1.f, 2.f};
  CHECK(distance(MetricKind::cosine, std::span<const float>(z),
                 std::span<const float>(v)) == 1.0f);
  CHECK(distance(MetricKind::cosine, std::span<const float>(z),
                 std::span<const float>(z)) == 1.0f);
}

TEST_CASE("dimension mismatch is a usage error") {
  const std::vector<float> a{1.f}, b{1.f, 2.f};
  CHECK_THROWS_AS(distance(MetricKind::l2, std::span<const float>(a),
                           std::span<const float>(b)),
                  std::invalid_argument);
}

TEST_CASE("distance symmetry within float tolerance") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> a(8), b(8);
    for (auto& x : a) x = rng.next_gaussian();
    for (auto& x : b) x = rng.next_gaussian();
    for (const auto m : {MetricKind::l2, MetricKind::cosine}) {
      const float ab = distance(m, std::span<const float>(a), std::span<const float>(b));
      const float ba = distance(m, std::span<const float>(b), std::span<const float>(a));
      CHECK(ab >= 0.0f);
      CHECK(std::abs(ab - ba) <= 1e-6f * std::max(1.0f, std::abs(ab)));
    }
  }
}

TEST_CASE("u8 distances equal promoted float distances") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint8_t> a(16), b(16);
    std::vector<float> af(16), bf(16);
    for (std::size_t i = 0; i < 16; ++i) {
      a[i] = static_cast<std::uint8_t>(rng.next_below(256));
      b[i] = static_cast<std::uint8_t>(rng.next_below(256));
      af[i] = static_cast<float>(a[i]);
      bf[i] = static_cast<float>(b[i]);
    }
    for (const auto m : {MetricKind::l2, MetricKind::cosine}) {
      CHECK(distance(m, std::span<const std::uint8_t>(a),
                     std::span<const std::uint8_t>(b)) ==
            distance(m, std::span<const float>(af), std::span<const float>(bf)));
    }
  }
}

TEST_CASE("knn_insert evicts the farthest when full") {
  std::vector<NeighborEntry> row{{0, 0.1f}, {1, 0.5f}};
  std::size_t fill = 2;
  CHECK(knn_insert(row.data(), fill, 2, {2, 0.3f}));
  CHECK(fill == 2);
  CHECK(row[0].id == 0);
  CHECK(row[1].id == 2);
  CHECK(row[1].dist == 0.3f);
}

TEST_CASE("knn_insert rejects duplicates and far candidates") {
  std::vector<NeighborEntry> row{{0, 0.1f}, {1, 0.5f}, {9, 0.f}};
  std::size_t fill = 1;
  CHECK_FALSE(knn_insert(row.data(), fill, 2, {0, 0.1f}));
  CHECK(fill == 1);
  fill = 2;
  CHECK_FALSE(knn_insert(row.data(), fill, 2, {2, 0.9f}));
  CHECK(fill == 2);
  CHECK(row[0].id == 0);
  CHECK(row[1].id == 1);
}

TEST_CASE("knn_insert keeps rows sorted and duplicate-free under random streams") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng.next_below(8);
    std::vector<NeighborEntry> row(k);
    std::size_t fill = 0;
    std::vector<NeighborEntry> offered;
    const std::size_t stream = 40;
    for (std::size_t s = 0; s < stream; ++s) {
      NeighborEntry cand{static_cast<PointId>(rng.next_below(20)),
                         static_cast<float>(rng.next_below(10)) * 0.125f, false};
      // Duplicate ids must carry one distance, as when a single metric
      // computes them.
      bool seen = false;
      for (const auto& o : offered) {
        if (o.id == cand.id) {
          cand.dist = o.dist;
          seen = true;
        }
      }
      (void)seen;
      offered.push_back(cand);
      knn_insert(row.data(), fill, k, cand);
      for (std::size_t i = 1; i < fill; ++i) CHECK(closer(row[i - 1], row[i]));
      std::set<PointId> ids;
      for (std::size_t i = 0; i < fill; ++i) ids.insert(row[i].id);
      CHECK(ids.size() == fill);
      CHECK(fill <= k);
    }
    // Order independence: the final row is the bottom-k of everything offered.
    const auto expect = oracle_bottom_k(offered, k);
    CHECK(rows_equal({row.begin(), row.begin() + static_cast<long>(fill)}, expect));
  }
}

TEST_CASE("merge_rows trivial examples") {
  const std::vector<NeighborEntry> a{{0, 0.1f}}, b{{1, 0.2f}};
  auto m = merge_rows(a, b, 2);
  REQUIRE(m.size() == 2);
  CHECK(m[0].id == 0);
  CHECK(m[1].id == 1);

  const std::vector<NeighborEntry> dup{{0, 0.1f}};
  m = merge_rows(dup, dup, 2);
  REQUIRE(m.size() == 1);
  CHECK(m[0].id == 0);
}

TEST_CASE("merge_rows equals sort-then-truncate of the deduplicated union") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    auto make_row = [&rng](std::size_t len) {
      std::vector<NeighborEntry> all;
      for (std::size_t i = 0; i < len; ++i) {
        all.push_back({static_cast<PointId>(rng.next_below(40)),
                       static_cast<float>(rng.next_below(32)) * 0.25f, false});
      }
      return oracle_bottom_k(all, len);  // sorted + deduplicated input row
    };
    auto a = make_row(20);
    auto b = make_row(20);
    // Shared ids must agree on distance across the two rows.
    for (auto& eb : b) {
      for (const auto& ea : a) {
        if (ea.id == eb.id) eb.dist = ea.dist;
      }
    }
    b = oracle_bottom_k(b, b.size());
    std::vector<NeighborEntry> uni = a;
    uni.insert(uni.end(), b.begin(), b.end());
    const auto expect = oracle_bottom_k(uni, 10);
    CHECK(rows_equal(merge_rows(a, b, 10), expect));
    // Commutativity under the deterministic tie rule.
    CHECK(rows_equal(merge_rows(a, b, 10), merge_rows(b, a, 10)));
  }
}

TEST_CASE("merge_rows with an empty side truncates") {
  std::vector<NeighborEntry> a{{3, 0.1f}, {1, 0.2f}, {7, 0.9f}};
  std::sort(a.begin(), a.end(),
            [](const NeighborEntry& x, const NeighborEntry& y) { return closer(x, y); });
  const std::vector<NeighborEntry> empty;
  auto m = merge_rows(a, empty, 2);
  REQUIRE(m.size() == 2);
  CHECK(m[0].id == 3);
  CHECK(m[1].id == 1);
}

TEST_CASE("graph invariant checker catches violations") {
  KnnGraph g = KnnGraph::allocate(2, 2, IdSpace::local);
  g.set_row(0, std::vector<NeighborEntry>{{1, 0.5f}, {2, 0.7f}});
  g.set_row(1, std::vector<NeighborEntry>{{0, 0.5f}, {2, 0.7f}});
  CHECK_NOTHROW(check_graph_invariants(g));
  g.ids[0] = 0;  // self-loop in row 0
  CHECK_THROWS_AS(check_graph_invariants(g), std::logic_error);
}
