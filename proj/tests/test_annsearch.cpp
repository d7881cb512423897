#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "knng/annsearch.hpp"
#include "knng/evalio.hpp"
#include "knng/graphopt.hpp"
#include "knng/nndescent.hpp"

using namespace knng;

namespace {

struct Fixture {
  Dataset data;
  KnnGraph graph;
  SearchGraph sgraph;
  GroundTruth gt;
};

Fixture build_fixture(std::size_t n, std::size_t k, std::uint64_t seed,
                      std::size_t gt_k) {
  Fixture f;
  f.data = gen_random_dataset(n, 16, Distribution::uniform, seed);
  NnDescentParams p;
  p.k = k;
  p.seed = seed;
  f.graph = nn_descent(f.data, p);
  f.sgraph = optimize_graph(f.graph, f.data, k);
  f.gt = brute_force_knng(f.data, gt_k);
  return f;
}

KnnGraph result_to_graph(const SearchResult& res) {
  KnnGraph out = KnnGraph::allocate(res.num_queries, res.k_s, IdSpace::local);
  std::copy(res.ids.begin(), res.ids.end(), out.ids.begin());
  std::copy(res.dists.begin(), res.dists.end(), out.dists.begin());
  return out;
}

}  // namespace

TEST_CASE("self-queries find themselves at the top") {
  const Fixture f = build_fixture(10000, 32, 1, 10);
  SearchParams sp;
  sp.k_s = 10;
  sp.beam_width = 64;  // >= out_degree * 2
  sp.seed = 5;
  const SearchResult res = ann_search(f.data, f.sgraph, f.data, sp);
  std::size_t top1_hits = 0;
  for (std::size_t q = 0; q < res.num_queries; ++q) {
    if (res.ids_row(q)[0] == q && res.dists_row(q)[0] == 0.0f) ++top1_hits;
  }
  CHECK(static_cast<double>(top1_hits) >= 0.99 * static_cast<double>(res.num_queries));
}

TEST_CASE("single-point dataset returns that point for any query") {
  Dataset one = Dataset::empty(2, ElemKind::f32, MetricKind::l2);
  one.num_points = 1;
  one.f32 = {3.0f, 4.0f};
  SearchGraph sg;  // a single point has no outgoing edges
  sg.num_sources = 1;
  sg.out_degree = 0;
  Dataset q = Dataset::empty(2, ElemKind::f32, MetricKind::l2);
  q.num_points = 2;
  q.f32 = {0.0f, 0.0f, 100.0f, -5.0f};
  SearchParams sp;
  sp.k_s = 1;
  sp.beam_width = 4;
  const SearchResult res = ann_search(q, sg, one, sp);
  CHECK(res.ids_row(0)[0] == 0);
  CHECK(res.ids_row(1)[0] == 0);
  CHECK(res.dists_row(0)[0] == 5.0f);
}

TEST_CASE("recall@10 against brute force exceeds 0.9 on 10k points") {
  const Fixture f = build_fixture(10000, 32, 2, 10);
  SearchParams sp;
  sp.k_s = 10;
  sp.beam_width = 64;
  sp.seed = 7;
  const SearchResult res = ann_search(f.data, f.sgraph, f.data, sp);
  // Self-hits occupy one slot when querying the base set with itself, so
  // compare on the 10 best non-self entries via a k_s of 11.
  SearchParams sp11 = sp;
  sp11.k_s = 11;
  const SearchResult res11 = ann_search(f.data, f.sgraph, f.data, sp11);
  KnnGraph cleaned = KnnGraph::allocate(res11.num_queries, 10, IdSpace::local);
  for (std::size_t qi = 0; qi < res11.num_queries; ++qi) {
    std::vector<NeighborEntry> row;
    for (std::size_t j = 0; j < 11 && row.size() < 10; ++j) {
      if (res11.ids_row(qi)[j] != qi)
        row.push_back({res11.ids_row(qi)[j], res11.dists_row(qi)[j], false});
    }
    cleaned.set_row(qi, row);
  }
  const double recall = recall_at_k(cleaned, f.gt, 10);
  CHECK(recall >= 0.9);
  (void)res;
}

TEST_CASE("returned distances are exact recomputations and rows are clean") {
  const Fixture f = build_fixture(2000, 16, 3, 5);
  const Dataset queries = gen_random_dataset(200, 16, Distribution::uniform, 99);
  SearchParams sp;
  sp.k_s = 8;
  sp.beam_width = 32;
  sp.seed = 1;
  const SearchResult res = ann_search(queries, f.sgraph, f.data, sp);
  for (std::size_t q = 0; q < res.num_queries; ++q) {
    auto ids = res.ids_row(q);
    auto ds = res.dists_row(q);
    std::set<PointId> seen;
    for (std::size_t j = 0; j < res.k_s; ++j) {
      CHECK(ds[j] == cross_distance(queries, q, f.data, ids[j]));
      CHECK(seen.insert(ids[j]).second);
      if (j > 0) CHECK((ds[j - 1] < ds[j] || (ds[j - 1] == ds[j] && ids[j - 1] < ids[j])));
    }
  }
}

TEST_CASE("no point is scored twice for one query") {
  const Fixture f = build_fixture(1500, 16, 4, 5);
  const Dataset queries = gen_random_dataset(50, 16, Distribution::uniform, 5);
  SearchParams sp;
  sp.k_s = 10;
  sp.beam_width = 48;
  sp.seed = 3;
  SearchDiagnostics diag;
  diag.collect_scored_ids = true;
  ann_search(queries, f.sgraph, f.data, sp, &diag);
  REQUIRE(diag.scored_ids.size() == 50);
  for (const auto& scored : diag.scored_ids) {
    std::set<PointId> unique(scored.begin(), scored.end());
    CHECK(unique.size() == scored.size());
  }
}

TEST_CASE("median recall is non-decreasing as the beam doubles") {
  std::vector<double> medians;
  for (const std::size_t beam : {16UL, 32UL, 64UL}) {
    std::vector<double> recalls;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Dataset d = gen_random_dataset(4000, 16, Distribution::uniform, 40 + seed);
      NnDescentParams p;
      p.k = 16;
      p.seed = seed;
      const KnnGraph g = nn_descent(d, p);
      const SearchGraph sg = optimize_graph(g, d, 16);
      const GroundTruth gt = brute_force_knng(d, 10);
      const Dataset queries = gen_random_dataset(500, 16, Distribution::uniform, 7000 + seed);
      const GroundTruth empty_gt{};  // silence unused warnings pattern
      (void)empty_gt;
      SearchParams sp;
      sp.k_s = 10;
      sp.beam_width = beam;
      sp.seed = seed;
      const SearchResult res = ann_search(queries, sg, d, sp);
      // Query-set ground truth by linear scan.
      std::size_t hits = 0;
      for (std::size_t q = 0; q < queries.num_points; ++q) {
        std::vector<NeighborEntry> all;
        for (std::size_t j = 0; j < d.num_points; ++j)
          all.push_back({static_cast<PointId>(j), cross_distance(queries, q, d, j), false});
        std::sort(all.begin(), all.end(),
                  [](const NeighborEntry& a, const NeighborEntry& b) {
                    return closer(a, b);
                  });
        for (std::size_t i = 0; i < 10; ++i) {
          for (std::size_t j = 0; j < 10; ++j) {
            if (res.ids_row(q)[j] == all[i].id) {
              ++hits;
              break;
            }
          }
        }
      }
      recalls.push_back(static_cast<double>(hits) /
                        static_cast<double>(queries.num_points * 10));
    }
    std::sort(recalls.begin(), recalls.end());
    medians.push_back(recalls[2]);
  }
  CHECK(medians[0] <= medians[1]);
  CHECK(medians[1] <= medians[2]);
}

TEST_CASE("ann_search validates inputs") {
  const Fixture f = build_fixture(100, 8, 6, 5);
  SearchParams sp;
  sp.k_s = 200;  // more than the dataset holds
  CHECK_THROWS_AS(ann_search(f.data, f.sgraph, f.data, sp), std::invalid_argument);
  sp.k_s = 16;
  sp.beam_width = 8;  // k_s above beam width
  CHECK_THROWS_AS(ann_search(f.data, f.sgraph, f.data, sp), std::invalid_argument);
  Dataset wrong = gen_random_dataset(10, 4, Distribution::uniform, 1);
  sp.k_s = 4;
  sp.beam_width = 16;
  CHECK_THROWS_AS(ann_search(wrong, f.sgraph, f.data, sp), std::invalid_argument);
}

TEST_CASE("throughput probe shapes and validation") {
  const Fixture f = build_fixture(2000, 16, 8, 5);
  const Dataset queries = gen_random_dataset(100, 16, Distribution::uniform, 55);
  SearchParams sp;
  sp.k_s = 8;
  sp.beam_width = 32;
  std::vector<ThroughputCase> cases{{f.data.num_points, &f.sgraph, &f.data}};
  const auto table = search_throughput_probe(cases, queries, sp);
  REQUIRE(table.size() == 1);
  CHECK(table[0].source_count == 2000);
  CHECK(table[0].num_queries == 100);
  CHECK(table[0].qps > 0.0);

  const Dataset no_queries = Dataset::empty(16, ElemKind::f32, MetricKind::l2);
  CHECK_THROWS_AS(search_throughput_probe(cases, no_queries, sp),
                  std::invalid_argument);

  std::vector<ThroughputCase> descending{{2000, &f.sgraph, &f.data},
                                         {1000, &f.sgraph, &f.data}};
  CHECK_THROWS_AS(search_throughput_probe(descending, queries, sp),
                  std::invalid_argument);
}
