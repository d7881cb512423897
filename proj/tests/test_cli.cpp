#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "knng/evalio.hpp"

using namespace knng;
namespace fs = std::filesystem;

namespace {

std::string cli() {
  const char* p = std::getenv("KNNG_CLI");
  REQUIRE_MESSAGE(p != nullptr, "KNNG_CLI must point at the CLI binary");
  return p;
}

fs::path work_dir() {
  const auto dir = fs::temp_directory_path() / "knng_cli_tests";
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = cli() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary | std::ios::ate);
  std::vector<char> buf(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  return buf;
}

std::map<std::string, std::string> read_report(const fs::path& p) {
  std::map<std::string, std::string> kv;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

TEST_CASE("gen then build produces a graph file deterministically") {
  const auto dir = work_dir();
  const auto data = (dir / "uni.fvecs").string();
  CHECK(run("gen --dist uniform --n 600 --dims 8 --seed 5 --output " + data) == 0);

  const auto g1 = (dir / "g1.knng").string();
  const auto g2 = (dir / "g2.knng").string();
  const std::string flags =
      " --input " + data + " --k 8 --seed 3 --workers 1 --report ";
  CHECK(run("build" + flags + (dir / "r1.txt").string() + " --output " + g1) == 0);
  CHECK(run("build" + flags + (dir / "r2.txt").string() + " --output " + g2) == 0);
  CHECK(fs::exists(g1));
  CHECK(slurp(g1) == slurp(g2));

  const auto rep = read_report(dir / "r1.txt");
  CHECK(rep.count("iterations") == 1);
  CHECK(rep.count("wall_time_s") == 1);
  CHECK(rep.count("accepted_iter_0") == 1);
}

TEST_CASE("build rejects k >= N with a nonzero exit") {
  const auto dir = work_dir();
  const auto data = (dir / "tiny.fvecs").string();
  CHECK(run("gen --dist uniform --n 10 --dims 4 --seed 1 --output " + data) == 0);
  const auto out = (dir / "bad.knng").string();
  CHECK(run("build --input " + data + " --k 10 --output " + out) != 0);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("build-dist reports exactly the five phase keys") {
  const auto dir = work_dir();
  const auto data = (dir / "dist.fvecs").string();
  CHECK(run("gen --dist clustered --clusters 8 --n 1200 --dims 8 --seed 9 "
            "--output " + data) == 0);
  const auto graph = (dir / "dist.knng").string();
  const auto report = dir / "dist_report.txt";
  CHECK(run("build-dist --input " + data + " --output " + graph +
            " --ranks 4 --groups 2 --k 8 --seed 2 --report " +
            report.string()) == 0);
  const auto rep = read_report(report);
  std::vector<std::string> phase_keys;
  for (const auto& [k, v] : rep) {
    if (k.rfind("phase_", 0) == 0) phase_keys.push_back(k);
  }
  CHECK(phase_keys == std::vector<std::string>{"phase_etc", "phase_flat",
                                               "phase_local", "phase_merge",
                                               "phase_tree"});
}

TEST_CASE("build-dist rejects a non-power-of-two rank count") {
  const auto dir = work_dir();
  const auto data = (dir / "p3.fvecs").string();
  CHECK(run("gen --dist uniform --n 300 --dims 4 --seed 4 --output " + data) == 0);
  CHECK(run("build-dist --input " + data + " --output " +
            (dir / "p3.knng").string() + " --ranks 3 --k 6") != 0);
}

TEST_CASE("distributed and single builds agree within two recall points") {
  const auto dir = work_dir();
  const auto data = (dir / "parity.fvecs").string();
  CHECK(run("gen --dist clustered --clusters 16 --n 6000 --dims 12 --seed 31 "
            "--output " + data) == 0);
  // Oracle ground truth, written as a graph file for the eval subcommand.
  const Dataset d = read_vecs(data, ElemKind::f32);
  const GroundTruth gt = brute_force_knng(d, 16);
  const auto gt_path = dir / "parity_gt.knng";
  save_graph(gt.graph, gt_path);

  // Well-separated clusters leave no cross-cluster edges in the local
  // graphs, so remote searches only succeed when an entry point lands in the
  // query's cluster; 64 starts make that near-certain.
  const auto g1 = (dir / "parity_p1.knng").string();
  const auto g4 = (dir / "parity_p4.knng").string();
  CHECK(run("build-dist --input " + data + " --output " + g1 +
            " --ranks 1 --k 16 --seed 7 --entry-points 64") == 0);
  CHECK(run("build-dist --input " + data + " --output " + g4 +
            " --ranks 4 --groups 2 --k 16 --seed 7 --entry-points 64") == 0);

  auto eval_recall = [&](const std::string& graph, const fs::path& report) {
    CHECK(run("eval --input " + graph + " --reference " + gt_path.string() +
              " --eval-mode recall --ks 10 --report " + report.string()) == 0);
    return std::stod(read_report(report).at("recall"));
  };
  const double r1 = eval_recall(g1, dir / "e1.txt");
  const double r4 = eval_recall(g4, dir / "e4.txt");
  CHECK(r1 > 0.9);
  CHECK(std::abs(r1 - r4) <= 0.02);
}

TEST_CASE("search writes ivecs results usable for recall checks") {
  const auto dir = work_dir();
  const auto data = (dir / "base.fvecs").string();
  CHECK(run("gen --dist uniform --n 2000 --dims 8 --seed 13 --output " + data) == 0);
  const auto sgraph = (dir / "base.sg").string();
  CHECK(run("build --input " + data + " --k 12 --out-degree 12 --seed 5 "
            "--output " + sgraph) == 0);
  const auto queries = (dir / "queries.fvecs").string();
  CHECK(run("gen --dist uniform --n 100 --dims 8 --seed 14 --output " + queries) == 0);
  const auto results = (dir / "res.ivecs").string();
  CHECK(run("search --input " + data + " --graph " + sgraph + " --queries " +
            queries + " --ks 5 --beam 32 --output " + results) == 0);
  const IdMatrix m = read_ivecs(results);
  CHECK(m.rows == 100);
  CHECK(m.cols == 5);
  for (const auto id : m.v) {
    CHECK(id >= 0);
    CHECK(id < 2000);
  }
}

TEST_CASE("gen supports shifted copies") {
  const auto dir = work_dir();
  const auto out = (dir / "copies.fvecs").string();
  CHECK(run("gen --dist uniform --n 500 --dims 4 --seed 3 --copies 2 "
            "--epsilon 0.5 --output " + out) == 0);
  const Dataset d = read_vecs(out, ElemKind::f32);
  CHECK(d.num_points == 1000);
  CHECK(run("gen --dist uniform --n 10 --dims 2 --copies 2 --epsilon 0 "
            "--output " + (dir / "bad.fvecs").string()) != 0);
}

TEST_CASE("predict emits one row per P,M combination") {
  const auto dir = work_dir();
  const auto report = dir / "predict.txt";
  CHECK(run("predict --S 1e-6 --alpha 1e-5 --beta 1e-9 --n-points 1e8 "
            "--ranks 16 --groups 16 --report " + report.string()) == 0);
  const auto rep = read_report(report);
  // P in {2,4,8,16} with M in {2..P}: 1+2+3+4 rows.
  CHECK(rep.size() == 10);
  CHECK(rep.count("p16_m4") == 1);
}

TEST_CASE("unknown subcommands and missing flags fail loudly") {
  CHECK(run("bogus") != 0);
  CHECK(run("build") != 0);  // no input/output
}
