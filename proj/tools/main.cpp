// Command-line driver: build, build-dist, search, eval, gen, predict.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "knng/annsearch.hpp"
#include "knng/evalio.hpp"
#include "knng/graphopt.hpp"
#include "knng/nndescent.hpp"
#include "knng/refine.hpp"

namespace fs = std::filesystem;
using namespace knng;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

ElemKind elem_kind_from_path(const fs::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".fvecs") return ElemKind::f32;
  if (ext == ".bvecs") return ElemKind::u8;
  throw std::invalid_argument("cannot infer element type from extension '" + ext +
                              "' (expected .fvecs or .bvecs): " + p.string());
}

struct Report {
  std::vector<std::pair<std::string, std::string>> lines;

  void add(const std::string& key, const std::string& value) {
    lines.emplace_back(key, value);
  }
  void add(const std::string& key, double value) {
    std::ostringstream os;
    os << value;
    lines.emplace_back(key, os.str());
  }
  void add(const std::string& key, std::size_t value) {
    lines.emplace_back(key, std::to_string(value));
  }

  void write(const std::string& path) const {
    if (path.empty()) return;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    for (const auto& [k, v] : lines) out << k << "=" << v << "\n";
  }
  void print() const {
    for (const auto& [k, v] : lines) std::cout << k << "=" << v << "\n";
  }
};

struct CommonFlags {
  std::string input;
  std::string output;
  std::string metric = "l2";
  std::size_t k = 32;
  std::size_t ks = 0;
  double delta = 0.0001;
  double rho = 0.5;
  std::size_t max_iters = 100;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::size_t ranks = 1;
  std::size_t groups = 2;
  std::size_t beam = 64;
  std::size_t entry_points = 16;
  std::size_t out_degree = 0;
  bool skip_tree = false;
  bool double_buffer = false;
  std::string report_path;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--input", f.input, "Input path");
  cmd->add_option("--output", f.output, "Output path");
  cmd->add_option("--metric", f.metric, "Distance metric (l2|cosine)")
      ->check(CLI::IsMember({"l2", "cosine"}));
  cmd->add_option("--k", f.k, "Neighbors per point");
  cmd->add_option("--ks", f.ks, "Search results per query (default: k)");
  cmd->add_option("--delta", f.delta, "Convergence threshold");
  cmd->add_option("--rho", f.rho, "Sampling rate in (0,1]");
  cmd->add_option("--max-iters", f.max_iters, "Iteration cap");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--workers", f.workers, "Worker threads (0 = hardware)");
  cmd->add_option("--ranks", f.ranks, "Simulated rank count P");
  cmd->add_option("--groups", f.groups, "Group count M after the tree phase");
  cmd->add_option("--beam", f.beam, "Search beam width");
  cmd->add_option("--entry-points", f.entry_points, "Random entry points per query");
  cmd->add_option("--out-degree", f.out_degree, "Search-graph out-degree");
  cmd->add_flag("--skip-tree", f.skip_tree, "Skip the tree refinement phase");
  cmd->add_flag("--double-buffer", f.double_buffer,
                "Overlap flat-phase pulls with search");
  cmd->add_option("--report", f.report_path, "Write key=value report here");
}

NnDescentParams nn_params(const CommonFlags& f) {
  NnDescentParams p;
  p.k = f.k;
  p.delta = f.delta;
  p.rho = f.rho;
  p.max_iters = f.max_iters;
  p.seed = f.seed;
  p.workers = f.workers;
  return p;
}

SearchParams search_params(const CommonFlags& f) {
  SearchParams p;
  p.k_s = f.ks ? f.ks : f.k;
  p.beam_width = f.beam;
  p.num_entry_points = f.entry_points;
  p.seed = f.seed;
  p.workers = f.workers;
  return p;
}

int cmd_build(const CommonFlags& f) {
  if (f.input.empty() || f.output.empty())
    throw std::invalid_argument("build: --input and --output are required");
  const Dataset data = read_vecs(f.input, elem_kind_from_path(f.input),
                                 metric_from_string(f.metric));
  NnDescentStats stats;
  const double t0 = now_seconds();
  const KnnGraph g = nn_descent(data, nn_params(f), &stats);
  const double build_s = now_seconds() - t0;
  Report rep;
  rep.add("n", data.num_points);
  rep.add("dims", data.dims);
  rep.add("k", f.k);
  rep.add("iterations", stats.iterations);
  for (std::size_t i = 0; i < stats.accepted_per_iter.size(); ++i)
    rep.add("accepted_iter_" + std::to_string(i), stats.accepted_per_iter[i]);
  rep.add("wall_time_s", build_s);
  if (f.out_degree != 0) {
    const double t1 = now_seconds();
    const SearchGraph sg = optimize_graph(g, data, f.out_degree, f.workers);
    rep.add("optimize_time_s", now_seconds() - t1);
    save_sgraph(sg, f.output);
  } else {
    save_graph(g, f.output);
  }
  rep.write(f.report_path);
  rep.print();
  return 0;
}

int cmd_build_dist(const CommonFlags& f) {
  if (f.input.empty() || f.output.empty())
    throw std::invalid_argument("build-dist: --input and --output are required");
  const Dataset data = read_vecs(f.input, elem_kind_from_path(f.input),
                                 metric_from_string(f.metric));
  RefineConfig cfg;
  cfg.ranks = f.ranks;
  cfg.groups = f.groups;
  cfg.k = f.k;
  cfg.k_s = f.ks;
  cfg.out_degree = f.out_degree;
  cfg.nn = nn_params(f);
  cfg.search = search_params(f);
  cfg.skip_tree_phase = f.skip_tree;
  cfg.double_buffer = f.double_buffer;
  cfg.seed = f.seed;
  const DistBuildResult result = build_distributed(data, cfg);
  save_graph(result.graph, f.output);
  Report rep;
  rep.add("n", data.num_points);
  rep.add("p", f.ranks);
  rep.add("m", f.groups);
  rep.add("k", f.k);
  rep.add("tree_levels", result.levels);
  rep.add("phase_local", result.phases.local_s);
  rep.add("phase_tree", result.phases.tree_s);
  rep.add("phase_merge", result.phases.merge_s);
  rep.add("phase_flat", result.phases.flat_s);
  rep.add("phase_etc", result.phases.etc_s);
  rep.write(f.report_path);
  rep.print();
  return 0;
}

int cmd_search(const CommonFlags& f, const std::string& graph_path,
               const std::string& queries_path) {
  if (f.input.empty() || f.output.empty() || graph_path.empty() ||
      queries_path.empty())
    throw std::invalid_argument(
        "search: --input, --graph, --queries and --output are required");
  const MetricKind metric = metric_from_string(f.metric);
  const Dataset vectors = read_vecs(f.input, elem_kind_from_path(f.input), metric);
  const Dataset queries =
      read_vecs(queries_path, elem_kind_from_path(queries_path), metric);
  const auto region = wire::load_region(graph_path);
  const auto header = wire::peek_header(region);
  SearchGraph sg;
  if (header.kind == wire::RegionKind::sgraph) {
    sg = wire::deserialize_sgraph(region, IdSpace::local);
  } else {
    // A raw kNNG is optimized on the fly with out-degree k.
    const KnnGraph g = wire::deserialize_knng(region, IdSpace::local);
    sg = optimize_graph(g, vectors, f.out_degree ? f.out_degree : g.k, f.workers);
  }
  const double t0 = now_seconds();
  const SearchResult res = ann_search(queries, sg, vectors, search_params(f));
  const double secs = now_seconds() - t0;
  IdMatrix out;
  out.rows = res.num_queries;
  out.cols = res.k_s;
  out.v.assign(res.ids.begin(), res.ids.end());
  write_ivecs(out, f.output);
  Report rep;
  rep.add("queries", res.num_queries);
  rep.add("ks", res.k_s);
  rep.add("wall_time_s", secs);
  rep.add("qps", secs > 0 ? static_cast<double>(res.num_queries) / secs : 0.0);
  rep.write(f.report_path);
  rep.print();
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& reference_path,
             const std::string& mode) {
  if (f.input.empty() || reference_path.empty())
    throw std::invalid_argument("eval: --input and --reference are required");
  const KnnGraph test = load_graph(f.input);
  const KnnGraph reference = load_graph(reference_path);
  const std::size_t k_eval = f.ks ? f.ks : std::min(test.k, reference.k);
  double value = 0.0;
  if (mode == "recall") {
    value = recall_at_k(test, reference, k_eval);
  } else if (mode == "threshold") {
    value = distance_threshold_recall(test, reference, k_eval);
  } else {
    throw std::invalid_argument("eval: unknown --eval-mode " + mode);
  }
  Report rep;
  rep.add("mode", mode);
  rep.add("k_eval", k_eval);
  rep.add(mode == "recall" ? "recall" : "threshold_recall", value);
  rep.write(f.report_path);
  rep.print();
  return 0;
}

int cmd_gen(const CommonFlags& f, const std::string& dist, std::size_t n,
            std::size_t dims, std::size_t clusters, std::size_t copies,
            double epsilon) {
  if (f.output.empty()) throw std::invalid_argument("gen: --output is required");
  Dataset data;
  if (!f.input.empty()) {
    data = read_vecs(f.input, elem_kind_from_path(f.input),
                     metric_from_string(f.metric));
  } else {
    Distribution d;
    if (dist == "uniform") {
      d = Distribution::uniform;
    } else if (dist == "gaussian") {
      d = Distribution::gaussian;
    } else if (dist == "clustered") {
      d = Distribution::clustered;
    } else {
      throw std::invalid_argument("gen: unknown --dist " + dist);
    }
    data = gen_random_dataset(n, dims, d, f.seed, clusters,
                              metric_from_string(f.metric));
  }
  if (copies > 1) {
    data = synth_shifted_copies(data, copies, static_cast<float>(epsilon));
  }
  write_vecs(data, f.output);
  Report rep;
  rep.add("n", data.num_points);
  rep.add("dims", data.dims);
  rep.write(f.report_path);
  rep.print();
  return 0;
}

int cmd_predict(const CommonFlags& f, double s_cost, double alpha, double beta,
                double n_points) {
  CostModel cm{s_cost, alpha, beta};
  std::printf("%6s %6s %14s %14s %14s %14s\n", "P", "M", "tree_s", "merge_s",
              "flat_s", "total_s");
  Report rep;
  for (std::size_t p = 2; p <= f.ranks; p *= 2) {
    for (std::size_t m = 2; m <= std::min(p, f.groups); m *= 2) {
      const RuntimeBreakdown b = predicted_runtime(cm, n_points, p, m);
      std::printf("%6zu %6zu %14.6g %14.6g %14.6g %14.6g\n", p, m, b.tree,
                  b.merge, b.flat, b.total);
      std::ostringstream key, value;
      key << "p" << p << "_m" << m;
      value << b.tree << "," << b.merge << "," << b.flat << "," << b.total;
      rep.add(key.str(), value.str());
    }
  }
  rep.write(f.report_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximate k-nearest-neighbor graph toolkit"};
  app.require_subcommand(1);

  CommonFlags f;
  std::string graph_path, queries_path, reference_path;
  std::string eval_mode = "recall";
  std::string dist = "uniform";
  std::size_t gen_n = 1000, gen_dims = 16, gen_clusters = 0, gen_copies = 1;
  double gen_epsilon = 0.0, predict_s = 1e-6, predict_alpha = 1e-5,
         predict_beta = 1e-9, predict_n = 1e9;

  auto* build = app.add_subcommand("build", "Single-partition graph build");
  add_common_flags(build, f);

  auto* build_dist =
      app.add_subcommand("build-dist", "Distributed build over simulated ranks");
  add_common_flags(build_dist, f);

  auto* search = app.add_subcommand("search", "Batch ANN search over a graph file");
  add_common_flags(search, f);
  search->add_option("--graph", graph_path, "Graph file (kNNG or search graph)");
  search->add_option("--queries", queries_path, "Query vectors file");

  auto* eval = app.add_subcommand("eval", "Compare two graph files");
  add_common_flags(eval, f);
  eval->add_option("--reference", reference_path, "Reference graph file");
  eval->add_option("--eval-mode", eval_mode, "recall|threshold")
      ->check(CLI::IsMember({"recall", "threshold"}));

  auto* gen = app.add_subcommand("gen", "Generate synthetic datasets");
  add_common_flags(gen, f);
  gen->add_option("--dist", dist, "uniform|gaussian|clustered");
  gen->add_option("--n", gen_n, "Points to generate");
  gen->add_option("--dims", gen_dims, "Dimensions");
  gen->add_option("--clusters", gen_clusters, "Cluster count for clustered");
  gen->add_option("--copies", gen_copies, "Shifted copies (applied after gen/load)");
  gen->add_option("--epsilon", gen_epsilon, "Gap between shifted copies");

  auto* predict = app.add_subcommand("predict", "Predicted runtime table");
  add_common_flags(predict, f);
  predict->add_option("--S", predict_s, "Seconds per ANN query");
  predict->add_option("--alpha", predict_alpha, "Latency seconds per message");
  predict->add_option("--beta", predict_beta, "Seconds per transferred unit");
  predict->add_option("--n-points", predict_n, "Dataset size N");

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) return cmd_build(f);
    if (build_dist->parsed()) return cmd_build_dist(f);
    if (search->parsed()) return cmd_search(f, graph_path, queries_path);
    if (eval->parsed()) return cmd_eval(f, reference_path, eval_mode);
    if (gen->parsed())
      return cmd_gen(f, dist, gen_n, gen_dims, gen_clusters, gen_copies,
                     gen_epsilon);
    if (predict->parsed())
      return cmd_predict(f, predict_s, predict_alpha, predict_beta, predict_n);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
