#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "semap/consensus.hpp"
#include "semap/environment.hpp"
#include "semap/errors.hpp"
#include "semap/netsim.hpp"
#include "semap/runner.hpp"
#include "semap/scenario.hpp"

using namespace semap;

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Maps carry no prior; inspection uses the uniform one.
SemanticOctree read_map(const std::string& path, const MapConfig* receiver = nullptr) {
  const auto bytes = read_file(path);
  const MapConfig cfg = decode_header(bytes);
  return decode_payload(bytes, LogOddsVector(static_cast<std::size_t>(cfg.classes()), 0.0), 0.0, receiver);
}

int cmd_run(const std::string& config, const std::string& out, bool parallel) {
  const Scenario s = load_scenario(config);
  RunOptions opts;
  opts.exec = parallel ? Execution::Parallel : Execution::Serial;
  const RunResult r = run_scenario(s, opts);
  write_outputs(out, r);
  if (!r.records.empty()) {
    const MetricsRecord& last = r.records.back();
    fmt::print("ticks {}  residual {:.6g}  octree bytes {:.1f} (grid {})\n", last.tick, last.residual_unweighted,
               last.octree_bytes_mean, last.grid_bytes);
  }
  fmt::print("wrote {}/metrics.csv and {} maps\n", out, r.maps.size());
  return 0;
}

int cmd_query(const std::string& path, const std::vector<double>& point) {
  const SemanticOctree map = read_map(path);
  if (point.size() != 3) throw InvalidInput("--point expects x,y,z");
  const QueryResult q = map.query({point[0], point[1], point[2]});
  const ClassDistribution p = softmax(q.h);
  fmt::print("depth {}\n", q.level);
  for (std::size_t c = 0; c < p.size(); ++c) fmt::print("class {}: {:.6f}\n", c, p[c]);
  return 0;
}

int cmd_diff(const std::string& a_path, const std::string& b_path) {
  const SemanticOctree a = read_map(a_path);
  const SemanticOctree b = read_map(b_path, &a.config());
  fmt::print("{:.17g}\n", pair_residual(a, b, 1.0).value());
  return 0;
}

int cmd_env_gen(const std::string& spec, std::uint64_t seed, bool seed_set, const std::string& out) {
  const Scenario s = load_scenario(spec);
  const GeneratedEnvironment g = generate_environment(s.environment, seed_set ? seed : s.seed);
  save_environment(g.environment, out);
  fmt::print("{} boxes, {} cells\n", g.boxes.size(), g.environment.labels.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed semantic octree mapping simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  bool deterministic = true;
  app.add_flag("--deterministic,!--no-deterministic", deterministic,
               "Serial robot loop (default); --no-deterministic implies --parallel");

  std::string config, out = "out";
  bool parallel = false;
  auto* run = app.add_subcommand("run", "Run a scenario");
  run->add_option("config", config, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory");
  run->add_flag("--parallel", parallel, "Run robots on OpenMP threads (bitwise identical output)");

  std::string map_path;
  std::vector<double> point;
  auto* query = app.add_subcommand("query", "Class distribution at a point");
  query->add_option("map", map_path, ".som file")->required()->check(CLI::ExistingFile);
  query->add_option("--point", point, "x,y,z")->required()->delimiter(',')->expected(3);

  std::string a_path, b_path;
  auto* diff = app.add_subcommand("diff", "Squared-distance residual between two maps");
  diff->add_option("a", a_path)->required()->check(CLI::ExistingFile);
  diff->add_option("b", b_path)->required()->check(CLI::ExistingFile);

  auto* env = app.add_subcommand("env", "Environment tools");
  env->require_subcommand(1);
  std::string spec, env_out;
  std::uint64_t seed = 0;
  auto* gen = env->add_subcommand("gen", "Generate a labeled environment");
  gen->add_option("spec", spec, "Scenario or environment file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = gen->add_option("--seed", seed, "Seed (default: the file's seed)");
  gen->add_option("--out", env_out, "Output file")->required();

  CLI11_PARSE(app, argc, argv);
  if (!deterministic) parallel = true;

  try {
    if (*run) return cmd_run(config, out, parallel);
    if (*query) return cmd_query(map_path, point);
    if (*diff) return cmd_diff(a_path, b_path);
    if (*gen) return cmd_env_gen(spec, seed, seed_opt->count() > 0, env_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
