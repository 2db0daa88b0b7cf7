#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "cdrdemo/eval.hpp"
#include "cdrdemo/io.hpp"
#include "cdrdemo/pipeline.hpp"
#include "support/oracles.hpp"

using namespace cdrdemo;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::path(CDRDEMO_TEST_TMP) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PipelineConfig small_run(const fs::path& out, unsigned threads = 1) {
  return parse_pipeline_config(R"({
    "seed": 3,
    "threads": )" + std::to_string(threads) + R"(,
    "out_dir": ")" + out.string() + R"(",
    "stages": ["synth", "features", "stats", "classify", "diffuse", "pps", "evaluate"],
    "synth": {"population": 2000},
    "classify": {"c_values": [0.1, 1.0]},
    "diffuse": {"lambda_sweep": [0.3, 0.6]}
  })", fresh_dir("unused"));
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = io::read_file(e.path());
  return out;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CDRDEMO_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TopoMetrics flat_topo(std::size_t n) {
  TopoMetrics t;
  t.degree.assign(n, 3);
  t.sin.assign(n, 0);
  t.dts.assign(n, 1);
  return t;
}

}  // namespace

TEST_CASE("degree bin labels") {
  CHECK(degree_bin(1, kDefaultDegreeBuckets) == "[1,2]");
  CHECK(degree_bin(2, kDefaultDegreeBuckets) == "[1,2]");
  CHECK(degree_bin(3, kDefaultDegreeBuckets) == "(2,29]");
  CHECK(degree_bin(48, kDefaultDegreeBuckets) == "(29,48]");
  CHECK(degree_bin(49, kDefaultDegreeBuckets) == "(48,66]");
  CHECK(degree_bin(100, kDefaultDegreeBuckets) == "(66,100]");
  CHECK(degree_bin(101, kDefaultDegreeBuckets) == ">100");
}

TEST_CASE("perfect predictions score one everywhere") {
  std::vector<std::pair<NodeId, Category>> targets;
  std::vector<Category> pred(40);
  for (NodeId x = 0; x < 40; ++x) {
    pred[x] = static_cast<Category>(x % 4);
    targets.emplace_back(x, pred[x]);
  }
  auto topo = flat_topo(40);
  for (NodeId x = 0; x < 40; ++x) {
    topo.degree[x] = 1 + x * 3;
    topo.sin[x] = x % 3;
    topo.dts[x] = 1 + x % 4;
  }
  auto r = evaluate(pred, targets, topo, 4);
  CHECK(r.overall_accuracy == 1.0);
  CHECK(r.coverage == 1.0);
  for (const auto* rows : {&r.by_age_group, &r.by_sin, &r.by_dts, &r.by_degree}) {
    for (const auto& row : *rows) {
      if (row.evaluated > 0) CHECK(row.accuracy() == 1.0);
    }
  }
  for (const auto& cell : r.dts_degree_crosstab) CHECK(cell.correct == cell.evaluated);
}

TEST_CASE("cyclically permuted predictions score zero") {
  std::vector<std::pair<NodeId, Category>> targets;
  std::vector<Category> pred(100);
  for (NodeId x = 0; x < 100; ++x) {
    targets.emplace_back(x, static_cast<Category>(x % 4));
    pred[x] = static_cast<Category>((x + 1) % 4);
  }
  auto r = evaluate(pred, targets, flat_topo(100), 4);
  CHECK(r.overall_accuracy == 0.0);
  CHECK(r.correct == 0);
}

TEST_CASE("evaluation recount and bin populations") {
  std::mt19937_64 gen(4);
  auto g = oracle::random_connected_graph(300, 600, gen);
  std::vector<NodeId> seeds;
  for (NodeId x = 0; x < 300; x += 10) seeds.push_back(x);
  const auto topo = compute_topo_metrics(g, seeds);
  std::vector<Category> pred(300);
  std::vector<std::pair<NodeId, Category>> targets;
  for (NodeId x = 0; x < 300; ++x) {
    pred[x] = gen() % 7 == 0 ? kNoCategory : static_cast<Category>(gen() % 4);
    if (x % 10 != 0 && x % 3 == 0) targets.emplace_back(x, static_cast<Category>(gen() % 4));
  }
  auto r = evaluate(pred, targets, topo, 4);

  std::size_t evaluated = 0, correct = 0;
  for (auto [x, t] : targets) {
    evaluated += pred[x] != kNoCategory;
    correct += pred[x] == t;
  }
  CHECK(r.validation == targets.size());
  CHECK(r.evaluated == evaluated);
  CHECK(r.correct == correct);
  CHECK(r.overall_accuracy == doctest::Approx(static_cast<double>(correct) / evaluated));
  CHECK(r.coverage == doctest::Approx(static_cast<double>(evaluated) / targets.size()));

  for (const auto* rows : {&r.by_age_group, &r.by_sin, &r.by_dts, &r.by_degree}) {
    std::size_t v = 0, c = 0;
    for (const auto& row : *rows) {
      v += row.validation;
      c += row.correct;
      CHECK(row.accuracy() >= 0.0);
      CHECK(row.accuracy() <= 1.0);
    }
    CHECK(v == targets.size());
    CHECK(c == correct);
  }
  std::size_t cross = 0;
  for (const auto& cell : r.dts_degree_crosstab) cross += cell.evaluated;
  CHECK(cross == evaluated);

  CHECK_THROWS_AS(evaluate(pred, {}, topo, 4), DataError);
}

TEST_CASE("distribution guess baseline") {
  std::vector<std::pair<NodeId, Category>> truth = {{0, 0}, {1, 0}, {2, 1}, {3, 2}};
  const std::vector<double> guess = {0.5, 0.25, 0.25, 0.0};
  CHECK(distribution_guess_accuracy(guess, truth) == doctest::Approx(0.5 * 0.5 + 0.25 * 0.25 + 0.25 * 0.25));
}

TEST_CASE("empty stage list writes only the manifest") {
  const auto dir = fresh_dir("pl_empty");
  auto cfg = parse_pipeline_config(R"({"stages": []})", dir);
  cfg.out_dir = dir / "out";
  auto run = run_pipeline(cfg);
  CHECK(run.executed.empty());
  auto files = read_tree(cfg.out_dir);
  REQUIRE(files.size() == 1);
  CHECK(files.count("manifest.json") == 1);
}

TEST_CASE("missing stage input names the stage") {
  const auto dir = fresh_dir("pl_missing");
  auto cfg = parse_pipeline_config(R"({"stages": ["features"]})", dir);
  cfg.out_dir = dir / "out";
  try {
    run_pipeline(cfg);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("features") != std::string::npos);
  }
}

TEST_CASE("config errors are usage errors") {
  const fs::path base = ".";
  CHECK_THROWS_AS(parse_pipeline_config(R"({"stagez": []})", base), UsageError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"diffuse": {"lambda": 0.5, "beta": 1}})", base), UsageError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"stages": ["pps", "diffuse"]})", base), UsageError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"stages": ["synth", "ingest"]})", base), UsageError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"stages": ["train"]})", base), UsageError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"pps": {"q_values": [0]}})", base), UsageError);
  CHECK_THROWS_AS(parse_pipeline_config("{", base), UsageError);
  auto cfg = parse_pipeline_config(R"({"ingest": {"calls": "in/calls.csv"}})", "/data");
  CHECK(cfg.calls == fs::path("/data/in/calls.csv"));
  CHECK(cfg.out_dir == fs::path("/data/out"));
}

TEST_CASE("small synthetic run emits every artifact and reruns as a no-op") {
  const auto out = fresh_dir("pl_small") / "out";
  const auto cfg = small_run(out);
  auto first = run_pipeline(cfg);
  CHECK(first.executed.size() == 7);
  for (const char* f : {"calls.csv", "sms.csv", "labels.csv", "graph.bin", "topo.csv", "features.csv",
                        "pca.csv", "homophily_delta.csv", "tukey.csv", "bootstrap.csv", "model.json",
                        "ml_probs.csv", "state_rdif.csv", "state_mlrdif.csv", "lambda_sweep.csv",
                        "pyramid.csv", "assignments_mlrdif_q0.125.csv", "eval_report.json",
                        "table9.csv", "strata_rdif.csv", "crosstab_rdif.csv", "manifest.json"}) {
    CHECK_MESSAGE(fs::exists(out / f), f);
  }

  const auto before = read_tree(out);
  auto second = run_pipeline(cfg);
  CHECK(second.executed.empty());
  CHECK(second.skipped.size() == 7);
  CHECK(read_tree(out) == before);

  // Independent recount of the diffusion argmax accuracy.
  std::ifstream lab(out / "labels.csv"), st(out / "state_rdif.csv");
  const auto labels = read_labels_csv(lab);
  std::string line;
  std::getline(st, line);
  std::size_t total = 0, hits = 0;
  while (std::getline(st, line)) {
    const auto id = line.substr(0, line.find(','));
    const auto i = *labels.find(id);
    if (labels.role[i] != Role::kValidation || !labels.age[i]) continue;
    ++total;
    hits += std::stoi(line.substr(line.rfind(',') + 1)) == labels.boundaries.category_of(*labels.age[i]);
  }
  const auto report = json::parse(io::read_file(out / "eval_report.json"));
  CHECK(report["argmax"]["rdif"]["validation"].get<std::size_t>() == total);
  CHECK(report["argmax"]["rdif"]["correct"].get<std::size_t>() == hits);

  // A damaged output re-runs the stage that produced it; the restored file
  // hashes as before, so later stages stay fresh.
  io::write_file(out / "pyramid.csv", "category,fraction\n0,1\n");
  auto third = run_pipeline(cfg);
  CHECK(third.executed == std::vector<std::string>{"pps"});
  CHECK(read_tree(out) == before);
}

TEST_CASE("artifacts do not depend on the thread count") {
  const auto a = fresh_dir("pl_t1") / "out";
  const auto b = fresh_dir("pl_t4") / "out";
  run_pipeline(small_run(a, 1));
  run_pipeline(small_run(b, 4));
  auto ta = read_tree(a), tb = read_tree(b);
  CHECK(ta == tb);
}

TEST_CASE("command line exit codes") {
  const auto dir = fresh_dir("cli");
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("no-such-command") == 1);
  CHECK(run_cli("pipeline") == 1);
  CHECK(run_cli("pipeline --config " + (dir / "absent.json").string()) == 1);
  CHECK(run_cli("--out-dir " + (dir / "s").string() + " synth --population 300") == 0);
  CHECK(fs::exists(dir / "s" / "calls.csv"));
  CHECK(run_cli("ingest --calls " + (dir / "absent.csv").string() + " --labels " +
                (dir / "s" / "labels.csv").string()) == 2);
  io::write_file(dir / "bad.csv", std::string(kCdrHeader) + "\na,b,notatime,5,outgoing,T1\n");
  CHECK(run_cli("--out-dir " + (dir / "i").string() + " ingest --strict --calls " +
                (dir / "bad.csv").string() + " --labels " + (dir / "s" / "labels.csv").string()) == 2);
  CHECK(run_cli("diffuse --lambda 2 --graph x --labels y") == 1);

  io::write_file(dir / "p.json", R"({"stages": ["classify"]})");
  CHECK(run_cli("pipeline --config " + (dir / "p.json").string()) == 2);
  io::write_file(dir / "q.json", R"({"stages": [], "bogus": 1})");
  CHECK(run_cli("pipeline --config " + (dir / "q.json").string()) == 1);
}
