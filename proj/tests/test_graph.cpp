#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "cdrdemo/graph.hpp"
#include "support/oracles.hpp"

using namespace cdrdemo;

namespace {

CdrRecord call(std::string a, std::string b) {
  CdrRecord r;
  r.caller = std::move(a);
  r.callee = std::move(b);
  r.duration_s = 10;
  return r;
}

SmsRecord sms(std::string a, std::string b) {
  SmsRecord r;
  r.sender = std::move(a);
  r.receiver = std::move(b);
  return r;
}

NodeId id(const SocialGraph& g, std::string_view s) { return *g.find(s); }

SocialGraph path(std::size_t n) {
  std::vector<std::string> ids;
  std::vector<std::pair<NodeId, NodeId>> e;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("p" + std::to_string(i));
  for (NodeId i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return SocialGraph::from_edges(ids, e);
}

}  // namespace

TEST_CASE("build_graph symmetrizes calls and sms into one edge per pair") {
  std::vector<CdrRecord> calls = {call("A", "B"), call("A", "C")};
  std::vector<SmsRecord> texts = {sms("B", "A")};
  auto g = build_graph(calls, texts);
  CHECK(g.node_count() == 3);
  CHECK(g.edge_count() == 2);
  CHECK(g.neighbors(id(g, "A")).size() == 2);
  CHECK(g.degree(id(g, "B")) == 1);
  g.validate();
}

TEST_CASE("self calls keep the node but add no edge") {
  std::vector<CdrRecord> calls = {call("A", "A")};
  auto g = build_graph(calls, {});
  CHECK(g.node_count() == 1);
  CHECK(g.edge_count() == 0);
}

TEST_CASE("empty input gives an empty graph") {
  auto g = build_graph({}, {});
  CHECK(g.node_count() == 0);
  CHECK(g.edge_count() == 0);
  g.validate();
}

TEST_CASE("node ids follow lexicographic order of external ids") {
  std::vector<CdrRecord> calls = {call("zed", "amy"), call("bob", "zed")};
  auto g = build_graph(calls, {});
  CHECK(g.external_id(0) == "amy");
  CHECK(g.external_id(1) == "bob");
  CHECK(g.external_id(2) == "zed");
  auto n = g.neighbors(2);
  CHECK(std::is_sorted(n.begin(), n.end()));
}

TEST_CASE("random graphs satisfy the structural invariants") {
  std::mt19937_64 gen(11);
  for (int rep = 0; rep < 20; ++rep) {
    auto g = oracle::random_graph(200, 600, gen);
    g.validate();
    for (NodeId x = 0; x < g.node_count(); ++x) {
      auto nb = g.neighbors(x);
      CHECK(std::adjacent_find(nb.begin(), nb.end()) == nb.end());
      for (NodeId y : nb) {
        CHECK(y != x);
        auto back = g.neighbors(y);
        CHECK(std::binary_search(back.begin(), back.end(), x));
      }
    }
  }
}

TEST_CASE("star hub above the degree cap is removed") {
  std::vector<std::string> ids = {"hub"};
  std::vector<std::pair<NodeId, NodeId>> e;
  for (NodeId i = 1; i <= 101; ++i) {
    ids.push_back("leaf" + std::to_string(1000 + i));
    e.emplace_back(0, i);
  }
  auto g = SocialGraph::from_edges(ids, e);
  const NodeId seed = id(g, "leaf1001");
  auto r = prune_graph(g, std::vector<NodeId>{seed}, 100);
  CHECK(r.removed_by_degree == 1);
  CHECK(r.graph.node_count() == 1);
  CHECK(r.graph.external_id(0) == "leaf1001");
  CHECK(r.seeds == std::vector<NodeId>{0});

  auto keep_hub = prune_graph(g, std::vector<NodeId>{seed}, 101);
  CHECK(keep_hub.graph.node_count() == 102);
}

TEST_CASE("seedless components are dropped") {
  auto g = SocialGraph::from_edges({"a", "b", "c", "d"}, {{0, 1}, {2, 3}});
  auto r = prune_graph(g, std::vector<NodeId>{0}, 100);
  CHECK(r.graph.node_count() == 2);
  CHECK(r.removed_seedless == 2);
  CHECK(r.old_to_new[2] == kInvalidNode);
  CHECK(r.old_to_new[1] == 1);
}

TEST_CASE("a seed removed by the degree filter is reported") {
  std::vector<std::string> ids = {"hub", "x", "y", "z"};
  auto g = SocialGraph::from_edges(ids, {{0, 1}, {0, 2}, {0, 3}, {1, 2}});
  auto r = prune_graph(g, std::vector<NodeId>{0}, 2);
  CHECK(r.seeds.empty());
  CHECK_FALSE(r.warnings.empty());
  CHECK(r.graph.node_count() == 0);
}

TEST_CASE("prune matches the brute-force filter then search") {
  std::mt19937_64 gen(5);
  for (int rep = 0; rep < 10; ++rep) {
    auto g = oracle::random_graph(1000, 900, gen);
    std::vector<NodeId> seeds;
    std::uniform_int_distribution<NodeId> pick(0, 999);
    for (int i = 0; i < 50; ++i) seeds.push_back(pick(gen));
    std::sort(seeds.begin(), seeds.end());
    seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
    const std::size_t cap = 3;
    auto r = prune_graph(g, seeds, cap);
    auto expect = oracle::brute_prune(g, seeds, cap);
    std::set<std::string> got(r.graph.ids().begin(), r.graph.ids().end());
    CHECK(got == expect);
    r.graph.validate();

    auto again = prune_graph(r.graph, r.seeds, cap);
    CHECK(again.graph == r.graph);
  }
}

TEST_CASE("connected components on small graphs") {
  auto empty = SocialGraph::from_edges({"a", "b", "c"}, {});
  CHECK(connected_components(empty) == std::vector<NodeId>{0, 1, 2});
  CHECK(connected_components(path(3)) == std::vector<NodeId>{0, 0, 0});
}

TEST_CASE("connected components match union-find") {
  std::mt19937_64 gen(3);
  for (int rep = 0; rep < 30; ++rep) {
    auto g = oracle::random_graph(1 + gen() % 200, gen() % 220, gen);
    auto got = connected_components(g);
    auto expect = oracle::union_find_components(g);
    CHECK(std::equal(got.begin(), got.end(), expect.begin(), expect.end()));
  }
}

TEST_CASE("topological metrics on a path") {
  auto g = path(3);
  auto t = compute_topo_metrics(g, std::vector<NodeId>{0});
  CHECK(t.dts == std::vector<std::uint32_t>{0, 1, 2});
  CHECK(t.sin == std::vector<std::uint32_t>{0, 1, 0});
  CHECK(t.degree == std::vector<std::uint32_t>{1, 2, 1});
}

TEST_CASE("unreachable nodes carry the sentinel distance") {
  auto g = SocialGraph::from_edges({"a", "b", "c"}, {{0, 1}});
  auto t = compute_topo_metrics(g, std::vector<NodeId>{0});
  CHECK(t.dts[2] == kUnreachable);
}

TEST_CASE("distance to seeds matches the per-seed BFS minimum") {
  std::mt19937_64 gen(9);
  for (int rep = 0; rep < 5; ++rep) {
    auto g = oracle::random_graph(500, 700, gen);
    std::vector<NodeId> seeds;
    for (NodeId s = 0; s < 500; s += 25) seeds.push_back(s);
    auto t = compute_topo_metrics(g, seeds);
    std::vector<std::uint32_t> best(500, kUnreachable);
    for (auto s : seeds) {
      auto d = oracle::bfs(g, s);
      for (std::size_t x = 0; x < 500; ++x) best[x] = std::min(best[x], d[x]);
    }
    CHECK(t.dts == best);
    std::set<NodeId> seed_set(seeds.begin(), seeds.end());
    for (NodeId x = 0; x < 500; ++x) {
      CHECK(t.sin[x] <= t.degree[x]);
      CHECK((t.dts[x] == 0) == seed_set.contains(x));
      if (!seed_set.contains(x)) CHECK((t.sin[x] >= 1) == (t.dts[x] == 1));
      for (NodeId y : g.neighbors(x)) {
        if (t.dts[x] != kUnreachable && t.dts[y] != kUnreachable) {
          CHECK(std::max(t.dts[x], t.dts[y]) - std::min(t.dts[x], t.dts[y]) <= 1);
        }
      }
    }
  }
}

TEST_CASE("edge list round trip") {
  std::istringstream in("# comment\nb\ta\na\tc\nc\ta\n");
  auto g = read_edge_list(in);
  CHECK(g.node_count() == 3);
  CHECK(g.edge_count() == 2);
  std::ostringstream out;
  write_edge_list(out, g);
  std::istringstream back(out.str());
  CHECK(read_edge_list(back) == g);
}

TEST_CASE("binary snapshot round trip and header layout") {
  std::mt19937_64 gen(21);
  auto g = oracle::random_graph(50, 80, gen);
  std::ostringstream out;
  write_graph_snapshot(out, g);
  const std::string bytes = out.str();
  CHECK(bytes.substr(0, 8) == "CDRGRAPH");
  CHECK(static_cast<unsigned char>(bytes[8]) == 1);
  std::istringstream in(bytes);
  auto back = read_graph_snapshot(in);
  CHECK(back == g);
  CHECK(back.find("n0007") == g.find("n0007"));

  std::istringstream bad(bytes.substr(0, 20));
  CHECK_THROWS_AS(read_graph_snapshot(bad), DataError);
}

TEST_CASE("induced subgraph keeps order and edges among kept nodes") {
  auto g = path(4);
  auto sub = g.induced({true, true, false, true});
  CHECK(sub.node_count() == 3);
  CHECK(sub.edge_count() == 1);
  CHECK(sub.external_id(2) == "p3");
}
