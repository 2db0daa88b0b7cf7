#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cdrdemo/common.hpp"
#include "cdrdemo/records.hpp"

namespace cdrdemo {

// Undirected simple graph in CSR layout with interned external ids.
//
// Invariants: adjacency is symmetric, there are no self-loops or duplicate
// neighbors, and each neighbor list is sorted ascending. NodeIds are
// assigned in ascending lexicographic order of the external ids, so two
// graphs built from the same id set always agree on numbering.
class SocialGraph {
 public:
  SocialGraph() : offsets_{0} {}

  // Builds from an id list and an arbitrary edge list over indices into
  // `ids`. Ids must be unique; they are renumbered into sorted order.
  // Edges are symmetrized and deduplicated, self-loops dropped, weights 1.
  static SocialGraph from_edges(std::vector<std::string> ids,
                                std::vector<std::pair<NodeId, NodeId>> edges);

  std::size_t node_count() const { return ids_.size(); }
  // Number of undirected edges.
  std::size_t edge_count() const { return neighbors_.size() / 2; }

  std::size_t degree(NodeId x) const { return offsets_[x + 1] - offsets_[x]; }
  std::span<const NodeId> neighbors(NodeId x) const {
    return {neighbors_.data() + offsets_[x], degree(x)};
  }
  std::span<const double> weights(NodeId x) const {
    return {weights_.data() + offsets_[x], degree(x)};
  }

  const std::string& external_id(NodeId x) const { return ids_[x]; }
  std::optional<NodeId> find(std::string_view external) const;

  std::span<const std::uint64_t> offsets() const { return offsets_; }
  std::span<const NodeId> neighbor_array() const { return neighbors_; }
  std::span<const double> weight_array() const { return weights_; }
  std::span<const std::string> ids() const { return ids_; }

  // Induced subgraph on nodes with keep[x] true; ids re-compacted
  // preserving order.
  SocialGraph induced(const std::vector<bool>& keep) const;

  // Throws DataError describing the first violated structural invariant.
  void validate() const;

  friend bool operator==(const SocialGraph& a, const SocialGraph& b) {
    return a.offsets_ == b.offsets_ && a.neighbors_ == b.neighbors_ &&
           a.weights_ == b.weights_ && a.ids_ == b.ids_;
  }

 private:
  void rebuild_index();

  std::vector<std::uint64_t> offsets_;
  std::vector<NodeId> neighbors_;
  std::vector<double> weights_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, NodeId> index_;

  friend SocialGraph read_graph_snapshot(std::istream& in);
};

// Accumulates undirected contacts keyed by external id.
class GraphBuilder {
 public:
  void add_node(std::string_view id);
  // Adds both endpoints; a self-contact adds the node but no edge.
  void add_contact(std::string_view a, std::string_view b);
  SocialGraph build() &&;

 private:
  NodeId intern(std::string_view id);

  std::unordered_map<std::string, NodeId> provisional_;
  std::vector<std::string> names_;
  std::vector<std::pair<NodeId, NodeId>> edges_;
};

// An edge exists iff at least one call or SMS occurred in either direction.
SocialGraph build_graph(std::span<const CdrRecord> calls, std::span<const SmsRecord> sms);

struct PruneResult {
  SocialGraph graph;
  // Index into the input graph -> index in the pruned graph, or kInvalidNode.
  std::vector<NodeId> old_to_new;
  // Seeds in the pruned graph's numbering.
  std::vector<NodeId> seeds;
  std::size_t removed_by_degree = 0;
  std::size_t removed_seedless = 0;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kDefaultMaxDegree = 100;

// Removes nodes with degree > max_degree (measured on the input graph), then
// every node whose component in the degree-filtered graph holds no seed.
PruneResult prune_graph(const SocialGraph& g, std::span<const NodeId> seeds,
                        std::size_t max_degree = kDefaultMaxDegree);

// Per-node label equal to the smallest NodeId in its component.
std::vector<NodeId> connected_components(const SocialGraph& g);

inline constexpr std::uint32_t kUnreachable = std::numeric_limits<std::uint32_t>::max();

struct TopoMetrics {
  std::vector<std::uint32_t> degree;
  // Seeds In Neighborhood.
  std::vector<std::uint32_t> sin;
  // Distance To Seeds; kUnreachable when no seed is reachable.
  std::vector<std::uint32_t> dts;
};

// Multi-source BFS from all seeds for DTS.
TopoMetrics compute_topo_metrics(const SocialGraph& g, std::span<const NodeId> seeds);

// `src<TAB>dst` lines with external ids; `#` comments ignored.
SocialGraph read_edge_list(std::istream& in);
// Each undirected edge once, lower NodeId first. Isolated nodes have no
// representation in this format and are omitted.
void write_edge_list(std::ostream& out, const SocialGraph& g);

// Binary snapshot, all integers little-endian:
//   magic    8 bytes  "CDRGRAPH"
//   version  u32      1
//   flags    u32      bit 0: weight array present
//   n        u64      node count
//   m        u64      neighbor array length (2 x undirected edges)
//   offsets  (n+1) x u64
//   neighbors m x u32
//   weights  m x f64 (IEEE-754 binary64), only when flag bit 0 is set
//   ids      n x { u32 byte length, bytes }
void write_graph_snapshot(std::ostream& out, const SocialGraph& g);
SocialGraph read_graph_snapshot(std::istream& in);

}  // namespace cdrdemo
