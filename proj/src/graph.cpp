#include "cdrdemo/graph.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <deque>
#include <istream>
#include <numeric>
#include <ostream>

#include "cdrdemo/io.hpp"

namespace cdrdemo {

SocialGraph SocialGraph::from_edges(std::vector<std::string> ids,
                                    std::vector<std::pair<NodeId, NodeId>> edges) {
  const std::size_t n = ids.size();
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  std::sort(order.begin(), order.end(),
            [&](NodeId a, NodeId b) { return ids[a] < ids[b]; });
  std::vector<NodeId> rank(n);
  for (NodeId i = 0; i < n; ++i) rank[order[i]] = i;

  SocialGraph g;
  g.ids_.reserve(n);
  for (NodeId i = 0; i < n; ++i) g.ids_.push_back(std::move(ids[order[i]]));
  for (std::size_t i = 1; i < n; ++i) {
    if (g.ids_[i] == g.ids_[i - 1]) throw DataError("duplicate node id '" + g.ids_[i] + "'");
  }

  std::vector<std::pair<NodeId, NodeId>> directed;
  directed.reserve(2 * edges.size());
  for (auto [a, b] : edges) {
    if (a >= n || b >= n) throw DataError("edge endpoint out of range");
    if (a == b) continue;
    directed.emplace_back(rank[a], rank[b]);
    directed.emplace_back(rank[b], rank[a]);
  }
  edges.clear();
  edges.shrink_to_fit();
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  g.offsets_.assign(n + 1, 0);
  for (auto [a, b] : directed) ++g.offsets_[a + 1];
  for (std::size_t i = 0; i < n; ++i) g.offsets_[i + 1] += g.offsets_[i];
  g.neighbors_.reserve(directed.size());
  for (auto [a, b] : directed) g.neighbors_.push_back(b);
  g.weights_.assign(g.neighbors_.size(), 1.0);
  g.rebuild_index();
  return g;
}

void SocialGraph::rebuild_index() {
  index_.clear();
  index_.reserve(ids_.size());
  for (NodeId i = 0; i < ids_.size(); ++i) index_.emplace(ids_[i], i);
}

std::optional<NodeId> SocialGraph::find(std::string_view external) const {
  const auto it = index_.find(std::string(external));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SocialGraph SocialGraph::induced(const std::vector<bool>& keep) const {
  const std::size_t n = node_count();
  std::vector<NodeId> remap(n, kInvalidNode);
  SocialGraph out;
  for (NodeId x = 0; x < n; ++x) {
    if (keep[x]) {
      remap[x] = static_cast<NodeId>(out.ids_.size());
      out.ids_.push_back(ids_[x]);
    }
  }
  out.offsets_.assign(1, 0);
  out.offsets_.reserve(out.ids_.size() + 1);
  for (NodeId x = 0; x < n; ++x) {
    if (!keep[x]) continue;
    const auto nbrs = neighbors(x);
    const auto w = weights(x);
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      if (remap[nbrs[i]] == kInvalidNode) continue;
      out.neighbors_.push_back(remap[nbrs[i]]);
      out.weights_.push_back(w[i]);
    }
    out.offsets_.push_back(out.neighbors_.size());
  }
  out.rebuild_index();
  return out;
}

void SocialGraph::validate() const {
  const std::size_t n = node_count();
  if (offsets_.size() != n + 1 || offsets_.front() != 0 || offsets_.back() != neighbors_.size()) {
    throw DataError("offsets inconsistent with neighbor array");
  }
  if (weights_.size() != neighbors_.size()) throw DataError("weight array size mismatch");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(ids_[i - 1] < ids_[i])) throw DataError("ids not strictly sorted");
  }
  for (NodeId x = 0; x < n; ++x) {
    if (offsets_[x] > offsets_[x + 1]) throw DataError("offsets decreasing");
    const auto nbrs = neighbors(x);
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      const NodeId y = nbrs[i];
      if (y >= n) throw DataError("neighbor out of range");
      if (y == x) throw DataError("self-loop at " + ids_[x]);
      if (i > 0 && nbrs[i - 1] >= y) throw DataError("neighbor list not strictly sorted");
      const auto back = neighbors(y);
      if (!std::binary_search(back.begin(), back.end(), x)) {
        throw DataError("asymmetric edge " + ids_[x] + " -> " + ids_[y]);
      }
    }
  }
}

NodeId GraphBuilder::intern(std::string_view id) {
  auto [it, inserted] =
      provisional_.try_emplace(std::string(id), static_cast<NodeId>(names_.size()));
  if (inserted) names_.emplace_back(id);
  return it->second;
}

void GraphBuilder::add_node(std::string_view id) { intern(id); }

void GraphBuilder::add_contact(std::string_view a, std::string_view b) {
  const NodeId x = intern(a);
  const NodeId y = intern(b);
  if (x != y) edges_.emplace_back(x, y);
}

SocialGraph GraphBuilder::build() && {
  provisional_.clear();
  return SocialGraph::from_edges(std::move(names_), std::move(edges_));
}

SocialGraph build_graph(std::span<const CdrRecord> calls, std::span<const SmsRecord> sms) {
  GraphBuilder b;
  for (const auto& r : calls) b.add_contact(r.caller, r.callee);
  for (const auto& r : sms) b.add_contact(r.sender, r.receiver);
  return std::move(b).build();
}

std::vector<NodeId> connected_components(const SocialGraph& g) {
  const std::size_t n = g.node_count();
  std::vector<NodeId> label(n, kInvalidNode);
  std::vector<NodeId> queue;
  for (NodeId root = 0; root < n; ++root) {
    if (label[root] != kInvalidNode) continue;
    label[root] = root;
    queue.assign(1, root);
    for (std::size_t head = 0; head < queue.size(); ++head) {
      for (NodeId y : g.neighbors(queue[head])) {
        if (label[y] == kInvalidNode) {
          label[y] = root;
          queue.push_back(y);
        }
      }
    }
  }
  return label;
}

PruneResult prune_graph(const SocialGraph& g, std::span<const NodeId> seeds,
                        std::size_t max_degree) {
  if (max_degree < 1) throw UsageError("max_degree must be >= 1");
  const std::size_t n = g.node_count();
  PruneResult result;

  std::vector<bool> keep(n);
  for (NodeId x = 0; x < n; ++x) keep[x] = g.degree(x) <= max_degree;
  result.removed_by_degree =
      n - static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));

  std::vector<NodeId> live_seeds;
  for (NodeId s : seeds) {
    if (s >= n) {
      result.warnings.push_back("seed " + std::to_string(s) + " not present in graph");
    } else if (!keep[s]) {
      result.warnings.push_back("seed " + g.external_id(s) + " removed by degree filter (degree " +
                                std::to_string(g.degree(s)) + ")");
    } else {
      live_seeds.push_back(s);
    }
  }

  const SocialGraph filtered = g.induced(keep);
  std::vector<NodeId> filtered_id(n, kInvalidNode);
  {
    NodeId next = 0;
    for (NodeId x = 0; x < n; ++x) {
      if (keep[x]) filtered_id[x] = next++;
    }
  }
  const auto comp = connected_components(filtered);
  std::vector<bool> seeded(filtered.node_count(), false);
  for (NodeId s : live_seeds) seeded[comp[filtered_id[s]]] = true;

  std::vector<bool> keep_final(n, false);
  for (NodeId x = 0; x < n; ++x) {
    if (keep[x] && seeded[comp[filtered_id[x]]]) {
      keep_final[x] = true;
    } else if (keep[x]) {
      ++result.removed_seedless;
    }
  }

  result.graph = g.induced(keep_final);
  result.old_to_new.assign(n, kInvalidNode);
  NodeId next = 0;
  for (NodeId x = 0; x < n; ++x) {
    if (keep_final[x]) result.old_to_new[x] = next++;
  }
  for (NodeId s : live_seeds) result.seeds.push_back(result.old_to_new[s]);
  std::sort(result.seeds.begin(), result.seeds.end());
  result.seeds.erase(std::unique(result.seeds.begin(), result.seeds.end()), result.seeds.end());
  return result;
}

TopoMetrics compute_topo_metrics(const SocialGraph& g, std::span<const NodeId> seeds) {
  const std::size_t n = g.node_count();
  TopoMetrics m;
  m.degree.resize(n);
  m.sin.assign(n, 0);
  m.dts.assign(n, kUnreachable);
  std::vector<bool> is_seed(n, false);
  std::vector<NodeId> queue;
  for (NodeId s : seeds) {
    if (s >= n) throw DataError("seed " + std::to_string(s) + " out of range");
    if (!is_seed[s]) {
      is_seed[s] = true;
      m.dts[s] = 0;
      queue.push_back(s);
    }
  }
  for (NodeId x = 0; x < n; ++x) {
    m.degree[x] = static_cast<std::uint32_t>(g.degree(x));
    for (NodeId y : g.neighbors(x)) m.sin[x] += is_seed[y] ? 1u : 0u;
  }
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const NodeId x = queue[head];
    for (NodeId y : g.neighbors(x)) {
      if (m.dts[y] == kUnreachable) {
        m.dts[y] = m.dts[x] + 1;
        queue.push_back(y);
      }
    }
  }
  return m;
}

SocialGraph read_edge_list(std::istream& in) {
  GraphBuilder b;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = io::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto fields = io::split_fields(view, '\t');
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw ParseError(lineno, "expected src<TAB>dst");
    }
    b.add_contact(io::trim(fields[0]), io::trim(fields[1]));
  }
  return std::move(b).build();
}

void write_edge_list(std::ostream& out, const SocialGraph& g) {
  for (NodeId x = 0; x < g.node_count(); ++x) {
    for (NodeId y : g.neighbors(x)) {
      if (x < y) out << g.external_id(x) << '\t' << g.external_id(y) << '\n';
    }
  }
}

namespace {

constexpr char kMagic[8] = {'C', 'D', 'R', 'G', 'R', 'A', 'P', 'H'};
constexpr std::uint32_t kSnapshotVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "snapshot I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw DataError("truncated graph snapshot");
  }
  return v;
}

template <typename T>
void put_array(std::ostream& out, std::span<const T> values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size_bytes()));
}

template <typename T>
void get_array(std::istream& in, std::vector<T>& values, std::size_t count) {
  values.resize(count);
  if (!in.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(count * sizeof(T)))) {
    throw DataError("truncated graph snapshot");
  }
}

}  // namespace

void write_graph_snapshot(std::ostream& out, const SocialGraph& g) {
  const auto w = g.weight_array();
  const bool weighted = std::any_of(w.begin(), w.end(), [](double v) { return v != 1.0; });
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kSnapshotVersion);
  put<std::uint32_t>(out, weighted ? 1u : 0u);
  put<std::uint64_t>(out, g.node_count());
  put<std::uint64_t>(out, g.neighbor_array().size());
  put_array(out, g.offsets());
  put_array(out, g.neighbor_array());
  if (weighted) put_array(out, w);
  for (const auto& id : g.ids()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
}

SocialGraph read_graph_snapshot(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a graph snapshot");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kSnapshotVersion) {
    throw DataError("unsupported snapshot version " + std::to_string(version));
  }
  const auto flags = get<std::uint32_t>(in);
  const auto n = get<std::uint64_t>(in);
  const auto m = get<std::uint64_t>(in);
  SocialGraph g;
  get_array(in, g.offsets_, n + 1);
  get_array(in, g.neighbors_, m);
  if (flags & 1u) {
    get_array(in, g.weights_, m);
  } else {
    g.weights_.assign(m, 1.0);
  }
  g.ids_.resize(n);
  for (auto& id : g.ids_) {
    const auto len = get<std::uint32_t>(in);
    id.resize(len);
    if (!in.read(id.data(), len)) throw DataError("truncated graph snapshot");
  }
  g.validate();
  g.rebuild_index();
  return g;
}

}  // namespace cdrdemo
