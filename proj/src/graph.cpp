#include "dcah/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dcah {

namespace {

std::uint64_t edge_key(Index q, Index i) {
  return (static_cast<std::uint64_t>(q) << 32) | static_cast<std::uint64_t>(i);
}

}  // namespace

// =============================================================================
// BipartiteGraph
// =============================================================================

BipartiteGraph::BipartiteGraph(Index num_queries, Index num_items,
                               std::vector<Edge> edges)
    : num_queries_(num_queries), num_items_(num_items), edges_(std::move(edges)) {
  require(num_queries_ >= 0 && num_items_ >= 0, "bipartite: negative node count");
  edge_keys_.reserve(edges_.size() * 2);
  for (const auto& [q, i] : edges_) {
    require(q >= 0 && q < num_queries_,
            "bipartite: query id out of range: " + std::to_string(q));
    require(i >= 0 && i < num_items_,
            "bipartite: item id out of range: " + std::to_string(i));
    const bool inserted = edge_keys_.insert(edge_key(q, i)).second;
    require(inserted, "bipartite: duplicate edge (" + std::to_string(q) + ", " +
                          std::to_string(i) + ")");
  }
}

bool BipartiteGraph::has_edge(Index q, Index i) const {
  return edge_keys_.count(edge_key(q, i)) != 0;
}

SpMat BipartiteGraph::adjacency() const {
  std::vector<Eigen::Triplet<Real>> trips;
  trips.reserve(edges_.size() * 2);
  for (const auto& [q, i] : edges_) {
    trips.emplace_back(q, item_node(i), 1.0);
    trips.emplace_back(item_node(i), q, 1.0);
  }
  return sparse_from_triplets(num_nodes(), num_nodes(), trips);
}

std::vector<Index> BipartiteGraph::query_degrees() const {
  std::vector<Index> deg(static_cast<std::size_t>(num_queries_), 0);
  for (const auto& [q, i] : edges_) ++deg[static_cast<std::size_t>(q)];
  return deg;
}

std::vector<Index> BipartiteGraph::item_degrees() const {
  std::vector<Index> deg(static_cast<std::size_t>(num_items_), 0);
  for (const auto& [q, i] : edges_) ++deg[static_cast<std::size_t>(i)];
  return deg;
}

std::vector<Index> BipartiteGraph::node_degrees() const {
  std::vector<Index> deg(static_cast<std::size_t>(num_nodes()), 0);
  for (const auto& [q, i] : edges_) {
    ++deg[static_cast<std::size_t>(q)];
    ++deg[static_cast<std::size_t>(item_node(i))];
  }
  return deg;
}

Real BipartiteGraph::density() const {
  const Real possible = static_cast<Real>(num_queries_) * static_cast<Real>(num_items_);
  return possible > 0.0 ? static_cast<Real>(edges_.size()) / possible : 0.0;
}

// =============================================================================
// Hypergraph
// =============================================================================

Hypergraph::Hypergraph(Index num_items, std::vector<std::vector<Index>> hyperedges)
    : num_items_(num_items), hyperedges_(std::move(hyperedges)) {
  require(num_items_ >= 0, "hypergraph: negative item count");
  node_degrees_.assign(static_cast<std::size_t>(num_items_), 0);
  edge_degrees_.resize(hyperedges_.size());

  std::vector<Eigen::Triplet<Real>> trips;
  for (std::size_t e = 0; e < hyperedges_.size(); ++e) {
    auto& members = hyperedges_[e];
    std::sort(members.begin(), members.end());
    require(std::adjacent_find(members.begin(), members.end()) == members.end(),
            "hypergraph: duplicate item within hyperedge");
    require(members.size() >= 2, "hypergraph: hyperedge smaller than 2 items");
    for (Index item : members) {
      require(item >= 0 && item < num_items_,
              "hypergraph: item id out of range: " + std::to_string(item));
      ++node_degrees_[static_cast<std::size_t>(item)];
      trips.emplace_back(item, static_cast<Index>(e), 1.0);
    }
    edge_degrees_[e] = static_cast<Index>(members.size());
  }
  incidence_ = sparse_from_triplets(num_items_, num_edges(), trips);
  edge_weights_ = Vec::Ones(num_edges());
}

Hypergraph build_hypergraph(Index num_items,
                            const std::vector<std::vector<Index>>& records) {
  std::vector<std::vector<Index>> kept;
  kept.reserve(records.size());
  for (const auto& record : records) {
    std::vector<Index> members = record;
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    if (members.size() < 2) continue;  // self-information only
    kept.push_back(std::move(members));
  }
  return Hypergraph(num_items, std::move(kept));
}

// =============================================================================
// Propagation operators
// =============================================================================

SpMat sparse_from_triplets(Index rows, Index cols,
                           const std::vector<Eigen::Triplet<Real>>& triplets) {
  SpMat m(rows, cols);
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

Real spectral_radius(const SpMat& s, int iters, std::uint64_t seed) {
  require_shape(s.rows() == s.cols(), "spectral_radius: matrix must be square");
  if (s.rows() == 0) return 0.0;
  Rng rng(seed);
  std::normal_distribution<Real> normal(0.0, 1.0);
  Vec v(s.rows());
  for (Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  v.normalize();
  Real lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vec w = s * v;
    const Real n = w.norm();
    if (n < 1e-300) return 0.0;
    v = w / n;
    lambda = n;
  }
  return lambda;
}

PropagationOperator bipartite_operator(const BipartiteGraph& g) {
  const Index n = g.num_nodes();
  std::vector<Eigen::Triplet<Real>> trips;
  trips.reserve(g.edges().size() * 2 + static_cast<std::size_t>(n));
  for (const auto& [q, i] : g.edges()) {
    trips.emplace_back(q, g.item_node(i), 1.0);
    trips.emplace_back(g.item_node(i), q, 1.0);
  }
  for (Index p = 0; p < n; ++p) trips.emplace_back(p, p, 1.0);  // A + I
  SpMat a_hat = sparse_from_triplets(n, n, trips);

  Vec inv_sqrt(n);
  for (Index p = 0; p < n; ++p) {
    Real row_sum = 0.0;
    for (SpMat::InnerIterator it(a_hat, p); it; ++it) row_sum += it.value();
    inv_sqrt[p] = 1.0 / std::sqrt(row_sum);  // >= 1 from the self-loop
  }
  SpMat normalized =
      inv_sqrt.asDiagonal() * a_hat * inv_sqrt.asDiagonal();
  normalized.makeCompressed();
  return PropagationOperator{std::move(normalized), OperatorKind::bipartite};
}

PropagationOperator hypergraph_operator(const Hypergraph& h) {
  const SpMat& H = h.incidence();
  const Index n = h.num_items();
  Vec d_inv_sqrt(n);
  for (Index i = 0; i < n; ++i) {
    const Index d = h.node_degrees()[static_cast<std::size_t>(i)];
    d_inv_sqrt[i] = d > 0 ? 1.0 / std::sqrt(static_cast<Real>(d)) : 0.0;
  }
  Vec wb_inv(h.num_edges());
  for (Index e = 0; e < h.num_edges(); ++e) {
    wb_inv[e] = h.edge_weights()[e] /
                static_cast<Real>(h.edge_degrees()[static_cast<std::size_t>(e)]);
  }
  // D^{-1/2} H W B^{-1} H^T D^{-1/2}, staged through the scaled incidence.
  SpMat left = d_inv_sqrt.asDiagonal() * H;
  SpMat normalized = left * wb_inv.asDiagonal() * SpMat(left.transpose());
  normalized.makeCompressed();
  return PropagationOperator{std::move(normalized), OperatorKind::hypergraph};
}

}  // namespace dcah
