#pragma once

#include "dcah/linalg.hpp"

#include <unordered_set>
#include <utility>
#include <vector>

namespace dcah {

using Edge = std::pair<Index, Index>;  // (query, item)

/// Undirected query-item graph over a unified node-id space: queries occupy
/// ids [0, num_queries), items [num_queries, num_queries + num_items).
class BipartiteGraph {
 public:
  BipartiteGraph(Index num_queries, Index num_items, std::vector<Edge> edges);

  Index num_queries() const { return num_queries_; }
  Index num_items() const { return num_items_; }
  Index num_nodes() const { return num_queries_ + num_items_; }
  const std::vector<Edge>& edges() const { return edges_; }

  bool has_edge(Index q, Index i) const;
  Index item_node(Index item) const { return num_queries_ + item; }

  /// Symmetric N x N adjacency with nonzeros only in the query-item blocks.
  SpMat adjacency() const;

  std::vector<Index> query_degrees() const;
  std::vector<Index> item_degrees() const;
  std::vector<Index> node_degrees() const;  // unified id space

  Real density() const;

 private:
  Index num_queries_ = 0;
  Index num_items_ = 0;
  std::vector<Edge> edges_;
  std::unordered_set<std::uint64_t> edge_keys_;
};

/// Item-session incidence structure. Hyperedges are deduplicated within a
/// record and dropped when fewer than two distinct items remain; identical
/// records stay distinct hyperedges with unit weight.
class Hypergraph {
 public:
  Hypergraph() = default;  // empty hypergraph
  Hypergraph(Index num_items, std::vector<std::vector<Index>> hyperedges);

  Index num_items() const { return num_items_; }
  Index num_edges() const { return static_cast<Index>(hyperedges_.size()); }
  const std::vector<std::vector<Index>>& hyperedges() const { return hyperedges_; }

  const SpMat& incidence() const { return incidence_; }       // N_I x M
  const std::vector<Index>& node_degrees() const { return node_degrees_; }  // D
  const std::vector<Index>& edge_degrees() const { return edge_degrees_; }  // B
  const Vec& edge_weights() const { return edge_weights_; }   // W, all ones

 private:
  Index num_items_ = 0;
  std::vector<std::vector<Index>> hyperedges_;
  SpMat incidence_;
  std::vector<Index> node_degrees_;
  std::vector<Index> edge_degrees_;
  Vec edge_weights_;
};

enum class OperatorKind { bipartite, hypergraph };

/// Precomputed symmetric propagation matrix used by the convolution layers.
struct PropagationOperator {
  SpMat normalized;
  OperatorKind kind;
};

/// One hyperedge per input record: items deduplicated within a record,
/// records reduced below two items dropped.
Hypergraph build_hypergraph(Index num_items,
                            const std::vector<std::vector<Index>>& records);

/// Adds self-loops and applies two-sided degree normalization to the
/// bipartite adjacency. Isolated nodes keep their unit self-loop.
PropagationOperator bipartite_operator(const BipartiteGraph& g);

/// Two-stage node-edge-node operator with unit hyperedge weights. Items in
/// no hyperedge map to all-zero rows and columns.
PropagationOperator hypergraph_operator(const Hypergraph& h);

}  // namespace dcah
