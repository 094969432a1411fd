#include "dcah/graph.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace dcah;

namespace {

// Dense reference for the self-loop + symmetric normalization construction.
Mat bipartite_oracle(const BipartiteGraph& g) {
  const Index n = g.num_nodes();
  Mat a_hat = Mat::Identity(n, n);
  for (const auto& [q, i] : g.edges()) {
    a_hat(q, g.item_node(i)) = 1.0;
    a_hat(g.item_node(i), q) = 1.0;
  }
  Mat d_inv_sqrt = Mat::Zero(n, n);
  for (Index p = 0; p < n; ++p) d_inv_sqrt(p, p) = 1.0 / std::sqrt(a_hat.row(p).sum());
  return oracle::matmul(oracle::matmul(d_inv_sqrt, a_hat), d_inv_sqrt);
}

// Dense reference for the node-edge-node normalized product.
Mat hypergraph_oracle(const Hypergraph& h) {
  const Index n = h.num_items();
  const Index m = h.num_edges();
  Mat H = Mat::Zero(n, m);
  for (Index e = 0; e < m; ++e) {
    for (Index item : h.hyperedges()[static_cast<std::size_t>(e)]) H(item, e) = 1.0;
  }
  Mat d_inv_sqrt = Mat::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const Real d = H.row(i).sum();
    d_inv_sqrt(i, i) = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  Mat wb_inv = Mat::Zero(m, m);
  for (Index e = 0; e < m; ++e) wb_inv(e, e) = 1.0 / H.col(e).sum();
  Mat left = oracle::matmul(d_inv_sqrt, H);
  return oracle::matmul(oracle::matmul(left, wb_inv), Mat(left.transpose()));
}

BipartiteGraph random_bipartite(Index nq, Index ni, Real p, Rng& rng) {
  std::uniform_real_distribution<Real> unit(0.0, 1.0);
  std::vector<Edge> edges;
  for (Index q = 0; q < nq; ++q) {
    for (Index i = 0; i < ni; ++i) {
      if (unit(rng) < p) edges.emplace_back(q, i);
    }
  }
  return BipartiteGraph(nq, ni, std::move(edges));
}

std::vector<std::vector<Index>> random_records(Index ni, Index count, Rng& rng) {
  std::uniform_int_distribution<Index> size(2, 6);
  std::uniform_int_distribution<Index> item(0, ni - 1);
  std::vector<std::vector<Index>> records;
  for (Index r = 0; r < count; ++r) {
    std::vector<Index> rec;
    const Index s = size(rng);
    for (Index k = 0; k < s; ++k) rec.push_back(item(rng));
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace

TEST_CASE("bipartite graph validates edges and exposes degrees") {
  BipartiteGraph g(2, 3, {{0, 0}, {0, 2}, {1, 0}});
  CHECK(g.num_nodes() == 5);
  CHECK(g.has_edge(0, 2));
  CHECK(!g.has_edge(1, 2));
  CHECK(g.query_degrees() == std::vector<Index>{2, 1});
  CHECK(g.item_degrees() == std::vector<Index>{2, 0, 1});
  CHECK(g.node_degrees() == std::vector<Index>{2, 1, 2, 0, 1});

  CHECK_THROWS_AS(BipartiteGraph(2, 3, {{0, 0}, {0, 0}}), InputError);
  CHECK_THROWS_AS(BipartiteGraph(2, 3, {{0, 3}}), InputError);
  CHECK_THROWS_AS(BipartiteGraph(2, 3, {{2, 0}}), InputError);
}

TEST_CASE("adjacency is symmetric and bipartite-blocked") {
  Rng rng(3);
  BipartiteGraph g = random_bipartite(8, 11, 0.3, rng);
  Mat a = Mat(g.adjacency());
  CHECK((a - a.transpose()).cwiseAbs().maxCoeff() == 0.0);
  // query-query and item-item blocks empty
  CHECK(a.topLeftCorner(8, 8).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.bottomRightCorner(11, 11).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("build_hypergraph dedups within records and keeps duplicates across") {
  SUBCASE("single hyperedge") {
    Hypergraph h = build_hypergraph(3, {{0, 1, 2}});
    CHECK(h.num_edges() == 1);
    CHECK(h.edge_degrees() == std::vector<Index>{3});
    CHECK(h.node_degrees() == std::vector<Index>{1, 1, 1});
    Mat inc = Mat(h.incidence());
    CHECK(inc.rows() == 3);
    CHECK(inc.cols() == 1);
    CHECK(inc.minCoeff() == 1.0);
  }
  SUBCASE("identical records stay distinct") {
    Hypergraph h = build_hypergraph(2, {{0, 1}, {0, 1}});
    CHECK(h.num_edges() == 2);
    CHECK(h.node_degrees() == std::vector<Index>{2, 2});
    CHECK(h.edge_degrees() == std::vector<Index>{2, 2});
  }
  SUBCASE("within-record dedup and small-record drop") {
    Hypergraph h = build_hypergraph(7, {{5, 5, 6}, {3}, {2, 2}});
    CHECK(h.num_edges() == 1);
    CHECK(h.hyperedges()[0] == std::vector<Index>{5, 6});
    CHECK(h.edge_degrees() == std::vector<Index>{2});
  }
  SUBCASE("empty record list is a valid empty hypergraph") {
    Hypergraph h = build_hypergraph(4, {});
    CHECK(h.num_edges() == 0);
    CHECK(h.node_degrees() == std::vector<Index>(4, 0));
  }
  SUBCASE("out-of-range item") {
    CHECK_THROWS_AS(build_hypergraph(2, {{0, 2}}), InputError);
  }
}

TEST_CASE("bipartite operator on hand-checked instances") {
  SUBCASE("single edge: uniform 2x2") {
    BipartiteGraph g(1, 1, {{0, 0}});
    Mat op = Mat(bipartite_operator(g).normalized);
    Mat want(2, 2);
    want << 0.5, 0.5, 0.5, 0.5;
    CHECK((op - want).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("no edges: identity") {
    BipartiteGraph g(2, 2, {});
    Mat op = Mat(bipartite_operator(g).normalized);
    CHECK((op - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("star q0-{i0,i1}") {
    BipartiteGraph g(1, 2, {{0, 0}, {0, 1}});
    Mat op = Mat(bipartite_operator(g).normalized);
    CHECK(op(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(op(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(op(2, 2) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(op(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-12));
    CHECK((op - bipartite_oracle(g)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("hypergraph operator on hand-checked instances") {
  SUBCASE("one hyperedge {0,1}") {
    Hypergraph h = build_hypergraph(2, {{0, 1}});
    Mat op = Mat(hypergraph_operator(h).normalized);
    Mat want(2, 2);
    want << 0.5, 0.5, 0.5, 0.5;
    CHECK((op - want).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("isolated item keeps zero row and column") {
    Hypergraph h = build_hypergraph(3, {{0, 1}});
    Mat op = Mat(hypergraph_operator(h).normalized);
    CHECK(op.row(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK(op.col(2).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("two overlapping hyperedges match the dense oracle") {
    Hypergraph h = build_hypergraph(3, {{0, 1}, {1, 2}});
    Mat op = Mat(hypergraph_operator(h).normalized);
    CHECK((op - hypergraph_oracle(h)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("operators equal dense oracles on random graphs up to N=200") {
  Rng rng(17);
  std::uniform_int_distribution<Index> nq_dist(1, 80);
  std::uniform_int_distribution<Index> ni_dist(2, 120);
  std::uniform_real_distribution<Real> p_dist(0.0, 0.2);
  for (int trial = 0; trial < 30; ++trial) {
    const Index nq = nq_dist(rng), ni = ni_dist(rng);
    BipartiteGraph g = random_bipartite(nq, ni, p_dist(rng), rng);
    Mat bop = Mat(bipartite_operator(g).normalized);
    CHECK((bop - bipartite_oracle(g)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((bop - bop.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(bop.minCoeff() >= 0.0);

    Hypergraph h = build_hypergraph(ni, random_records(ni, nq, rng));
    Mat hop = Mat(hypergraph_operator(h).normalized);
    CHECK((hop - hypergraph_oracle(h)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((hop - hop.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(hop.minCoeff() >= 0.0);
  }
}

TEST_CASE("hypergraph operator spectral radius stays at or below one") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    Hypergraph h = build_hypergraph(40, random_records(40, 25, rng));
    const SpMat& op = hypergraph_operator(h).normalized;
    if (h.num_edges() > 0) {
      CHECK(spectral_radius(op) <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("hypergraph rebuild from its own hyperedge list is idempotent") {
  Rng rng(29);
  Hypergraph h = build_hypergraph(30, random_records(30, 20, rng));
  Hypergraph h2 = build_hypergraph(30, h.hyperedges());
  CHECK(h2.hyperedges() == h.hyperedges());
  CHECK(h2.node_degrees() == h.node_degrees());
  CHECK(h2.edge_degrees() == h.edge_degrees());
  CHECK((Mat(h2.incidence()) - Mat(h.incidence())).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("degree vectors match per-edge counting oracle") {
  Rng rng(31);
  BipartiteGraph g = random_bipartite(20, 30, 0.1, rng);
  std::vector<Index> qd(20, 0), id(30, 0);
  for (const auto& [q, i] : g.edges()) {
    ++qd[static_cast<std::size_t>(q)];
    ++id[static_cast<std::size_t>(i)];
  }
  CHECK(g.query_degrees() == qd);
  CHECK(g.item_degrees() == id);

  Hypergraph h = build_hypergraph(30, random_records(30, 15, rng));
  std::vector<Index> hd(30, 0);
  for (const auto& members : h.hyperedges()) {
    for (Index item : members) ++hd[static_cast<std::size_t>(item)];
  }
  CHECK(h.node_degrees() == hd);
}
