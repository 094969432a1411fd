#include "dcah/eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

namespace dcah {

using json = nlohmann::ordered_json;

namespace {

std::uint64_t pair_key(Index q, Index i) {
  return (static_cast<std::uint64_t>(q) << 32) | static_cast<std::uint64_t>(i);
}

// Positions in degree-descending order, ties broken by node id.
std::vector<Index> rank_positions(const std::vector<Index>& degrees) {
  std::vector<Index> order(degrees.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (degrees[static_cast<std::size_t>(a)] != degrees[static_cast<std::size_t>(b)]) {
      return degrees[static_cast<std::size_t>(a)] > degrees[static_cast<std::size_t>(b)];
    }
    return a < b;
  });
  std::vector<Index> pos(degrees.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    pos[static_cast<std::size_t>(order[r])] = static_cast<Index>(r);
  }
  return pos;
}

}  // namespace

const char* part_name(int part) {
  switch (part) {
    case 0: return "head";
    case 1: return "tail1";
    case 2: return "tail2";
    case 3: return "isolation";
    default: return "excluded";
  }
}

std::vector<Edge> EvalProtocol::all_train_edges() const {
  std::vector<Edge> out;
  for (const auto& part : parts) {
    out.insert(out.end(), part.train.begin(), part.train.end());
  }
  return out;
}

EvalProtocol split_four_parts(const BipartiteGraph& g, const Hypergraph& h, Rng& rng) {
  require(g.num_items() == h.num_items(),
          "split: bipartite and hypergraph item spaces differ");
  const Index n_items = g.num_items();
  const auto pos_b = rank_positions(g.item_degrees());
  std::vector<Index> hyper_deg(h.node_degrees().begin(), h.node_degrees().end());
  const auto pos_h = rank_positions(hyper_deg);

  const Index k20 = n_items / 5;
  const Index k60 = (n_items * 3) / 5;

  EvalProtocol protocol;
  protocol.item_part.assign(static_cast<std::size_t>(n_items), kExcluded);
  for (Index i = 0; i < n_items; ++i) {
    const Index pb = pos_b[static_cast<std::size_t>(i)];
    const Index ph = pos_h[static_cast<std::size_t>(i)];
    int part = kExcluded;
    if (pb < k20 && ph < k20) {
      part = static_cast<int>(Part::head);
    } else if (pb < k20 && ph >= k20 && ph < k60) {
      part = static_cast<int>(Part::tail1);
    } else if (ph < k20 && pb >= k20 && pb < k60) {
      part = static_cast<int>(Part::tail2);
    } else if (pb >= k60 && ph >= k60) {
      part = static_cast<int>(Part::isolation);
    }
    protocol.item_part[static_cast<std::size_t>(i)] = part;
  }

  std::array<std::vector<Edge>, kNumParts> part_edges;
  for (const Edge& e : g.edges()) {
    const int part = protocol.item_part[static_cast<std::size_t>(e.second)];
    if (part == kExcluded) {
      protocol.excluded_edges.push_back(e);
    } else {
      part_edges[static_cast<std::size_t>(part)].push_back(e);
    }
  }

  for (int p = 0; p < kNumParts; ++p) {
    auto& edges = part_edges[static_cast<std::size_t>(p)];
    std::shuffle(edges.begin(), edges.end(), rng);
    const auto n = static_cast<Index>(edges.size());
    const Index n_test = static_cast<Index>(std::llround(0.2 * static_cast<Real>(n)));
    const Index n_val = static_cast<Index>(std::llround(0.1 * static_cast<Real>(n)));
    auto& split = protocol.parts[static_cast<std::size_t>(p)];
    split.test.assign(edges.begin(), edges.begin() + n_test);
    split.val.assign(edges.begin() + n_test, edges.begin() + n_test + n_val);
    split.train.assign(edges.begin() + n_test + n_val, edges.end());
  }

  // Balance: every part contributes the same number of test edges. Surplus
  // test edges are discarded, never moved into train or val.
  std::size_t m = std::numeric_limits<std::size_t>::max();
  for (const auto& part : protocol.parts) m = std::min(m, part.test.size());
  for (auto& part : protocol.parts) {
    while (part.test.size() > m) {
      protocol.dropped_test_edges.push_back(part.test.back());
      part.test.pop_back();
    }
  }
  return protocol;
}

std::vector<std::vector<Edge>> sample_negatives(const BipartiteGraph& g,
                                                const std::vector<Edge>& edges,
                                                Rng& rng, PairSet& emitted,
                                                int per_side) {
  std::uniform_int_distribution<Index> rand_query(0, g.num_queries() - 1);
  std::uniform_int_distribution<Index> rand_item(0, g.num_items() - 1);
  const long max_attempts = 1000L * per_side + 10000L;

  std::vector<std::vector<Edge>> out;
  out.reserve(edges.size());
  for (const auto& [q, i] : edges) {
    std::vector<Edge> negs;
    negs.reserve(static_cast<std::size_t>(2 * per_side));
    for (int side = 0; side < 2; ++side) {
      int found = 0;
      long attempts = 0;
      while (found < per_side) {
        if (++attempts > max_attempts) {
          throw ProtocolError(
              "negative sampling exhausted for edge (" + std::to_string(q) + ", " +
              std::to_string(i) + "), side " + (side == 0 ? std::string("source")
                                                          : std::string("destination")) +
              ": found " + std::to_string(found) + " of " + std::to_string(per_side) +
              "; graph too dense");
        }
        const Index nq = side == 0 ? rand_query(rng) : q;
        const Index ni = side == 0 ? i : rand_item(rng);
        if (nq == q && ni == i) continue;
        if (g.has_edge(nq, ni)) continue;
        if (!emitted.insert(pair_key(nq, ni)).second) continue;
        negs.emplace_back(nq, ni);
        ++found;
      }
    }
    out.push_back(std::move(negs));
  }
  return out;
}

void attach_negatives(EvalProtocol& protocol, const BipartiteGraph& g, Rng& rng) {
  PairSet emitted;
  for (int p = 0; p < kNumParts; ++p) {
    auto& split = protocol.parts[static_cast<std::size_t>(p)];
    protocol.test_negatives[static_cast<std::size_t>(p)] =
        sample_negatives(g, split.test, rng, emitted);
    protocol.val_negatives[static_cast<std::size_t>(p)] =
        sample_negatives(g, split.val, rng, emitted);
  }
}

// =============================================================================
// Protocol io
// =============================================================================

namespace {

json edges_to_json(const std::vector<Edge>& edges) {
  json arr = json::array();
  for (const auto& [q, i] : edges) arr.push_back({q, i});
  return arr;
}

std::vector<Edge> edges_from_json(const json& arr) {
  std::vector<Edge> out;
  out.reserve(arr.size());
  for (const auto& e : arr) out.emplace_back(e.at(0).get<Index>(), e.at(1).get<Index>());
  return out;
}

}  // namespace

void save_protocol(const EvalProtocol& protocol, const std::string& path) {
  json j;
  j["format"] = "dcah-split-v1";
  j["item_part"] = protocol.item_part;
  for (int p = 0; p < kNumParts; ++p) {
    const auto& split = protocol.parts[static_cast<std::size_t>(p)];
    json part;
    part["train"] = edges_to_json(split.train);
    part["val"] = edges_to_json(split.val);
    part["test"] = edges_to_json(split.test);
    json test_negs = json::array();
    for (const auto& negs : protocol.test_negatives[static_cast<std::size_t>(p)]) {
      test_negs.push_back(edges_to_json(negs));
    }
    part["test_negatives"] = std::move(test_negs);
    json val_negs = json::array();
    for (const auto& negs : protocol.val_negatives[static_cast<std::size_t>(p)]) {
      val_negs.push_back(edges_to_json(negs));
    }
    part["val_negatives"] = std::move(val_negs);
    j["parts"][part_name(p)] = std::move(part);
  }
  j["excluded_edges"] = edges_to_json(protocol.excluded_edges);
  j["dropped_test_edges"] = edges_to_json(protocol.dropped_test_edges);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("split: cannot open for writing: " + path);
  out << j.dump() << '\n';
}

EvalProtocol load_protocol(const std::string& path, const BipartiteGraph& g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("split: cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError("split: parse failure: " + std::string(e.what()));
  }
  if (j.value("format", "") != "dcah-split-v1") throw InputError("split: unknown format");

  EvalProtocol protocol;
  protocol.item_part = j.at("item_part").get<std::vector<int>>();
  if (static_cast<Index>(protocol.item_part.size()) != g.num_items()) {
    throw InputError("split: item count does not match graph");
  }
  for (int p = 0; p < kNumParts; ++p) {
    const json& part = j.at("parts").at(part_name(p));
    auto& split = protocol.parts[static_cast<std::size_t>(p)];
    split.train = edges_from_json(part.at("train"));
    split.val = edges_from_json(part.at("val"));
    split.test = edges_from_json(part.at("test"));
    for (const auto& negs : part.at("test_negatives")) {
      protocol.test_negatives[static_cast<std::size_t>(p)].push_back(edges_from_json(negs));
    }
    for (const auto& negs : part.at("val_negatives")) {
      protocol.val_negatives[static_cast<std::size_t>(p)].push_back(edges_from_json(negs));
    }
  }
  protocol.excluded_edges = edges_from_json(j.at("excluded_edges"));
  protocol.dropped_test_edges = edges_from_json(j.at("dropped_test_edges"));
  return protocol;
}

// =============================================================================
// Ranking metrics
// =============================================================================

Real mrr(const std::vector<RankedScores>& scored) {
  if (scored.empty()) throw ProtocolError("mrr: empty test set");
  Real total = 0.0;
  for (const auto& s : scored) {
    Index greater = 0;
    Index equal = 0;
    for (Real n : s.negatives) {
      if (n > s.positive) ++greater;
      else if (n == s.positive) ++equal;
    }
    const Real rank = 1.0 + static_cast<Real>(greater) + static_cast<Real>(equal) / 2.0;
    total += 1.0 / rank;
  }
  return total / static_cast<Real>(scored.size());
}

Real recall_at_n(const PooledScores& pooled) {
  if (pooled.positives.empty()) throw ProtocolError("recall: no positives in part");
  const auto n = static_cast<Real>(pooled.positives.size());

  struct Entry {
    Real score;
    bool positive;
  };
  std::vector<Entry> all;
  all.reserve(pooled.positives.size() + pooled.negatives.size());
  for (Real s : pooled.positives) all.push_back({s, true});
  for (Real s : pooled.negatives) all.push_back({s, false});
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score > b.score; });

  // Walk tie groups; a group straddling the top-N boundary counts fractionally.
  Real hits = 0.0;
  std::size_t g0 = 0;
  while (g0 < all.size()) {
    std::size_t g1 = g0;
    Index pos_in_group = 0;
    while (g1 < all.size() && all[g1].score == all[g0].score) {
      if (all[g1].positive) ++pos_in_group;
      ++g1;
    }
    const Real group_lo = static_cast<Real>(g0);
    const Real group_size = static_cast<Real>(g1 - g0);
    const Real in_top = std::clamp(n - group_lo, 0.0, group_size);
    hits += static_cast<Real>(pos_in_group) * in_top / group_size;
    g0 = g1;
  }
  return hits / n;
}

// =============================================================================
// Graph diagnostics
// =============================================================================

std::optional<Real> degree_assortativity(const BipartiteGraph& g) {
  if (g.edges().size() < 2) return std::nullopt;
  const auto deg = g.node_degrees();
  // Both orientations of every edge; X and Y then share mean and variance.
  Real mean = 0.0;
  for (const auto& [q, i] : g.edges()) {
    mean += static_cast<Real>(deg[static_cast<std::size_t>(q)]);
    mean += static_cast<Real>(deg[static_cast<std::size_t>(g.item_node(i))]);
  }
  const Real count = 2.0 * static_cast<Real>(g.edges().size());
  mean /= count;

  Real cov = 0.0;
  Real var = 0.0;
  for (const auto& [q, i] : g.edges()) {
    const Real x = static_cast<Real>(deg[static_cast<std::size_t>(q)]) - mean;
    const Real y = static_cast<Real>(deg[static_cast<std::size_t>(g.item_node(i))]) - mean;
    cov += 2.0 * x * y;
    var += x * x + y * y;
  }
  if (var <= 0.0) return std::nullopt;
  return cov / var;
}

RelativeDegreeResult relative_degree(const BipartiteGraph& g) {
  const auto deg = g.node_degrees();
  const Index n = g.num_nodes();
  std::vector<Real> neighbor_deg_sum(static_cast<std::size_t>(n), 0.0);
  for (const auto& [q, i] : g.edges()) {
    const Index in = g.item_node(i);
    neighbor_deg_sum[static_cast<std::size_t>(q)] += static_cast<Real>(deg[static_cast<std::size_t>(in)]);
    neighbor_deg_sum[static_cast<std::size_t>(in)] += static_cast<Real>(deg[static_cast<std::size_t>(q)]);
  }
  RelativeDegreeResult res;
  res.per_node.assign(static_cast<std::size_t>(n),
                      std::numeric_limits<Real>::quiet_NaN());
  Real total = 0.0;
  Index counted = 0;
  for (Index v = 0; v < n; ++v) {
    const Real d = static_cast<Real>(deg[static_cast<std::size_t>(v)]);
    if (d <= 0.0) continue;  // isolated nodes skipped
    const Real mean_neighbor = neighbor_deg_sum[static_cast<std::size_t>(v)] / d;
    res.per_node[static_cast<std::size_t>(v)] = d / mean_neighbor;
    total += d / mean_neighbor;
    ++counted;
  }
  res.mean = counted > 0 ? total / static_cast<Real>(counted)
                         : std::numeric_limits<Real>::quiet_NaN();
  return res;
}

MadResult mad(const Mat& embeddings, Rng& rng, Index exact_limit,
              std::size_t sample_pairs) {
  std::vector<Index> valid;
  valid.reserve(static_cast<std::size_t>(embeddings.rows()));
  Vec norms(embeddings.rows());
  for (Index i = 0; i < embeddings.rows(); ++i) {
    norms[i] = embeddings.row(i).norm();
    if (norms[i] > 1e-12) valid.push_back(i);
  }
  const Index excluded = embeddings.rows() - static_cast<Index>(valid.size());
  if (valid.size() < 2) {
    throw ProtocolError("mad: fewer than two nonzero-norm rows");
  }

  auto pair_distance = [&](Index a, Index b) {
    const Real c = embeddings.row(a).dot(embeddings.row(b)) / (norms[a] * norms[b]);
    return (1.0 - std::clamp(c, -1.0, 1.0)) / 2.0;
  };

  const auto n = static_cast<Index>(valid.size());
  Real total = 0.0;
  if (n <= exact_limit) {
    for (Index a = 0; a < n; ++a) {
      for (Index b = a + 1; b < n; ++b) {
        total += pair_distance(valid[static_cast<std::size_t>(a)],
                               valid[static_cast<std::size_t>(b)]);
      }
    }
    const Real pairs = static_cast<Real>(n) * static_cast<Real>(n - 1) / 2.0;
    return MadResult{total / pairs, excluded};
  }
  std::uniform_int_distribution<Index> pick(0, n - 1);
  for (std::size_t k = 0; k < sample_pairs; ++k) {
    Index a = pick(rng);
    Index b = pick(rng);
    while (b == a) b = pick(rng);
    total += pair_distance(valid[static_cast<std::size_t>(a)],
                           valid[static_cast<std::size_t>(b)]);
  }
  return MadResult{total / static_cast<Real>(sample_pairs), excluded};
}

std::vector<std::pair<Index, Index>> degree_histogram(const std::vector<Index>& degrees) {
  std::map<Index, Index> counts;
  for (Index d : degrees) ++counts[d];
  return {counts.begin(), counts.end()};
}

std::vector<LogBin> log_binned_histogram(const std::vector<Index>& degrees) {
  std::vector<LogBin> bins;
  Index max_deg = 0;
  for (Index d : degrees) max_deg = std::max(max_deg, d);
  Index zero_count = 0;
  for (Index d : degrees) {
    if (d == 0) ++zero_count;
  }
  if (zero_count > 0) bins.push_back({0, 1, zero_count});
  for (Index lo = 1; lo <= max_deg; lo *= 2) {
    const Index hi = lo * 2;
    Index count = 0;
    for (Index d : degrees) {
      if (d >= lo && d < hi) ++count;
    }
    if (count > 0) bins.push_back({lo, hi, count});
  }
  return bins;
}

}  // namespace dcah
