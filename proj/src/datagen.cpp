#include "dcah/datagen.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace dcah {

using json = nlohmann::ordered_json;

void GenSpec::validate() const {
  if (num_queries < 1 || num_items < 1) throw InputError("genspec: node counts must be positive");
  if (num_edges < 0 || num_edges > num_queries * num_items) {
    throw InputError("genspec: edge target exceeds bipartite capacity");
  }
  if (gamma <= 1.0) throw InputError("genspec: gamma must exceed 1");
  if (alpha < -1.0 || alpha > 1.0) throw InputError("genspec: alpha must lie in [-1, 1]");
  if (num_sessions < 0) throw InputError("genspec: negative session count");
  if (session_mean_size < 2.0) throw InputError("genspec: session mean size below 2");
  if (num_topics < 1 || num_topics > num_items) {
    throw InputError("genspec: topic count must lie in [1, num_items]");
  }
  if (topic_coherence < 0.0 || topic_coherence > 1.0) {
    throw InputError("genspec: topic coherence must lie in [0, 1]");
  }
}

// =============================================================================
// Bipartite generator
// =============================================================================

BipartiteGraph generate_bipartite(const GenSpec& spec, Rng& rng) {
  spec.validate();
  // Zipf rank weights: sampling counts from rank^{-a} weights yields a degree
  // tail with exponent ~ 1 + 1/a, so a = 1/(gamma - 1) targets gamma.
  const Real a_item = 1.0 / (spec.gamma - 1.0);
  std::vector<Real> item_w(static_cast<std::size_t>(spec.num_items));
  for (Index i = 0; i < spec.num_items; ++i) {
    item_w[static_cast<std::size_t>(i)] = std::pow(static_cast<Real>(i + 1), -a_item);
  }
  std::vector<Real> query_w(static_cast<std::size_t>(spec.num_queries));
  for (Index q = 0; q < spec.num_queries; ++q) {
    query_w[static_cast<std::size_t>(q)] =
        std::pow(static_cast<Real>(q + 1), -spec.query_activity_exponent);
  }
  std::discrete_distribution<Index> pick_item(item_w.begin(), item_w.end());
  std::discrete_distribution<Index> pick_query(query_w.begin(), query_w.end());
  std::uniform_real_distribution<Real> unit(0.0, 1.0);
  const Index jitter_span = std::max<Index>(1, spec.num_queries / 20);
  std::uniform_int_distribution<Index> jitter(-jitter_span, jitter_span);

  std::unordered_set<std::uint64_t> seen;
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(spec.num_edges));
  const long max_attempts = 200L * std::max<Index>(spec.num_edges, 1) + 10000L;
  long attempts = 0;
  while (static_cast<Index>(edges.size()) < spec.num_edges) {
    if (++attempts > max_attempts) {
      throw NumericError("generate_bipartite: could not place requested edges "
                         "without duplicates; lower num_edges");
    }
    const Index item = pick_item(rng);
    Index query;
    if (unit(rng) < std::abs(spec.alpha)) {
      // Coupled draw: map the item's popularity percentile onto a query
      // activity percentile, reversed when alpha is negative.
      const Real pop = spec.num_items > 1
                           ? 1.0 - static_cast<Real>(item) / static_cast<Real>(spec.num_items - 1)
                           : 1.0;
      const Real target = spec.alpha < 0.0 ? 1.0 - pop : pop;
      const Index base = static_cast<Index>(
          std::llround((1.0 - target) * static_cast<Real>(spec.num_queries - 1)));
      query = std::clamp<Index>(base + jitter(rng), 0, spec.num_queries - 1);
    } else {
      query = pick_query(rng);
    }
    const std::uint64_t key =
        (static_cast<std::uint64_t>(query) << 32) | static_cast<std::uint64_t>(item);
    if (!seen.insert(key).second) continue;
    edges.emplace_back(query, item);
  }
  return BipartiteGraph(spec.num_queries, spec.num_items, std::move(edges));
}

// =============================================================================
// Session generator
// =============================================================================

SessionGen generate_sessions_detailed(const GenSpec& spec, const BipartiteGraph& g,
                                      Rng& rng) {
  spec.validate();
  require(g.num_items() == spec.num_items, "generate_sessions: item count mismatch");

  std::uniform_int_distribution<int> pick_topic(0, static_cast<int>(spec.num_topics) - 1);
  std::vector<int> query_topics(static_cast<std::size_t>(g.num_queries()));
  for (auto& t : query_topics) t = pick_topic(rng);

  // Items inherit the topic of one of their engaging queries, so topics track
  // co-engagement neighborhoods; items without queries get a random topic.
  std::vector<std::vector<Index>> item_queries(static_cast<std::size_t>(g.num_items()));
  for (const auto& [q, i] : g.edges()) item_queries[static_cast<std::size_t>(i)].push_back(q);
  std::vector<int> item_topics(static_cast<std::size_t>(g.num_items()));
  for (Index i = 0; i < g.num_items(); ++i) {
    const auto& qs = item_queries[static_cast<std::size_t>(i)];
    if (qs.empty()) {
      item_topics[static_cast<std::size_t>(i)] = pick_topic(rng);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, qs.size() - 1);
      item_topics[static_cast<std::size_t>(i)] = query_topics[static_cast<std::size_t>(qs[pick(rng)])];
    }
  }
  std::vector<std::vector<Index>> topic_members(static_cast<std::size_t>(spec.num_topics));
  for (Index i = 0; i < g.num_items(); ++i) {
    topic_members[static_cast<std::size_t>(item_topics[static_cast<std::size_t>(i)])].push_back(i);
  }

  // Sizes are 2 + geometric; a session ends early if its topic pool runs dry
  // rather than drifting off-topic.
  const Real mean_extra = spec.session_mean_size - 2.0;
  const Real p_geo = 1.0 / (mean_extra + 1.0);
  std::geometric_distribution<Index> extra(p_geo);
  std::uniform_real_distribution<Real> unit(0.0, 1.0);
  std::uniform_int_distribution<Index> pick_item(0, g.num_items() - 1);

  SessionGen out;
  out.item_topics = item_topics;
  out.records.reserve(static_cast<std::size_t>(spec.num_sessions));
  out.session_topics.reserve(static_cast<std::size_t>(spec.num_sessions));
  for (Index s = 0; s < spec.num_sessions; ++s) {
    const int topic = pick_topic(rng);
    const Index target = std::min<Index>(2 + extra(rng), g.num_items());
    std::vector<Index> members;
    std::unordered_set<Index> used;
    const auto& pool = topic_members[static_cast<std::size_t>(topic)];
    while (static_cast<Index>(members.size()) < target) {
      if (unit(rng) < spec.topic_coherence) {
        if (used.size() >= pool.size()) break;  // interest exhausted
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        Index cand = pool[pick(rng)];
        int guard = 0;
        while (used.count(cand) && ++guard < 64) cand = pool[pick(rng)];
        if (used.count(cand)) {
          auto it = std::find_if(pool.begin(), pool.end(),
                                 [&](Index x) { return !used.count(x); });
          if (it == pool.end()) break;
          cand = *it;
        }
        used.insert(cand);
        members.push_back(cand);
      } else {
        if (static_cast<Index>(used.size()) >= g.num_items()) break;
        Index cand = pick_item(rng);
        while (used.count(cand)) cand = pick_item(rng);
        used.insert(cand);
        members.push_back(cand);
      }
    }
    out.session_topics.push_back(topic);
    out.records.push_back(std::move(members));
  }
  out.hypergraph = build_hypergraph(g.num_items(), out.records);
  return out;
}

Hypergraph generate_sessions(const GenSpec& spec, const BipartiteGraph& g, Rng& rng) {
  return generate_sessions_detailed(spec, g, rng).hypergraph;
}

// =============================================================================
// File io
// =============================================================================

BipartiteGraph load_bipartite(const std::string& path, Index num_queries,
                              Index num_items) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("edges: cannot open: " + path);
  std::vector<Edge> edges;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    Index q, i;
    if (!(ss >> q >> i) || !(ss >> std::ws).eof()) {
      throw InputError("edges: parse error at line " + std::to_string(line_no) +
                       ": '" + line + "'");
    }
    edges.emplace_back(q, i);
  }
  return BipartiteGraph(num_queries, num_items, std::move(edges));
}

void save_bipartite(const BipartiteGraph& g, const std::string& path) {
  std::vector<Edge> edges = g.edges();
  std::sort(edges.begin(), edges.end());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("edges: cannot open for writing: " + path);
  for (const auto& [q, i] : edges) out << q << '\t' << i << '\n';
}

std::vector<std::vector<Index>> load_hyperedges(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("hyperedges: cannot open: " + path);
  std::vector<std::vector<Index>> records;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::vector<Index> items;
    Index item;
    while (ss >> item) items.push_back(item);
    if (items.empty() || !(ss >> std::ws).eof()) {
      throw InputError("hyperedges: parse error at line " + std::to_string(line_no) +
                       ": '" + line + "'");
    }
    records.push_back(std::move(items));
  }
  return records;
}

void save_hyperedges(const Hypergraph& h, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("hyperedges: cannot open for writing: " + path);
  for (const auto& members : h.hyperedges()) {
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (k > 0) out << ' ';
      out << members[k];
    }
    out << '\n';
  }
}

namespace {

json spec_to_json(const GenSpec& s) {
  return json{{"num_queries", s.num_queries},
              {"num_items", s.num_items},
              {"num_edges", s.num_edges},
              {"gamma", s.gamma},
              {"alpha", s.alpha},
              {"query_activity_exponent", s.query_activity_exponent},
              {"num_sessions", s.num_sessions},
              {"session_mean_size", s.session_mean_size},
              {"num_topics", s.num_topics},
              {"topic_coherence", s.topic_coherence},
              {"seed", s.seed}};
}

GenSpec spec_from_json(const json& j) {
  GenSpec s;
  s.num_queries = j.at("num_queries").get<Index>();
  s.num_items = j.at("num_items").get<Index>();
  s.num_edges = j.at("num_edges").get<Index>();
  s.gamma = j.at("gamma").get<Real>();
  s.alpha = j.at("alpha").get<Real>();
  s.query_activity_exponent = j.at("query_activity_exponent").get<Real>();
  s.num_sessions = j.at("num_sessions").get<Index>();
  s.session_mean_size = j.at("session_mean_size").get<Real>();
  s.num_topics = j.at("num_topics").get<Index>();
  s.topic_coherence = j.at("topic_coherence").get<Real>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace

void save_manifest(const Manifest& m, const std::string& path) {
  json j;
  j["num_queries"] = m.num_queries;
  j["num_items"] = m.num_items;
  j["num_edges"] = m.num_edges;
  j["num_hyperedges"] = m.num_hyperedges;
  j["generator"] = m.has_spec ? spec_to_json(m.spec) : json(nullptr);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("manifest: cannot open for writing: " + path);
  out << j.dump(2) << '\n';
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("manifest: cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError("manifest: parse failure: " + std::string(e.what()));
  }
  Manifest m;
  m.num_queries = j.at("num_queries").get<Index>();
  m.num_items = j.at("num_items").get<Index>();
  m.num_edges = j.at("num_edges").get<Index>();
  m.num_hyperedges = j.at("num_hyperedges").get<Index>();
  if (!j.at("generator").is_null()) {
    m.spec = spec_from_json(j.at("generator"));
    m.has_spec = true;
  }
  return m;
}

// =============================================================================
// Query features
// =============================================================================

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

Mat hashed_query_features(const std::vector<std::string>& queries, Index dim) {
  require(dim > 0, "features: dimension must be positive");
  Mat features = Mat::Zero(static_cast<Index>(queries.size()), dim);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::istringstream ss(queries[q]);
    std::string token;
    while (ss >> token) {
      const std::uint64_t h = fnv1a(token);
      const Index bucket = static_cast<Index>(h % static_cast<std::uint64_t>(dim));
      const Real sign = ((h >> 32) & 1ULL) ? 1.0 : -1.0;
      features(static_cast<Index>(q), bucket) += sign;
    }
    const Real norm = features.row(static_cast<Index>(q)).norm();
    if (norm > 0.0) features.row(static_cast<Index>(q)) /= norm;
  }
  return features;
}

Mat random_query_features(Index num_queries, Index dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "query_features"));
  return random_normal(num_queries, dim, 1.0 / std::sqrt(static_cast<Real>(dim)), rng);
}

}  // namespace dcah
