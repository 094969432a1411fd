#pragma once

#include "dcah/graph.hpp"

#include <string>
#include <vector>

namespace dcah {

/// Knobs for the synthetic query-item world: a power-law bipartite graph plus
/// topic-coherent engagement sessions over the same items.
struct GenSpec {
  Index num_queries = 5000;
  Index num_items = 5000;
  Index num_edges = 20000;
  Real gamma = 2.1;        // item popularity tail exponent
  Real alpha = -0.3;       // degree-mixing knob, negative = disassortative
  Real query_activity_exponent = 0.8;
  Index num_sessions = 2000;
  Real session_mean_size = 5.0;  // sizes are 2 + geometric tail
  Index num_topics = 50;
  Real topic_coherence = 0.8;  // probability a session slot stays on-topic
  // Degree ceilings (0 = auto). Uncapped Zipf heads would starve the
  // evaluation protocol: an item with nearly every query attached leaves no
  // room for 50 distinct source corruptions per test edge.
  Index max_item_degree = 0;
  Index max_query_degree = 0;
  std::uint64_t seed = 1;

  void validate() const;
  Index item_degree_cap() const;   // resolves the auto setting
  Index query_degree_cap() const;
};

/// Popularity-proportional bipartite graph. Item weights follow a Zipf law
/// whose sampled-degree tail exponent approaches `gamma`; `alpha` couples
/// query activity to item popularity (negative values bias low-activity
/// queries toward popular items).
BipartiteGraph generate_bipartite(const GenSpec& spec, Rng& rng);

struct SessionGen {
  Hypergraph hypergraph;
  std::vector<int> item_topics;     // per item
  std::vector<int> session_topics;  // per generated record
  std::vector<std::vector<Index>> records;
};

/// Topic-coherent sessions: items inherit topics from the queries engaging
/// them, each session draws a topic and fills on-topic with probability
/// `topic_coherence`, uniformly otherwise. Session item choice ignores
/// popularity, so sparse items are over-represented relative to their
/// bipartite degree.
SessionGen generate_sessions_detailed(const GenSpec& spec, const BipartiteGraph& g,
                                      Rng& rng);
Hypergraph generate_sessions(const GenSpec& spec, const BipartiteGraph& g, Rng& rng);

// =============================================================================
// File formats: line-oriented text plus a JSON manifest
// =============================================================================

/// One "query<TAB>item" pair per line, LF endings, edges in canonical
/// (query, item) ascending order when written by save_bipartite.
BipartiteGraph load_bipartite(const std::string& path, Index num_queries, Index num_items);
void save_bipartite(const BipartiteGraph& g, const std::string& path);

/// One hyperedge per line: space-separated item ids, ascending within a line.
std::vector<std::vector<Index>> load_hyperedges(const std::string& path);
void save_hyperedges(const Hypergraph& h, const std::string& path);

struct Manifest {
  Index num_queries = 0;
  Index num_items = 0;
  Index num_edges = 0;
  Index num_hyperedges = 0;
  GenSpec spec;
  bool has_spec = false;
};

void save_manifest(const Manifest& m, const std::string& path);
Manifest load_manifest(const std::string& path);

/// Deterministic query features: token multisets hashed into d buckets and
/// row-normalized; stands in for text-derived features on loaded datasets.
Mat hashed_query_features(const std::vector<std::string>& queries, Index dim);

/// Frozen random-normal query features for generated datasets.
Mat random_query_features(Index num_queries, Index dim, std::uint64_t seed);

}  // namespace dcah
