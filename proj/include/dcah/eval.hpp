#pragma once

#include "dcah/graph.hpp"

#include <array>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

namespace dcah {

// =============================================================================
// Four-part split and negative-sampling protocol
// =============================================================================

enum class Part : int { head = 0, tail1 = 1, tail2 = 2, isolation = 3 };
inline constexpr int kNumParts = 4;
inline constexpr int kExcluded = -1;

const char* part_name(int part);

struct EdgeSplit {
  std::vector<Edge> train;
  std::vector<Edge> val;
  std::vector<Edge> test;
};

/// Node partition, per-part 70/10/20 edge splits, and fixed negative
/// candidates for every validation/test edge (50 source-corrupt followed by
/// 50 destination-corrupt).
struct EvalProtocol {
  std::vector<int> item_part;  // kExcluded or Part value per item
  std::array<EdgeSplit, kNumParts> parts;
  std::array<std::vector<std::vector<Edge>>, kNumParts> test_negatives;
  std::array<std::vector<std::vector<Edge>>, kNumParts> val_negatives;
  std::vector<Edge> excluded_edges;      // edges of items in no part
  std::vector<Edge> dropped_test_edges;  // removed when balancing test parts

  std::vector<Edge> all_train_edges() const;
};

/// Assigns items to head/tail1/tail2/isolation by joint degree percentiles
/// (ties broken by item id), splits each part's edges 70/10/20, then
/// downsamples test sets so every part carries the same test edge count.
/// Negatives are not attached here.
EvalProtocol split_four_parts(const BipartiteGraph& g, const Hypergraph& h, Rng& rng);

using PairSet = std::unordered_set<std::uint64_t>;

/// 100 negatives per edge: 50 corrupting the query, 50 corrupting the item,
/// uniform and rejection-sampled against the full original edge set and all
/// previously emitted negatives in `emitted`.
std::vector<std::vector<Edge>> sample_negatives(const BipartiteGraph& g,
                                                const std::vector<Edge>& edges,
                                                Rng& rng, PairSet& emitted,
                                                int per_side = 50);

/// Fills val/test negatives for every part with one shared emitted set.
void attach_negatives(EvalProtocol& protocol, const BipartiteGraph& g, Rng& rng);

void save_protocol(const EvalProtocol& protocol, const std::string& path);
EvalProtocol load_protocol(const std::string& path, const BipartiteGraph& g);

// =============================================================================
// Ranking metrics (average-rank tie policy throughout)
// =============================================================================

struct RankedScores {
  Real positive;
  std::vector<Real> negatives;
};

/// Mean reciprocal rank of each positive among its own negatives.
Real mrr(const std::vector<RankedScores>& scored);

struct PooledScores {
  std::vector<Real> positives;
  std::vector<Real> negatives;
};

/// Pooled ranking recall with N = number of positives; tie groups straddling
/// the cutoff contribute fractionally.
Real recall_at_n(const PooledScores& pooled);

// =============================================================================
// Graph diagnostics
// =============================================================================

/// Pearson correlation of endpoint degrees over both orientations of every
/// edge; empty when degree variance vanishes.
std::optional<Real> degree_assortativity(const BipartiteGraph& g);

struct RelativeDegreeResult {
  std::vector<Real> per_node;  // NaN for isolated nodes
  Real mean;                   // over nodes with at least one neighbor
};
RelativeDegreeResult relative_degree(const BipartiteGraph& g);

/// Mean pairwise embedding distance, (1 - cosine)/2 per pair. All pairs when
/// rows <= exact_limit, otherwise `sample_pairs` uniform random pairs.
struct MadResult {
  Real value;
  Index excluded_rows;  // zero-norm rows skipped
};
MadResult mad(const Mat& embeddings, Rng& rng, Index exact_limit = 2000,
              std::size_t sample_pairs = 1000000);

/// Sorted (degree, count) pairs over the supplied degree sequence.
std::vector<std::pair<Index, Index>> degree_histogram(const std::vector<Index>& degrees);

struct LogBin {
  Index lo;  // inclusive
  Index hi;  // exclusive
  Index count;
};
/// Powers-of-two degree bins for plotting heavy-tailed distributions.
std::vector<LogBin> log_binned_histogram(const std::vector<Index>& degrees);

}  // namespace dcah
