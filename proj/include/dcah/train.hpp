#pragma once

#include "dcah/eval.hpp"
#include "dcah/model.hpp"

#include <map>
#include <vector>

namespace dcah {

struct TrainConfig {
  Real lr = 1e-3;
  Index batch_size = 1024;
  Real tau = 0.1;
  Real dropedge_rate = 0.0;  // 0 disables structural dropout
  int ssl_epochs = 0;        // 0 disables pretraining
  int train_epochs = 100;
  Real aug_edge_drop = 0.2;
  Real aug_feature_mask = 0.1;
  int negatives_per_positive = 5;
  // Denominator form of the contrastive loss: the printed equation omits the
  // positive pair; flip to include it (standard NT-Xent).
  bool nt_xent_include_positive = false;
  std::uint64_t seed = 1;

  void validate() const;
};

// =============================================================================
// Structural augmentation
// =============================================================================

/// Keeps every edge independently with probability 1 - rate.
BipartiteGraph dropedge(const BipartiteGraph& g, Real rate, Rng& rng);

/// Drops (item, hyperedge) incidences independently; hyperedges reduced below
/// two members disappear.
Hypergraph dropedge(const Hypergraph& h, Real rate, Rng& rng);

struct AugmentSpec {
  Real edge_drop = 0.2;
  Real feature_mask = 0.1;
};

/// One augmented view: dropped graphs, rebuilt operators, masked features.
struct GraphView {
  BipartiteGraph bipartite;
  Hypergraph hypergraph;
  PropagationOperator bipartite_op;
  PropagationOperator hypergraph_op;
  Mat query_features;
};

struct AugmentedPair {
  GraphView view_i;
  GraphView view_j;
};

AugmentedPair augment(const BipartiteGraph& g, const Hypergraph& h,
                      const Mat& query_features, const AugmentSpec& spec, Rng& rng);

// =============================================================================
// Losses and optimizer
// =============================================================================

/// Temperature-scaled cross-view alignment loss over row-aligned batches:
/// cosine similarities, positives on the diagonal, denominator over the
/// other view's rows (diagonal excluded unless include_positive).
NodeId contrastive_loss(Tape& tape, NodeId z_i, NodeId z_j, Real tau,
                        bool include_positive = false);

class Adam {
 public:
  explicit Adam(Real lr, Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8);
  void step(const std::string& name, Mat& param, const Mat& grad);

 private:
  struct State {
    Mat m;
    Mat v;
    long t = 0;
  };
  Real lr_, beta1_, beta2_, eps_;
  std::map<std::string, State> state_;
};

/// Sums gradients of duplicate-named leaves (a parameter can be recorded on
/// the tape once per view).
std::map<std::string, Mat> collect_gradients(const Tape& tape, const Bindings& bindings);

// =============================================================================
// Training loops
// =============================================================================

struct SslLog {
  std::vector<Real> losses;  // one entry per epoch
};

/// Contrastive pretraining: per epoch, two fresh augmented views, encoder
/// forward on each, shared projection head, gradient step on the alignment
/// loss. The projection head stays in the model but downstream scoring never
/// uses it.
SslLog pretrain_ssl(DcahModel& model, const BipartiteGraph& g, const Hypergraph& h,
                    const TrainConfig& cfg);

struct TrainLog {
  std::vector<Real> losses;    // train BCE per epoch
  std::vector<Real> val_mrrs;  // validation MRR per epoch
  int best_epoch = -1;
};

/// Supervised link prediction on the protocol's train edges with k uniform
/// corruptions per positive per epoch, optional per-epoch DropEdge, and
/// best-validation parameter retention.
TrainLog train_link_prediction(DcahModel& model, const BipartiteGraph& structure,
                               const Hypergraph& h, const EvalProtocol& protocol,
                               const TrainConfig& cfg);

struct PipelineLog {
  SslLog ssl;
  TrainLog supervised;
};

/// SSL pretraining (when enabled) strictly before supervised training.
PipelineLog train_full(DcahModel& model, const BipartiteGraph& structure,
                       const Hypergraph& h, const EvalProtocol& protocol,
                       const TrainConfig& cfg);

}  // namespace dcah
