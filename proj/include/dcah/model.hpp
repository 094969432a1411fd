#pragma once

#include "dcah/graph.hpp"
#include "dcah/tape.hpp"

#include <string>
#include <vector>

namespace dcah {

enum class ModelMode { dcah, gcn_only, hyper_only };

ModelMode parse_model_mode(const std::string& s);
std::string to_string(ModelMode m);

struct ModelConfig {
  ModelMode mode = ModelMode::dcah;
  Index hidden_dim = 64;
  int layers = 2;
  Real dropout = 0.25;
};

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;  // needed when training with dropout > 0
  const Mat* query_features = nullptr;  // override for masked views
};

/// Trainable leaves recorded during one forward pass, by parameter name.
using Bindings = std::vector<std::pair<std::string, NodeId>>;

struct ForwardResult {
  NodeId query_emb = -1;    // N_Q x d
  NodeId item_emb = -1;     // N_I x d, fused in dual-channel mode
  NodeId item_emb_bg = -1;  // -1 when the channel is unused
  NodeId item_emb_hg = -1;
  Vec beta;                 // channel weights; entries positive, sum to 1
  Bindings bindings;
};

struct NamedParam {
  std::string name;
  Mat* value;
};

/// Dual-channel encoder: a bipartite convolution stack over [queries; items],
/// a hypergraph convolution stack over items, and attention fusion of the two
/// item embeddings. Ablation modes run a single channel.
class DcahModel {
 public:
  static DcahModel init(const ModelConfig& cfg, Mat query_features,
                        Index num_items, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  Index num_queries() const { return query_features_.rows(); }
  Index num_items() const { return num_items_; }
  const Mat& query_features() const { return query_features_; }

  /// Trainable parameters for the configured mode, plus the projection head.
  std::vector<NamedParam> parameters();

  ForwardResult forward(Tape& tape, const PropagationOperator* bipartite,
                        const PropagationOperator* hypergraph,
                        const ForwardOptions& opts) const;

  /// Two-layer MLP head used by contrastive pretraining.
  NodeId project(Tape& tape, NodeId rows, Bindings& bindings) const;

  /// Convenience eval-mode pass returning embedding values.
  struct Embeddings {
    Mat queries;
    Mat items;
    Vec beta;
  };
  Embeddings embed(const PropagationOperator* bipartite,
                   const PropagationOperator* hypergraph) const;

  void save(const std::string& path) const;
  static DcahModel load(const std::string& path);

 private:
  DcahModel() = default;

  NodeId forward_channel(Tape& tape, const SpMat& op, NodeId x0,
                         const std::vector<Mat>& thetas, const char* prefix,
                         const ForwardOptions& opts, Bindings& bindings) const;

  ModelConfig cfg_;
  Index num_items_ = 0;
  Mat query_features_;  // fixed input, not trained
  Mat item_emb_bg_, item_emb_hg_;
  std::vector<Mat> theta_bg_, theta_hg_;
  Mat attn_w_;
  Mat attn_b_, attn_q_;  // d x 1
  Mat proj_w1_, proj_w2_;
  Mat proj_b1_, proj_b2_;  // d x 1
};

/// Attention fusion of two item-embedding nodes (shared parameters):
/// per-channel importance = mean_i q^T tanh(W x_i + b), softmax over channels,
/// convex combination of the channel embeddings.
struct FusionResult {
  NodeId fused;
  NodeId beta;  // 1 x 2 node
};
FusionResult fuse_channels(Tape& tape, NodeId item_bg, NodeId item_hg,
                           NodeId attn_w, NodeId attn_b, NodeId attn_q);

/// Dot-product link scores for explicit (query, item) index pairs.
Vec score_links(const Mat& query_emb, const Mat& item_emb,
                const std::vector<Edge>& pairs);

}  // namespace dcah
