#pragma once

#include "dcah/common.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace dcah {

using NodeId = std::int32_t;

/// Reverse-mode differentiation tape over dense matrices.
///
/// A tape is rebuilt for every training step (define-by-run). Recording an
/// operation stores its forward value and a backward closure; backward()
/// replays the closures in exact reverse recording order, accumulating
/// gradients into the operands. Sparse structural matrices enter only as
/// constants of spmm and never receive gradients.
///
/// Single-threaded by contract: one tape per training step per thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves ----
  NodeId constant(Mat value);
  NodeId param(const Mat& value);  // trainable leaf; value copied

  // ---- primitives ----
  NodeId matmul(NodeId a, NodeId b);     // A * B
  NodeId matmul_nt(NodeId a, NodeId b);  // A * B^T
  NodeId spmm(const SpMat& s, NodeId x);  // constant sparse * dense
  NodeId add(NodeId a, NodeId b);          // same shape
  NodeId add_row(NodeId a, NodeId bias);   // bias is d x 1, added to every row
  NodeId scale(NodeId a, Real c);
  NodeId hadamard(NodeId a, const Mat& mask);  // constant elementwise mask
  NodeId relu(NodeId a);
  NodeId tanh(NodeId a);
  NodeId softmax(NodeId a);        // row-wise
  NodeId row_normalize(NodeId a);  // rows scaled to unit l2 norm
  NodeId vstack(NodeId a, NodeId b);
  NodeId slice_rows(NodeId a, Index begin, Index end);
  NodeId gather_rows(NodeId a, std::vector<Index> rows);
  NodeId elem(NodeId a, Index r, Index c);  // 1x1 extraction
  NodeId scalar_mul(NodeId s, NodeId a);    // (1x1 node) * A
  NodeId stack_scalars(const std::vector<NodeId>& scalars);  // 1 x k
  NodeId sum(NodeId a);  // 1x1

  /// Per-pair dot products of rows: out[k] = a.row(pairs[k].first) . b.row(pairs[k].second).
  NodeId pair_dot(NodeId a, NodeId b, std::vector<std::pair<Index, Index>> pairs);

  /// Mean binary cross-entropy over logits against fixed 0/1 targets.
  NodeId bce_with_logits(NodeId logits, Vec targets);

  /// Alignment loss over a B x B logit matrix S whose diagonal holds the
  /// positive-pair logits: mean_n [ -S_nn + log sum_m exp(S_nm) ], with the
  /// diagonal term optionally excluded from the denominator sum.
  NodeId cross_view_nll(NodeId sim, bool include_diagonal);

  // ---- inspection ----
  const Mat& value(NodeId id) const;
  /// Gradient of the last backward() loss w.r.t. this node (zero if detached).
  const Mat& grad(NodeId id) const;
  Index num_nodes() const { return static_cast<Index>(nodes_.size()); }

  /// Seeds d(loss)/d(loss) = 1 and sweeps all recorded operations in reverse.
  /// The loss must be a 1x1 node; a tape can run backward only once.
  void backward(NodeId loss);

 private:
  struct Node {
    Mat value;
    Mat grad;  // lazily allocated; empty means "never touched", i.e. zero
    std::function<void()> backprop;  // empty for leaves
  };

  NodeId push(Mat value, std::function<void()> backprop = {});
  Mat& grad_slot(NodeId id);
  const Node& node(NodeId id) const;
  void check_open(const char* op) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
  mutable Mat zero_;  // scratch for grad() of untouched nodes
};

}  // namespace dcah
