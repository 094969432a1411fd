#include "dcah/tape.hpp"

#include <cmath>

namespace dcah {

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": operand shapes differ");
  }
}

}  // namespace

NodeId Tape::push(Mat value, std::function<void()> backprop) {
  if (!all_finite(value)) throw NumericError("tape: non-finite forward value");
  nodes_.push_back(Node{std::move(value), Mat(), std::move(backprop)});
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
    throw StateError("tape: node id out of range");
  }
  return nodes_[static_cast<std::size_t>(id)];
}

Mat& Tape::grad_slot(NodeId id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::check_open(const char* op) const {
  if (consumed_) {
    throw StateError(std::string(op) + ": tape already consumed by backward()");
  }
}

const Mat& Tape::value(NodeId id) const { return node(id).value; }

const Mat& Tape::grad(NodeId id) const {
  const Node& n = node(id);
  if (n.grad.size() != 0) return n.grad;
  zero_ = Mat::Zero(n.value.rows(), n.value.cols());
  return zero_;
}

NodeId Tape::constant(Mat value) {
  check_open("constant");
  return push(std::move(value));
}

NodeId Tape::param(const Mat& value) {
  check_open("param");
  return push(value);
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  check_open("matmul");
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.cols() != B.rows()) throw ShapeError("matmul: inner dimensions differ");
  NodeId out = push(A * B);
  nodes_.back().backprop = [this, a, b, out] {
    const Mat& g = nodes_[out].grad;
    grad_slot(a).noalias() += g * nodes_[b].value.transpose();
    grad_slot(b).noalias() += nodes_[a].value.transpose() * g;
  };
  return out;
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  check_open("matmul_nt");
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.cols() != B.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  NodeId out = push(A * B.transpose());
  nodes_.back().backprop = [this, a, b, out] {
    const Mat& g = nodes_[out].grad;
    grad_slot(a).noalias() += g * nodes_[b].value;
    grad_slot(b).noalias() += g.transpose() * nodes_[a].value;
  };
  return out;
}

NodeId Tape::spmm(const SpMat& s, NodeId x) {
  check_open("spmm");
  const Mat& X = value(x);
  if (s.cols() != X.rows()) throw ShapeError("spmm: inner dimensions differ");
  NodeId out = push(s * X);
  // Gradients flow through the dense operand only; structure is data.
  SpMat st = SpMat(s.transpose());
  nodes_.back().backprop = [this, st = std::move(st), x, out] {
    grad_slot(x).noalias() += st * nodes_[out].grad;
  };
  return out;
}

NodeId Tape::add(NodeId a, NodeId b) {
  check_open("add");
  check_same_shape(value(a), value(b), "add");
  NodeId out = push(value(a) + value(b));
  nodes_.back().backprop = [this, a, b, out] {
    grad_slot(a) += nodes_[out].grad;
    grad_slot(b) += nodes_[out].grad;
  };
  return out;
}

NodeId Tape::add_row(NodeId a, NodeId bias) {
  check_open("add_row");
  const Mat& A = value(a);
  const Mat& B = value(bias);
  if (B.cols() != 1 || B.rows() != A.cols()) {
    throw ShapeError("add_row: bias must be cols(a) x 1");
  }
  NodeId out = push(A.rowwise() + B.col(0).transpose());
  nodes_.back().backprop = [this, a, bias, out] {
    const Mat& g = nodes_[out].grad;
    grad_slot(a) += g;
    grad_slot(bias) += g.colwise().sum().transpose();
  };
  return out;
}

NodeId Tape::scale(NodeId a, Real c) {
  check_open("scale");
  NodeId out = push(value(a) * c);
  nodes_.back().backprop = [this, a, c, out] {
    grad_slot(a) += c * nodes_[out].grad;
  };
  return out;
}

NodeId Tape::hadamard(NodeId a, const Mat& mask) {
  check_open("hadamard");
  check_same_shape(value(a), mask, "hadamard");
  NodeId out = push(value(a).cwiseProduct(mask));
  nodes_.back().backprop = [this, a, mask, out] {
    grad_slot(a) += nodes_[out].grad.cwiseProduct(mask);
  };
  return out;
}

NodeId Tape::relu(NodeId a) {
  check_open("relu");
  NodeId out = push(value(a).cwiseMax(0.0));
  nodes_.back().backprop = [this, a, out] {
    const Mat& x = nodes_[a].value;
    grad_slot(a) += nodes_[out].grad.cwiseProduct(
        (x.array() > 0.0).cast<Real>().matrix());
  };
  return out;
}

NodeId Tape::tanh(NodeId a) {
  check_open("tanh");
  NodeId out = push(value(a).array().tanh().matrix());
  nodes_.back().backprop = [this, a, out] {
    const Mat& y = nodes_[out].value;
    grad_slot(a) += nodes_[out].grad.cwiseProduct(
        (1.0 - y.array().square()).matrix());
  };
  return out;
}

NodeId Tape::softmax(NodeId a) {
  check_open("softmax");
  const Mat& X = value(a);
  Mat Y(X.rows(), X.cols());
  for (Index i = 0; i < X.rows(); ++i) {
    const Real m = X.row(i).maxCoeff();
    Y.row(i) = (X.row(i).array() - m).exp();
    Y.row(i) /= Y.row(i).sum();
  }
  NodeId out = push(std::move(Y));
  nodes_.back().backprop = [this, a, out] {
    const Mat& y = nodes_[out].value;
    const Mat& g = nodes_[out].grad;
    Mat& ga = grad_slot(a);
    for (Index i = 0; i < y.rows(); ++i) {
      const Real dot = y.row(i).dot(g.row(i));
      ga.row(i) += (g.row(i).array() - dot).matrix().cwiseProduct(y.row(i));
    }
  };
  return out;
}

NodeId Tape::row_normalize(NodeId a) {
  check_open("row_normalize");
  const Mat& X = value(a);
  Vec norms(X.rows());
  for (Index i = 0; i < X.rows(); ++i) {
    norms[i] = X.row(i).norm();
    if (norms[i] < 1e-12) {
      throw NumericError("row_normalize: zero-norm row " + std::to_string(i));
    }
  }
  Mat Y = norms.cwiseInverse().asDiagonal() * X;
  NodeId out = push(std::move(Y));
  nodes_.back().backprop = [this, a, out, norms = std::move(norms)] {
    const Mat& y = nodes_[out].value;
    const Mat& g = nodes_[out].grad;
    Mat& ga = grad_slot(a);
    for (Index i = 0; i < y.rows(); ++i) {
      const Real dot = y.row(i).dot(g.row(i));
      ga.row(i) += (g.row(i) - dot * y.row(i)) / norms[i];
    }
  };
  return out;
}

NodeId Tape::vstack(NodeId a, NodeId b) {
  check_open("vstack");
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.cols() != B.cols()) throw ShapeError("vstack: column counts differ");
  Mat Y(A.rows() + B.rows(), A.cols());
  Y.topRows(A.rows()) = A;
  Y.bottomRows(B.rows()) = B;
  NodeId out = push(std::move(Y));
  nodes_.back().backprop = [this, a, b, out] {
    const Mat& g = nodes_[out].grad;
    const Index ra = nodes_[a].value.rows();
    grad_slot(a) += g.topRows(ra);
    grad_slot(b) += g.bottomRows(g.rows() - ra);
  };
  return out;
}

NodeId Tape::slice_rows(NodeId a, Index begin, Index end) {
  check_open("slice_rows");
  const Mat& A = value(a);
  if (begin < 0 || end > A.rows() || begin >= end) {
    throw ShapeError("slice_rows: invalid row range");
  }
  NodeId out = push(A.middleRows(begin, end - begin));
  nodes_.back().backprop = [this, a, begin, end, out] {
    grad_slot(a).middleRows(begin, end - begin) += nodes_[out].grad;
  };
  return out;
}

NodeId Tape::gather_rows(NodeId a, std::vector<Index> rows) {
  check_open("gather_rows");
  const Mat& A = value(a);
  Mat Y(static_cast<Index>(rows.size()), A.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= A.rows()) {
      throw InputError("gather_rows: row index out of range");
    }
    Y.row(static_cast<Index>(k)) = A.row(rows[k]);
  }
  NodeId out = push(std::move(Y));
  nodes_.back().backprop = [this, a, rows = std::move(rows), out] {
    const Mat& g = nodes_[out].grad;
    Mat& ga = grad_slot(a);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      ga.row(rows[k]) += g.row(static_cast<Index>(k));
    }
  };
  return out;
}

NodeId Tape::elem(NodeId a, Index r, Index c) {
  check_open("elem");
  const Mat& A = value(a);
  if (r < 0 || r >= A.rows() || c < 0 || c >= A.cols()) {
    throw ShapeError("elem: index out of range");
  }
  Mat Y(1, 1);
  Y(0, 0) = A(r, c);
  NodeId out = push(std::move(Y));
  nodes_.back().backprop = [this, a, r, c, out] {
    grad_slot(a)(r, c) += nodes_[out].grad(0, 0);
  };
  return out;
}

NodeId Tape::scalar_mul(NodeId s, NodeId a) {
  check_open("scalar_mul");
  const Mat& S = value(s);
  if (S.rows() != 1 || S.cols() != 1) throw ShapeError("scalar_mul: s must be 1x1");
  NodeId out = push(S(0, 0) * value(a));
  nodes_.back().backprop = [this, s, a, out] {
    const Mat& g = nodes_[out].grad;
    grad_slot(s)(0, 0) += nodes_[a].value.cwiseProduct(g).sum();
    grad_slot(a) += nodes_[s].value(0, 0) * g;
  };
  return out;
}

NodeId Tape::stack_scalars(const std::vector<NodeId>& scalars) {
  check_open("stack_scalars");
  if (scalars.empty()) throw ShapeError("stack_scalars: empty input");
  Mat Y(1, static_cast<Index>(scalars.size()));
  for (std::size_t k = 0; k < scalars.size(); ++k) {
    const Mat& S = value(scalars[k]);
    if (S.rows() != 1 || S.cols() != 1) {
      throw ShapeError("stack_scalars: inputs must be 1x1");
    }
    Y(0, static_cast<Index>(k)) = S(0, 0);
  }
  NodeId out = push(std::move(Y));
  nodes_.back().backprop = [this, scalars, out] {
    const Mat& g = nodes_[out].grad;
    for (std::size_t k = 0; k < scalars.size(); ++k) {
      grad_slot(scalars[k])(0, 0) += g(0, static_cast<Index>(k));
    }
  };
  return out;
}

NodeId Tape::sum(NodeId a) {
  check_open("sum");
  Mat Y(1, 1);
  Y(0, 0) = value(a).sum();
  NodeId out = push(std::move(Y));
  nodes_.back().backprop = [this, a, out] {
    grad_slot(a).array() += nodes_[out].grad(0, 0);
  };
  return out;
}

NodeId Tape::pair_dot(NodeId a, NodeId b,
                      std::vector<std::pair<Index, Index>> pairs) {
  check_open("pair_dot");
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.cols() != B.cols()) throw ShapeError("pair_dot: embedding dims differ");
  Mat Y(static_cast<Index>(pairs.size()), 1);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    if (i < 0 || i >= A.rows() || j < 0 || j >= B.rows()) {
      throw InputError("pair_dot: pair index out of range");
    }
    Y(static_cast<Index>(k), 0) = A.row(i).dot(B.row(j));
  }
  NodeId out = push(std::move(Y));
  nodes_.back().backprop = [this, a, b, pairs = std::move(pairs), out] {
    const Mat& g = nodes_[out].grad;
    Mat& ga = grad_slot(a);
    Mat& gb = grad_slot(b);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto [i, j] = pairs[k];
      const Real gk = g(static_cast<Index>(k), 0);
      ga.row(i) += gk * nodes_[b].value.row(j);
      gb.row(j) += gk * nodes_[a].value.row(i);
    }
  };
  return out;
}

NodeId Tape::bce_with_logits(NodeId logits, Vec targets) {
  check_open("bce_with_logits");
  const Mat& S = value(logits);
  if (S.cols() != 1 || S.rows() != targets.size()) {
    throw ShapeError("bce_with_logits: logits must be n x 1 matching targets");
  }
  const Index n = S.rows();
  Real loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Real s = S(i, 0);
    // max(s,0) - y*s + log(1 + exp(-|s|)), stable for both signs
    loss += std::max(s, 0.0) - targets[i] * s + std::log1p(std::exp(-std::abs(s)));
  }
  Mat Y(1, 1);
  Y(0, 0) = loss / static_cast<Real>(n);
  NodeId out = push(std::move(Y));
  nodes_.back().backprop = [this, logits, targets = std::move(targets), out] {
    const Real g = nodes_[out].grad(0, 0);
    const Mat& S = nodes_[logits].value;
    Mat& gl = grad_slot(logits);
    const Real inv_n = 1.0 / static_cast<Real>(S.rows());
    for (Index i = 0; i < S.rows(); ++i) {
      const Real sigma = 1.0 / (1.0 + std::exp(-S(i, 0)));
      gl(i, 0) += g * inv_n * (sigma - targets[i]);
    }
  };
  return out;
}

NodeId Tape::cross_view_nll(NodeId sim, bool include_diagonal) {
  check_open("cross_view_nll");
  const Mat& S = value(sim);
  if (S.rows() != S.cols()) throw ShapeError("cross_view_nll: matrix must be square");
  const Index n = S.rows();
  if (n < 2 && !include_diagonal) {
    throw ShapeError("cross_view_nll: need at least 2 rows when diagonal excluded");
  }
  // Softmax probabilities over each row's denominator set, kept for backward.
  Mat P = Mat::Zero(n, n);
  Real loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    Real m = -std::numeric_limits<Real>::infinity();
    for (Index j = 0; j < n; ++j) {
      if (!include_diagonal && j == i) continue;
      m = std::max(m, S(i, j));
    }
    Real z = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (!include_diagonal && j == i) continue;
      z += std::exp(S(i, j) - m);
    }
    for (Index j = 0; j < n; ++j) {
      if (!include_diagonal && j == i) continue;
      P(i, j) = std::exp(S(i, j) - m) / z;
    }
    loss += -S(i, i) + m + std::log(z);
  }
  Mat Y(1, 1);
  Y(0, 0) = loss / static_cast<Real>(n);
  NodeId out = push(std::move(Y));
  nodes_.back().backprop = [this, sim, P = std::move(P), out, n] {
    const Real g = nodes_[out].grad(0, 0) / static_cast<Real>(n);
    Mat& gs = grad_slot(sim);
    gs += g * P;
    gs.diagonal().array() -= g;
  };
  return out;
}

void Tape::backward(NodeId loss) {
  if (consumed_) throw StateError("backward: tape already consumed");
  const Node& l = node(loss);
  if (l.value.rows() != 1 || l.value.cols() != 1) {
    throw StateError("backward: loss must be a 1x1 node");
  }
  consumed_ = true;
  grad_slot(loss)(0, 0) += 1.0;
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    // Untouched grad means no path to the loss: nothing to propagate.
    if (n.grad.size() == 0 || !n.backprop) continue;
    n.backprop();
  }
}

}  // namespace dcah
