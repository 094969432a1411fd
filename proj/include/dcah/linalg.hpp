#pragma once

#include "dcah/common.hpp"

#include <vector>

namespace dcah {

/// Sparse x dense product with explicit shape checking.
inline Mat spmm(const SpMat& s, const Mat& d) {
  if (s.cols() != d.rows()) throw ShapeError("spmm: inner dimensions differ");
  return s * d;
}

/// Builds a CSR matrix from (row, col, value) triplets; duplicate entries sum.
SpMat sparse_from_triplets(Index rows, Index cols,
                           const std::vector<Eigen::Triplet<Real>>& triplets);

inline Mat dense(const SpMat& s) { return Mat(s); }

/// Largest |eigenvalue| estimate by power iteration, for operator diagnostics.
Real spectral_radius(const SpMat& s, int iters = 200, std::uint64_t seed = 7);

}  // namespace dcah
