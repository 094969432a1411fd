#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace dcah {

using Real = double;
using Index = Eigen::Index;

// All dense math is 64-bit, row-major: embeddings are row-per-node and the
// propagation kernels stream rows.
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using SpMat = Eigen::SparseMatrix<Real, Eigen::RowMajor>;  // CSR

using Rng = std::mt19937_64;

// =============================================================================
// Error taxonomy. Each maps to a distinct CLI exit code.
// =============================================================================

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// =============================================================================
// Small helpers
// =============================================================================

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InputError(msg);
}

inline void require_shape(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

// Derives an independent stream from a master seed and a stage label, so each
// pipeline stage is reproducible in isolation.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage);

// Random matrix with i.i.d. normal(0, scale) entries.
Mat random_normal(Index rows, Index cols, Real scale, Rng& rng);

}  // namespace dcah
