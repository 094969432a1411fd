#include "dcah/common.hpp"

namespace dcah {

namespace {

// splitmix64 finalizer; decorrelates stage streams from the master seed.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view stage) {
  std::uint64_t h = mix(master);
  for (char c : stage) h = mix(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
  return h;
}

Mat random_normal(Index rows, Index cols, Real scale, Rng& rng) {
  std::normal_distribution<Real> normal(0.0, scale);
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

}  // namespace dcah
