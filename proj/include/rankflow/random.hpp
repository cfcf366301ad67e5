#pragma once

// Seeded random matrices. Every generator is a pure function of its seed so
// that experiment fan-out is reproducible run by run.

#include <cstdint>
#include <random>

#include "rankflow/manifold_core.hpp"

namespace rankflow {

/// splitmix64 finalizer applied to (seed, stream); used to derive independent
/// substream seeds from one run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double gaussian() { return normal_(engine_); }
  Matrix gaussian(Index rows, Index cols);
  /// Symmetric matrix with iid N(0,1) upper triangle.
  Matrix gaussian_symmetric(Index n);
  /// Haar-distributed n x k orthonormal matrix (QR of a Gaussian matrix with
  /// the signs of diag(R) fixed positive).
  Matrix haar_orthonormal(Index n, Index k);
  /// Haar orthonormal n x k matrix whose columns are orthogonal to `avoid`.
  Matrix orthonormal_complement_sample(const Matrix& avoid, Index k);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace rankflow
