#include "rankflow/random.hpp"

namespace rankflow {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Matrix Rng::gaussian(Index rows, Index cols) {
  Matrix g(rows, cols);
  // Fill column-major explicitly; the draw order is part of reproducibility.
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) g(i, j) = gaussian();
  }
  return g;
}

Matrix Rng::gaussian_symmetric(Index n) {
  Matrix g(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i <= j; ++i) g(i, j) = g(j, i) = gaussian();
  }
  return g;
}

Matrix Rng::haar_orthonormal(Index n, Index k) {
  Matrix g = gaussian(n, k);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, k);
  const auto& r = qr.matrixQR();
  for (Index j = 0; j < k; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

Matrix Rng::orthonormal_complement_sample(const Matrix& avoid, Index k) {
  Matrix g = gaussian(avoid.rows(), k);
  // Two projection passes bring ||avoid^T q|| down to roundoff.
  for (int pass = 0; pass < 2; ++pass) g -= avoid * (avoid.transpose() * g);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(avoid.rows(), k);
  const auto& r = qr.matrixQR();
  for (Index j = 0; j < k; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  q -= avoid * (avoid.transpose() * q);
  Eigen::HouseholderQR<Matrix> qr2(q);
  Matrix q2 = qr2.householderQ() * Matrix::Identity(avoid.rows(), k);
  for (Index j = 0; j < k; ++j) {
    if (qr2.matrixQR()(j, j) < 0) q2.col(j) = -q2.col(j);
  }
  return q2;
}

}  // namespace rankflow
