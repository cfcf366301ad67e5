#pragma once

// Ground truths, the spurious critical set S_# of f(Z) = 0.5 ||Z - X||_F^2 and
// parameterized tuples (U#, S#) lying over each spurious point.

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "rankflow/manifold_core.hpp"

namespace rankflow {

/// Random U_x (Haar, seeded) with the given eigenvalues. Eigenvalues must be
/// positive and pairwise distinct; they are stored in decreasing order.
GroundTruth make_ground_truth(Index n, const std::vector<double>& eigenvalues,
                              std::uint64_t seed);

/// Z# = sum_i eta_i d_i u_i u_i^T for a mask that is not all ones.
struct SpuriousPoint {
  std::vector<bool> mask;  // eta, indexed like gt.d()
  Index s = 0;             // popcount(mask)
  Matrix U1;               // retained eigenvectors, n x s
  Vector D1;
  Matrix U2;               // missing eigenvectors, n x (r - s)
  Vector D2;

  Matrix dense() const { return U1 * D1.asDiagonal() * U1.transpose(); }
  /// 0.5 * sum of squared missing eigenvalues.
  double objective_gap() const { return 0.5 * D2.squaredNorm(); }
};

SpuriousPoint spurious_point(const GroundTruth& gt, const std::vector<bool>& mask);

/// All 2^r - 1 masks except all-ones, ordered by the integer whose bit i is
/// eta_i.
std::vector<SpuriousPoint> enumerate_spurious(const GroundTruth& gt);

/// (U#, S#) with U# = (U1, U3) P#^T, S# = P# diag(D1, 0) P#^T, U3 perp U_x.
struct SpuriousTuple {
  SpuriousPoint point;
  Matrix U;      // U#
  Matrix S;      // S#
  Matrix P;      // P#, r x r orthogonal
  Matrix U3;     // n x (r - s)
  Vector sigma;  // diag(D1, 0), the eigenvalues of S# in P#'s column order
  Vector p_r;    // last column of P#; the null direction of S# when s = r - 1

  Index n() const { return U.rows(); }
  Index r() const { return U.cols(); }
  Matrix dense() const { return U * S * U.transpose(); }
  FactoredPoint factored() const { return FactoredPoint(U, S); }
};

/// Assembles a tuple from explicit U3 and P#; validates the constraints.
SpuriousTuple make_spurious_tuple(const SpuriousPoint& sp, const GroundTruth& gt, Matrix u3,
                                  Matrix p);

/// Seeded U3 in span(U_x)^perp and Haar P#. Throws std::invalid_argument when
/// n - r < r - s.
SpuriousTuple sample_spurious_tuple(const SpuriousPoint& sp, const GroundTruth& gt,
                                    std::uint64_t seed);

/// retract(Z# + epsilon * E, r), E a seeded symmetric Gaussian with unit
/// Frobenius norm; resampled (up to 16 draws) until the result has full rank.
FactoredPoint perturb_near(const SpuriousTuple& tuple, double epsilon, std::uint64_t seed);

/// Deterministic variant with a caller-supplied direction (not normalized).
Retraction perturb_along(const SpuriousTuple& tuple, const DenseSym& direction);

/// Provenance record for a spurious point.
struct SpuriousDescriptor {
  std::vector<bool> mask;
  std::vector<double> eigenvalues;
  std::uint64_t seed = 0;

  bool operator==(const SpuriousDescriptor&) const = default;
};

void to_json(nlohmann::json& j, const SpuriousDescriptor& d);
void from_json(const nlohmann::json& j, SpuriousDescriptor& d);

}  // namespace rankflow
