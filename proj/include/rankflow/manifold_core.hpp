#pragma once

// Fixed-rank SPSD manifold: factored points Z = U S U^T, tangent projection,
// truncated-eigendecomposition retraction, Riemannian gradient and Hessian of
// f(Z) = 0.5 * ||Z - X||_F^2.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace rankflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kOrthTol = 1e-10;   // ||U^T U - I||_F before re-orthonormalizing
inline constexpr double kOrthReject = 1e-6; // beyond this a factor is rejected outright
inline constexpr double kGradTol = 1e-8;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when an operation needs S (or Sigma) invertible and it is not.
class SingularPointError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Ambient symmetric n x n matrix. The stored matrix is exactly symmetric.
class DenseSym {
 public:
  DenseSym() = default;
  /// Symmetrizes its argument as (A + A^T) / 2.
  explicit DenseSym(const Matrix& a);

  static DenseSym zero(Index n) { return DenseSym(Matrix::Zero(n, n)); }

  const Matrix& matrix() const { return a_; }
  Index size() const { return a_.rows(); }
  double norm() const { return a_.norm(); }

  DenseSym operator+(const DenseSym& o) const;
  DenseSym operator-(const DenseSym& o) const;
  DenseSym operator*(double s) const;

 private:
  Matrix a_;
};

double inner(const DenseSym& a, const DenseSym& b);

/// Rank-r SPSD target X = U_x diag(d) U_x^T with d strictly positive and
/// strictly decreasing.
class GroundTruth {
 public:
  /// Validates orthonormality and positivity; columns are reordered so that
  /// d is decreasing. Throws std::invalid_argument on repeated eigenvalues.
  static GroundTruth from_factors(Matrix ux, Vector d);

  Index n() const { return ux_.rows(); }
  Index r() const { return ux_.cols(); }
  const Matrix& Ux() const { return ux_; }
  const Vector& d() const { return d_; }
  Matrix dense() const;
  /// X * A computed through the factors.
  Matrix apply(const Matrix& a) const;

 private:
  GroundTruth(Matrix ux, Vector d) : ux_(std::move(ux)), d_(std::move(d)) {}
  Matrix ux_;
  Vector d_;
};

/// Z = U S U^T with U^T U = I_r (to kOrthTol) and S exactly symmetric.
/// S may be singular; such points sit on the boundary of M_r.
class FactoredPoint {
 public:
  /// Re-orthonormalizes U by QR (and sets S <- R S R^T so Z is unchanged)
  /// when ||U^T U - I||_F > kOrthTol; throws DimensionError beyond kOrthReject.
  FactoredPoint(Matrix u, Matrix s);

  Index n() const { return u_.rows(); }
  Index r() const { return u_.cols(); }
  const Matrix& U() const { return u_; }
  const Matrix& S() const { return s_; }

  Matrix dense() const { return u_ * s_ * u_.transpose(); }
  /// Eigenvalues of S, ascending.
  Vector eigenvalues() const;
  /// Smallest eigenvalue of S, i.e. sigma_r(Z) for SPSD Z.
  double sigma_r() const;
  /// True when S is nonsingular, i.e. Z is a member of M_r.
  bool in_manifold(double tol = 1e-14) const;

 private:
  Matrix u_;
  Matrix s_;
};

double orthonormality_error(const Matrix& u);

/// (U, S) -> (Q, R S R^T) where U = Q R with positive diag(R).
void reorthonormalize(Matrix& u, Matrix& s);

// ---------------------------------------------------------------------------
// Tangent space coordinates.

/// The pair (U_z, U~): U_z = U P spans Col(U) (P the eigenvectors of S, so
/// U_z^T Z U_z = Sigma is diagonal with descending entries) and U~ is an
/// orthonormal basis of the complement.
struct TangentBasis {
  Matrix Uz;
  Matrix Ut;

  Index n() const { return Uz.rows(); }
  Index r() const { return Uz.cols(); }
  /// Number of real coordinates, r(2n - r + 1)/2.
  Index dim() const;
};

TangentBasis tangent_basis(const FactoredPoint& point);

/// xi = U_z M U_z^T + U_z N U~^T + U~ N^T U_z^T, M symmetric.
struct TangentParam {
  Matrix M;  // r x r, symmetric
  Matrix N;  // r x (n - r)
  TangentBasis basis;

  DenseSym ambient() const;
};

/// Components of an ambient symmetric matrix in the given basis (the tangent
/// part only; the U~ U~^T block is dropped).
TangentParam tangent_param(const TangentBasis& basis, const DenseSym& y);

/// Coordinates in the orthonormal frame: M_ii, then sqrt(2) M_ij (i < j,
/// column-major upper triangle), then sqrt(2) N_ij (column-major).
Vector tangent_coordinates(const TangentParam& xi);
TangentParam tangent_from_coordinates(const TangentBasis& basis, const Vector& c);

// ---------------------------------------------------------------------------
// Operations.

/// P_U Y + Y P_U - P_U Y P_U.
DenseSym tangent_project(const FactoredPoint& point, const DenseSym& y);

struct Retraction {
  FactoredPoint point;
  bool rank_deficient = false;  // a retained eigenvalue was <= 0
  bool tie = false;             // r-th and (r+1)-th eigenvalue coincide
};

/// Best Frobenius approximation of W among rank <= r PSD matrices. The
/// returned S is diagonal with descending, nonnegative entries.
Retraction retract(const DenseSym& w, Index r);

/// ambient Riemannian gradient P_T(Z - X).
DenseSym riem_gradient(const FactoredPoint& point, const GroundTruth& gt);

/// Hess f(Z)[xi] = xi + P_perp (Z - X) U~ N^T Sigma^{-1} U_z^T + (transpose).
/// Throws SingularPointError when S is singular.
DenseSym riem_hessian_apply(const FactoredPoint& point, const GroundTruth& gt,
                            const TangentParam& xi);

/// Hessian as a symmetric matrix in the orthonormal frame of tangent_basis().
Matrix riem_hessian_matrix(const FactoredPoint& point, const GroundTruth& gt);

enum class Field { real, complex };

/// Local dimension of M_r in F^{m x n}.
Index manifold_dim(Index m, Index n, Index r, Field field, bool hermitian);

// ---------------------------------------------------------------------------
// Factored machinery used by the iterative solvers. A tangent vector at
// (U, S) is stored as xi = U M U^T + K U^T + U K^T with U^T K = 0.

struct FactoredTangent {
  Matrix M;  // r x r symmetric
  Matrix K;  // n x r

  double norm() const;
  Matrix dense(const Matrix& u) const;
};

FactoredTangent riem_gradient_factored(const FactoredPoint& point, const GroundTruth& gt);

/// R(Z - step * xi) without forming n x n matrices when n >= 2r.
Retraction retract_step(const FactoredPoint& point, const FactoredTangent& xi, double step);

double objective(const FactoredPoint& point, const GroundTruth& gt);
/// ||Z - X||_F computed in the joint column space of U and U_x.
double distance_to_truth(const FactoredPoint& point, const GroundTruth& gt);
/// ||U1 S1 U1^T - U2 S2 U2^T||_F.
double factored_distance(const Matrix& u1, const Matrix& s1, const Matrix& u2,
                         const Matrix& s2);

}  // namespace rankflow
