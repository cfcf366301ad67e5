#pragma once

// Verification helpers: central differences, smallest-eigenvalue derivative,
// a Davis-Kahan sin(Theta) evaluator and the Cayley-type Stiefel chart.

#include <functional>
#include <vector>

#include "rankflow/manifold_core.hpp"

namespace rankflow {

using VectorMap = std::function<Vector(const Vector&)>;

/// (f(x + h dir) - f(x - h dir)) / (2h).
Vector fd_directional(const VectorMap& fun, const Vector& x, const Vector& dir, double h);

struct FDReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  double h_used = 0.0;             // step with the smallest error
  double convergence_order = 0.0;  // least-squares slope of log err vs log h
  std::vector<double> hs;
  std::vector<double> errors;      // max abs error per h
};

/// Compares `exact` against fd_directional for every h in `hs` (at least 3).
FDReport fd_convergence(const VectorMap& fun, const Vector& x, const Vector& dir,
                        const Vector& exact, const std::vector<double>& hs);

struct EigMinDerivative {
  double value = 0.0;
  bool cluster_mode = false;  // smallest eigenvalue not simple; value is the cluster trace rate
  Index cluster_size = 1;
};

/// d/dt lambda_min(S + t dS) at t = 0, i.e. p_r^T dS p_r. When the smallest
/// eigenvalue is repeated (gap <= 1e-8) returns trace(P_c^T dS P_c) over the
/// cluster instead and sets cluster_mode.
EigMinDerivative eig_min_derivative(const Matrix& s, const Matrix& ds);

struct SinThetaReport {
  double delta = 0.0;
  double lhs_fro = 0.0;  // delta * ||sin Theta_0||_F
  double rhs_fro = 0.0;  // ||R||_F
  double lhs_two = 0.0;
  double rhs_two = 0.0;
  bool holds = false;
};

/// E_0 spans the top `k` eigenvectors of A, F_0 those of B = A + Delta.
/// [beta, alpha] is the range of A_0 and delta the distance of B_1's spectrum
/// from it. Throws std::domain_error when delta <= 0.
SinThetaReport sin_theta_check(const Matrix& a, const Matrix& delta_mat, Index k);

/// Symmetric Hausdorff distance between two polylines given by their
/// vertices. Each vertex is matched against segments of the other polyline in
/// a window that follows the previous match and widens while the best segment
/// sits on its edge, so the value is an upper bound of the exact distance.
double polyline_hausdorff(const std::vector<Vector>& a, const std::vector<Vector>& b,
                          Index window = 64);

struct StiefelChart {
  Matrix omega11;  // k x k, skew
  Matrix omega21;  // (n - k) x k
};

/// Chart centred at Q evaluated at U, with the split into the first k rows
/// and the remaining n - k rows. Throws SingularPointError when U_1 + Q_1 is
/// singular.
StiefelChart stiefel_chart(const Matrix& u, const Matrix& q);

}  // namespace rankflow
