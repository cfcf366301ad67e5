#pragma once

// Riemannian gradient descent Z_{k+1} = R(Z_k - alpha_k P_T(Z_k - X)) with a
// fixed step or the sigma_r-scaled step alpha_k = alpha * sigma_r(Z_k), and the
// Jacobian of the varying-step iteration map at rank-(r-1) spurious tuples.

#include <functional>
#include <string>

#include "rankflow/manifold_core.hpp"
#include "rankflow/spurious_points.hpp"
#include "rankflow/trajectory.hpp"

namespace rankflow {

enum class StepMode { fixed, varying };

const char* to_string(StepMode m);
StepMode step_mode_from_string(const std::string& s);

struct GDConfig {
  double alpha = 0.2;
  StepMode mode = StepMode::fixed;
  long max_iters = 5000;
  double tol_dist = 1e-6;
  double grad_tol = kGradTol;  // below this (and not at X) the run is near_spurious

  /// Throws std::invalid_argument for alpha <= 0, max_iters < 0, tol_dist < 0.
  void validate() const;
};

/// Stepsize used at `point`.
double step_size(const FactoredPoint& point, const GDConfig& cfg);

/// One iteration. The retraction's rank-deficiency flag is passed through.
Retraction rgd_step(const FactoredPoint& point, const GroundTruth& gt, const GDConfig& cfg);

enum class GDStatus { converged_to_X, near_spurious, max_iters };

const char* to_string(GDStatus s);

struct GDResult {
  FactoredPoint final_point;
  Trajectory records;  // k = 0 .. iterations
  GDStatus status = GDStatus::max_iters;
  long iterations = 0;
  bool rank_dropped = false;  // a retraction lost rank; the run stopped there
  double min_step = 0.0;      // smallest alpha_k used
};

/// Called with (k, Z_k) for every recorded iterate.
using IterateObserver = std::function<void(long, const FactoredPoint&)>;

GDResult run_rgd(const FactoredPoint& init, const GroundTruth& gt, const GDConfig& cfg,
                 const IterateObserver& observer = {});

// ---------------------------------------------------------------------------
// Iteration Jacobian.

/// Basis at a rank-(r-1) tuple: U_z = (U1, U3) so that Sigma = diag(D1, 0),
/// and U~ with the missing eigenvector u_2 as its first column.
TangentBasis spurious_tangent_basis(const SpuriousTuple& tuple, const GroundTruth& gt);

/// sigma_r * Hess f[xi] at the point U_z diag(sigma) U_z^T, in the closed form
/// sigma_r xi + P_perp (Z - X) U~ N^T phi(Sigma) U_z^T + (transpose) that stays
/// finite when sigma_r = 0. `sigma` must be ordered like the columns of U_z,
/// smallest last.
DenseSym scaled_hessian_apply(const TangentBasis& basis, const Vector& sigma,
                              const GroundTruth& gt, const TangentParam& xi);

struct IterationJacobian {
  Matrix matrix;           // in tangent_coordinates of `basis`
  TangentBasis basis;
  Vector eigenvalues;      // descending
  double escape_eigenvalue = 0.0;
  Index escape_coordinate = 0;  // index of N(r, 1) in tangent_coordinates
  Index above_one = 0;     // eigenvalues > 1 + 1e-6
  Index below_one = 0;     // eigenvalues < 1 - 1e-6
  double max_dev_rest = 0.0;  // max |lambda - 1| over the remaining eigenvalues
};

/// Limit of D(Z -> R(Z - alpha sigma_r(Z) P_T(Z - X))) at the tuple, assembled
/// as I - alpha * lim sigma_r Hess. Rejects s <= r - 2.
IterationJacobian iteration_jacobian(const SpuriousTuple& tuple, const GroundTruth& gt,
                                     double alpha);

/// Central-difference Jacobian of the varying-step iteration map at the
/// interior point Z# + epsilon u_3 u_3^T, expressed in the same basis.
/// Input curves are c -> R(Z_eps + xi(c)); outputs are read back through
/// tangent_param. Returns the matrix in tangent_coordinates.
Matrix iteration_jacobian_fd(const SpuriousTuple& tuple, const GroundTruth& gt, double alpha,
                             double epsilon, double h);

}  // namespace rankflow
