#pragma once

// The DLRA system for the projected gradient flow of f(Z) = 0.5 ||Z - X||_F^2,
// its sigma_min(S)-rescaled variant, the phi/psi extension functions, an RK4
// integrator and the extended Jacobian of the rescaled system at rank-(r-1)
// spurious tuples.

#include <string>
#include <vector>

#include "rankflow/manifold_core.hpp"
#include "rankflow/spurious_points.hpp"
#include "rankflow/trajectory.hpp"

namespace rankflow {

inline constexpr double kEigGap = 1e-8;        // delta_eig for psi and phi
inline constexpr double kPhiSwitch = 1e-8;     // below this sigma_min use eigenbasis formulas
inline constexpr double kSigmaFloor = 1e-12;   // dlra halts when sigma_min(S) drops below

struct FlowState {
  FactoredPoint point;
  double t = 0.0;
};

/// Velocity (dU, dS). For the rescaled system these are F~ and H~.
struct FlowDerivative {
  Matrix dU;  // n x r
  Matrix dS;  // r x r symmetric
};

enum class FlowSystem { dlra, rescaled };

/// dU = P_perp X U S^{-1}, dS = -S + U^T X U. Throws SingularPointError when
/// sigma_min(S) <= 1e-14.
FlowDerivative dlra_rhs(const FlowState& state, const GroundTruth& gt);

/// dU = P_perp X U phi(S), dS = (-S + U^T X U) sigma_min(S).
FlowDerivative rescaled_rhs(const FlowState& state, const GroundTruth& gt);

/// Same formulas evaluated on raw factors; U need not be orthonormal and
/// P_perp is taken as I - U U^T literally. Used by RK4 stages and by
/// finite-difference oracles that step off the Stiefel manifold.
FlowDerivative dlra_rhs(const Matrix& u, const Matrix& s, const GroundTruth& gt);
FlowDerivative rescaled_rhs(const Matrix& u, const Matrix& s, const GroundTruth& gt);

/// Algebraically smallest eigenvalue of a symmetric S (sigma_min for SPSD S).
double sigma_min(const Matrix& s);

/// S^{-1} sigma_min(S), extended by p_r p_r^T at a simple zero eigenvalue.
/// Throws SingularPointError if S is (near) singular with a repeated smallest
/// eigenvalue.
Matrix phi(const Matrix& s);

/// Directional derivative of phi at S along eta (eta need not be symmetric).
/// Requires all eigenvalues of S separated by more than kEigGap.
Matrix psi(const Matrix& s, const Matrix& eta);

// ---------------------------------------------------------------------------

struct StepControls {
  double dt = 1e-2;
  double grad_tol = 0.0;       // stop once ||P_T(Z - X)||_F < grad_tol (0 = never)
  double sigma_floor = kSigmaFloor;
  bool keep_states = true;
};

enum class FlowStatus { reached_t_end, converged, sigma_floor, step_rejected };

const char* to_string(FlowStatus s);

struct IntegrationResult {
  FlowState last;
  std::vector<FlowState> states;  // includes the initial state; empty unless keep_states
  Trajectory records;
  FlowStatus status = FlowStatus::reached_t_end;
  std::string diagnostic;
};

/// Fixed-step classical RK4 with QR re-orthonormalization of U after every
/// step. The initial state is always recorded.
IntegrationResult integrate(FlowSystem system, const FactoredPoint& init, const GroundTruth& gt,
                            double t_end, const StepControls& controls = {});

// ---------------------------------------------------------------------------
// Linearization of the rescaled system.

/// Directional derivative of (F~, H~) at (U, S) along (xi1, xi2), evaluated
/// from closed forms that stay valid when S has a simple zero eigenvalue.
FlowDerivative rescaled_jacobian_apply(const Matrix& u, const Matrix& s, const GroundTruth& gt,
                                       const Matrix& xi1, const Matrix& xi2);

/// Flat coordinates for (dU, dS): vec(dU) column-major, then the orthonormal
/// symmetric coordinates of dS (column-major upper triangle, off-diagonal
/// entries scaled by sqrt(2)).
Vector flow_coordinates(const FlowDerivative& v);
FlowDerivative flow_from_coordinates(Index n, Index r, const Vector& c);

struct RescaledJacobian {
  Matrix matrix;                 // in flow_coordinates
  Eigen::VectorXcd eigenvalues;  // sorted by decreasing real part
  double missing_eigenvalue = 0.0;  // d of the dropped eigenpair
  FlowDerivative escape;         // (u_missing p_r^T, 0)
  double escape_residual = 0.0;  // ||J[escape] - d escape|| / ||d escape||
  Index positive_count = 0;      // eigenvalues with real part > 1e-8
};

/// Extended Jacobian at an s = r - 1 tuple. Throws std::invalid_argument for
/// s <= r - 2, where no C^1 extension exists.
RescaledJacobian rescaled_jacobian(const SpuriousTuple& tuple, const GroundTruth& gt);

}  // namespace rankflow
