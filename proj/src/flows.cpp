#include "rankflow/flows.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

namespace rankflow {

namespace {

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

// (I - U U^T) A without forming the n x n projector.
Matrix perp(const Matrix& u, const Matrix& a) { return a - u * (u.transpose() * a); }

void check_shapes(const Matrix& u, const Matrix& s, const GroundTruth& gt) {
  if (u.rows() != gt.n() || u.cols() != s.rows() || s.rows() != s.cols()) {
    throw DimensionError("flows: incompatible U, S or ground truth dimensions");
  }
}

struct SymEig {
  Vector lam;  // ascending
  Matrix vec;
};

SymEig sym_eig(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s));
  return SymEig{es.eigenvalues(), es.eigenvectors()};
}

double min_gap(const Vector& lam) {
  double gap = std::numeric_limits<double>::infinity();
  for (Index i = 1; i < lam.size(); ++i) gap = std::min(gap, lam(i) - lam(i - 1));
  return gap;
}

}  // namespace

double sigma_min(const Matrix& s) {
  if (s.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

Matrix phi(const Matrix& s) {
  SymEig e = sym_eig(s);
  const Index r = s.rows();
  const double sig = e.lam(0);
  if (std::abs(sig) < kPhiSwitch && r > 1 && e.lam(1) - e.lam(0) <= kEigGap) {
    throw SingularPointError("phi: repeated smallest eigenvalue at a singular S");
  }
  if (std::abs(sig) >= kPhiSwitch) {
    Matrix sinv = e.vec * e.lam.cwiseInverse().asDiagonal() * e.vec.transpose();
    return symmetrize(sinv * sig);
  }
  // Eigenbasis form: sigma/lambda_i on the other eigenvectors, 1 on p_r.
  Vector w(r);
  w(0) = 1.0;
  for (Index i = 1; i < r; ++i) w(i) = sig / e.lam(i);
  return symmetrize(e.vec * w.asDiagonal() * e.vec.transpose());
}

Matrix psi(const Matrix& s, const Matrix& eta) {
  if (s.rows() != s.cols() || eta.rows() != s.rows() || eta.cols() != s.cols()) {
    throw DimensionError("psi: shape mismatch");
  }
  SymEig e = sym_eig(s);
  const Index r = s.rows();
  if (min_gap(e.lam) <= kEigGap) {
    throw std::domain_error("psi: eigenvalues of S are not separated by more than 1e-8");
  }
  const double sig = e.lam(0);
  const Vector p = e.vec.col(0);
  const double drift = p.dot(eta * p);
  if (std::abs(sig) >= kPhiSwitch) {
    Matrix sinv = e.vec * e.lam.cwiseInverse().asDiagonal() * e.vec.transpose();
    return -sinv * eta * sinv * sig + sinv * drift;
  }
  // Index 0 is p_r here. Entries touching p_r have the sigma factor cancelled
  // analytically.
  Matrix h = e.vec.transpose() * eta * e.vec;
  Matrix out = Matrix::Zero(r, r);
  for (Index i = 1; i < r; ++i) {
    for (Index j = 1; j < r; ++j) out(i, j) = -sig * h(i, j) / (e.lam(i) * e.lam(j));
    out(i, i) += h(0, 0) / e.lam(i);
    out(i, 0) = -h(i, 0) / e.lam(i);
    out(0, i) = -h(0, i) / e.lam(i);
  }
  return e.vec * out * e.vec.transpose();
}

// ---------------------------------------------------------------------------

FlowDerivative dlra_rhs(const Matrix& u, const Matrix& s, const GroundTruth& gt) {
  check_shapes(u, s, gt);
  SymEig e = sym_eig(s);
  if (s.rows() > 0 && e.lam.cwiseAbs().minCoeff() <= 1e-14) {
    throw SingularPointError("dlra_rhs: S is singular");
  }
  Matrix sinv = e.vec * e.lam.cwiseInverse().asDiagonal() * e.vec.transpose();
  Matrix xu = gt.apply(u);
  return FlowDerivative{perp(u, xu) * sinv, symmetrize(-s + u.transpose() * xu)};
}

FlowDerivative rescaled_rhs(const Matrix& u, const Matrix& s, const GroundTruth& gt) {
  check_shapes(u, s, gt);
  Matrix xu = gt.apply(u);
  return FlowDerivative{perp(u, xu) * phi(s), symmetrize(-s + u.transpose() * xu) * sigma_min(s)};
}

FlowDerivative dlra_rhs(const FlowState& state, const GroundTruth& gt) {
  return dlra_rhs(state.point.U(), state.point.S(), gt);
}

FlowDerivative rescaled_rhs(const FlowState& state, const GroundTruth& gt) {
  return rescaled_rhs(state.point.U(), state.point.S(), gt);
}

// ---------------------------------------------------------------------------

const char* to_string(FlowStatus s) {
  switch (s) {
    case FlowStatus::reached_t_end: return "reached_t_end";
    case FlowStatus::converged: return "converged";
    case FlowStatus::sigma_floor: return "sigma_floor";
    case FlowStatus::step_rejected: return "step_rejected";
  }
  return "unknown";
}

namespace {

TrajectoryRecord record_of(const FactoredPoint& p, const GroundTruth& gt, double t) {
  return TrajectoryRecord{t, distance_to_truth(p, gt), p.sigma_r(),
                          riem_gradient_factored(p, gt).norm()};
}

}  // namespace

IntegrationResult integrate(FlowSystem system, const FactoredPoint& init, const GroundTruth& gt,
                            double t_end, const StepControls& controls) {
  if (init.n() != gt.n() || init.r() != gt.r()) {
    throw DimensionError("integrate: initial point does not match the ground truth");
  }
  if (!(t_end >= 0.0)) throw std::invalid_argument("integrate: t_end must be nonnegative");
  if (!(controls.dt > 0.0)) throw std::invalid_argument("integrate: dt must be positive");

  IntegrationResult res{FlowState{init, 0.0}, {}, {}, FlowStatus::reached_t_end, {}};
  if (controls.keep_states) res.states.push_back(res.last);
  res.records.push_back(record_of(init, gt, 0.0));
  if (controls.grad_tol > 0.0 && res.records.back().grad_norm < controls.grad_tol) {
    res.status = FlowStatus::converged;
    return res;
  }

  auto rhs = [&](const Matrix& u, const Matrix& s) {
    return system == FlowSystem::dlra ? dlra_rhs(u, s, gt) : rescaled_rhs(u, s, gt);
  };

  const auto steps = static_cast<long>(std::ceil(t_end / controls.dt - 1e-9));
  Matrix u = init.U();
  Matrix s = init.S();
  for (long k = 0; k < steps; ++k) {
    const double t0 = k * controls.dt;
    const double t1 = std::min(t_end, (k + 1) * controls.dt);
    const double h = t1 - t0;
    Matrix un, sn;
    try {
      FlowDerivative k1 = rhs(u, s);
      FlowDerivative k2 = rhs(u + 0.5 * h * k1.dU, s + 0.5 * h * k1.dS);
      FlowDerivative k3 = rhs(u + 0.5 * h * k2.dU, s + 0.5 * h * k2.dS);
      FlowDerivative k4 = rhs(u + h * k3.dU, s + h * k3.dS);
      un = u + (h / 6.0) * (k1.dU + 2.0 * k2.dU + 2.0 * k3.dU + k4.dU);
      sn = symmetrize(s + (h / 6.0) * (k1.dS + 2.0 * k2.dS + 2.0 * k3.dS + k4.dS));
    } catch (const SingularPointError& e) {
      res.status = FlowStatus::sigma_floor;
      res.diagnostic = std::string("singular S inside an RK4 stage at t = ") + std::to_string(t0);
      return res;
    }
    const double drift = orthonormality_error(un);
    if (!(drift <= kOrthReject)) {
      res.status = FlowStatus::step_rejected;
      res.diagnostic = "||U^T U - I||_F = " + std::to_string(drift) + " after step at t = " +
                       std::to_string(t0) + "; reduce dt";
      return res;
    }
    reorthonormalize(un, sn);
    u = std::move(un);
    s = std::move(sn);
    res.last = FlowState{FactoredPoint(u, s), t1};
    if (controls.keep_states) res.states.push_back(res.last);
    res.records.push_back(record_of(res.last.point, gt, t1));
    if (system == FlowSystem::dlra && sigma_min(s) < controls.sigma_floor) {
      res.status = FlowStatus::sigma_floor;
      res.diagnostic = "sigma_min(S) fell below the floor at t = " + std::to_string(t1);
      return res;
    }
    if (controls.grad_tol > 0.0 && res.records.back().grad_norm < controls.grad_tol) {
      res.status = FlowStatus::converged;
      return res;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------

FlowDerivative rescaled_jacobian_apply(const Matrix& u, const Matrix& s, const GroundTruth& gt,
                                       const Matrix& xi1, const Matrix& xi2) {
  check_shapes(u, s, gt);
  if (xi1.rows() != u.rows() || xi1.cols() != u.cols() || xi2.rows() != s.rows() ||
      xi2.cols() != s.cols()) {
    throw DimensionError("rescaled_jacobian_apply: direction shape mismatch");
  }
  SymEig e = sym_eig(s);
  const double sig = e.lam(0);
  const Vector p = e.vec.col(0);
  const Matrix ph = phi(s);
  const Matrix xu = gt.apply(u);
  const Matrix xxi = gt.apply(xi1);
  // d(I - U U^T) = -(xi U^T + U xi^T)
  Matrix d_perp_xu = -(xi1 * (u.transpose() * xu) + u * (xi1.transpose() * xu));
  Matrix du = (d_perp_xu + perp(u, xxi)) * ph + perp(u, xu) * psi(s, xi2);
  Matrix h = -s + u.transpose() * xu;
  Matrix dh = xi1.transpose() * xu + u.transpose() * xxi - xi2;
  Matrix ds = dh * sig + h * p.dot(xi2 * p);
  return FlowDerivative{std::move(du), symmetrize(ds)};
}

Vector flow_coordinates(const FlowDerivative& v) {
  const Index n = v.dU.rows();
  const Index r = v.dU.cols();
  Vector c(n * r + r * (r + 1) / 2);
  c.head(n * r) = Eigen::Map<const Vector>(v.dU.data(), n * r);
  Index k = n * r;
  const double s2 = std::sqrt(2.0);
  for (Index j = 0; j < r; ++j) {
    for (Index i = 0; i <= j; ++i) c(k++) = (i == j) ? v.dS(i, i) : s2 * 0.5 * (v.dS(i, j) + v.dS(j, i));
  }
  return c;
}

FlowDerivative flow_from_coordinates(Index n, Index r, const Vector& c) {
  if (c.size() != n * r + r * (r + 1) / 2) {
    throw DimensionError("flow_from_coordinates: wrong coordinate count");
  }
  Matrix du = Eigen::Map<const Matrix>(c.data(), n, r);
  Matrix ds = Matrix::Zero(r, r);
  Index k = n * r;
  const double s2 = std::sqrt(2.0);
  for (Index j = 0; j < r; ++j) {
    for (Index i = 0; i <= j; ++i) {
      if (i == j) {
        ds(i, i) = c(k++);
      } else {
        ds(i, j) = ds(j, i) = c(k++) / s2;
      }
    }
  }
  return FlowDerivative{std::move(du), std::move(ds)};
}

RescaledJacobian rescaled_jacobian(const SpuriousTuple& tuple, const GroundTruth& gt) {
  const Index n = tuple.n();
  const Index r = tuple.r();
  if (tuple.point.s != r - 1) {
    throw std::invalid_argument("rescaled_jacobian: requires a rank-(r-1) tuple; s = " +
                                std::to_string(tuple.point.s) + ", r = " + std::to_string(r));
  }
  const Index d = n * r + r * (r + 1) / 2;
  RescaledJacobian out;
  out.matrix.resize(d, d);
  for (Index j = 0; j < d; ++j) {
    FlowDerivative e = flow_from_coordinates(n, r, Vector::Unit(d, j));
    out.matrix.col(j) = flow_coordinates(rescaled_jacobian_apply(tuple.U, tuple.S, gt, e.dU, e.dS));
  }
  Eigen::EigenSolver<Matrix> es(out.matrix, false);
  out.eigenvalues = es.eigenvalues();
  std::sort(out.eigenvalues.data(), out.eigenvalues.data() + d,
            [](const std::complex<double>& a, const std::complex<double>& b) {
              return a.real() > b.real();
            });
  for (Index i = 0; i < d; ++i) out.positive_count += out.eigenvalues(i).real() > 1e-8 ? 1 : 0;

  out.missing_eigenvalue = tuple.point.D2(0);
  out.escape = FlowDerivative{tuple.point.U2.col(0) * tuple.p_r.transpose(), Matrix::Zero(r, r)};
  FlowDerivative img = rescaled_jacobian_apply(tuple.U, tuple.S, gt, out.escape.dU, out.escape.dS);
  const double scale = out.missing_eigenvalue * out.escape.dU.norm();
  out.escape_residual = std::sqrt((img.dU - out.missing_eigenvalue * out.escape.dU).squaredNorm() +
                                  img.dS.squaredNorm()) /
                        scale;
  return out;
}

}  // namespace rankflow
