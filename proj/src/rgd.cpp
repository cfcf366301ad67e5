#include "rankflow/rgd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rankflow/oracles.hpp"

namespace rankflow {

const char* to_string(StepMode m) { return m == StepMode::fixed ? "fixed" : "varying"; }

StepMode step_mode_from_string(const std::string& s) {
  if (s == "fixed") return StepMode::fixed;
  if (s == "varying") return StepMode::varying;
  throw std::invalid_argument("unknown step mode '" + s + "' (expected fixed or varying)");
}

const char* to_string(GDStatus s) {
  switch (s) {
    case GDStatus::converged_to_X: return "converged_to_X";
    case GDStatus::near_spurious: return "near_spurious";
    case GDStatus::max_iters: return "max_iters";
  }
  return "unknown";
}

void GDConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("GDConfig: alpha must be positive");
  if (max_iters < 0) throw std::invalid_argument("GDConfig: max_iters must be nonnegative");
  if (!(tol_dist >= 0.0)) throw std::invalid_argument("GDConfig: tol_dist must be nonnegative");
}

double step_size(const FactoredPoint& point, const GDConfig& cfg) {
  return cfg.mode == StepMode::fixed ? cfg.alpha : cfg.alpha * point.sigma_r();
}

Retraction rgd_step(const FactoredPoint& point, const GroundTruth& gt, const GDConfig& cfg) {
  return retract_step(point, riem_gradient_factored(point, gt), step_size(point, cfg));
}

GDResult run_rgd(const FactoredPoint& init, const GroundTruth& gt, const GDConfig& cfg,
                 const IterateObserver& observer) {
  cfg.validate();
  if (init.n() != gt.n() || init.r() != gt.r()) {
    throw DimensionError("run_rgd: initial point does not match the ground truth");
  }
  GDResult res{init, {}, GDStatus::max_iters, 0, false, std::numeric_limits<double>::infinity()};
  FactoredPoint z = init;
  for (long k = 0;; ++k) {
    FactoredTangent g = riem_gradient_factored(z, gt);
    const double dist = distance_to_truth(z, gt);
    const double gn = g.norm();
    res.records.push_back(TrajectoryRecord{static_cast<double>(k), dist, z.sigma_r(), gn});
    if (observer) observer(k, z);
    res.iterations = k;
    if (dist < cfg.tol_dist) {
      res.status = GDStatus::converged_to_X;
      break;
    }
    if (gn < cfg.grad_tol) {
      res.status = GDStatus::near_spurious;
      break;
    }
    if (k == cfg.max_iters) {
      res.status = GDStatus::max_iters;
      break;
    }
    const double step = step_size(z, cfg);
    res.min_step = std::min(res.min_step, step);
    Retraction next = retract_step(z, g, step);
    z = next.point;
    if (next.rank_deficient) {
      res.rank_dropped = true;
      res.iterations = k + 1;
      res.records.push_back(TrajectoryRecord{static_cast<double>(k + 1), distance_to_truth(z, gt),
                                             z.sigma_r(),
                                             riem_gradient_factored(z, gt).norm()});
      if (observer) observer(k + 1, z);
      res.status = GDStatus::near_spurious;
      break;
    }
  }
  res.final_point = z;
  return res;
}

// ---------------------------------------------------------------------------

TangentBasis spurious_tangent_basis(const SpuriousTuple& tuple, const GroundTruth& gt) {
  const Index n = tuple.n();
  const Index r = tuple.r();
  if (tuple.point.s != r - 1) {
    throw std::invalid_argument("spurious_tangent_basis: requires a rank-(r-1) tuple");
  }
  (void)gt;
  Matrix uz(n, r);
  uz << tuple.point.U1, tuple.U3;
  // Complement of U_z with u_2 first: QR of [U_z, u_2, I] keeps that order.
  Matrix seed(n, r + 1 + n);
  seed << uz, tuple.point.U2.col(0), Matrix::Identity(n, n);
  Eigen::HouseholderQR<Matrix> qr(seed);
  Matrix q = qr.householderQ();
  Matrix ut = q.rightCols(n - r);
  // Fix the sign so that the first complement column is +u_2.
  if (ut.col(0).dot(tuple.point.U2.col(0)) < 0) ut.col(0) = -ut.col(0);
  return TangentBasis{std::move(uz), std::move(ut)};
}

DenseSym scaled_hessian_apply(const TangentBasis& basis, const Vector& sigma,
                              const GroundTruth& gt, const TangentParam& xi) {
  const Index r = basis.r();
  if (sigma.size() != r || gt.n() != basis.n()) {
    throw DimensionError("scaled_hessian_apply: dimension mismatch");
  }
  const double sr = sigma(r - 1);
  Vector w(r);
  for (Index i = 0; i + 1 < r; ++i) w(i) = sr / sigma(i);
  w(r - 1) = 1.0;
  const Matrix& uz = basis.Uz;
  Matrix v = basis.Ut * xi.N.transpose();
  Matrix xv = gt.apply(v);
  Matrix pxv = -(xv - uz * (uz.transpose() * xv));
  Matrix term = pxv * w.asDiagonal() * uz.transpose();
  return xi.ambient() * sr + DenseSym(term + term.transpose());
}

IterationJacobian iteration_jacobian(const SpuriousTuple& tuple, const GroundTruth& gt,
                                     double alpha) {
  const Index r = tuple.r();
  if (tuple.point.s != r - 1) {
    throw std::invalid_argument("iteration_jacobian: requires a rank-(r-1) tuple; s = " +
                                std::to_string(tuple.point.s));
  }
  if (!(alpha > 0.0)) throw std::invalid_argument("iteration_jacobian: alpha must be positive");
  IterationJacobian out;
  out.basis = spurious_tangent_basis(tuple, gt);
  Vector sigma = Vector::Zero(r);
  sigma.head(r - 1) = tuple.point.D1;
  const Index d = out.basis.dim();
  out.matrix.resize(d, d);
  for (Index j = 0; j < d; ++j) {
    TangentParam e = tangent_from_coordinates(out.basis, Vector::Unit(d, j));
    Vector h = tangent_coordinates(tangent_param(out.basis, scaled_hessian_apply(out.basis, sigma, gt, e)));
    out.matrix.col(j) = Vector::Unit(d, j) - alpha * h;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (out.matrix + out.matrix.transpose()),
                                           Eigen::EigenvaluesOnly);
  out.eigenvalues = es.eigenvalues().reverse();
  out.escape_coordinate = r * (r + 1) / 2 + (r - 1);
  out.escape_eigenvalue = out.eigenvalues(0);
  for (Index i = 0; i < d; ++i) {
    const double l = out.eigenvalues(i);
    if (l > 1.0 + 1e-6) ++out.above_one;
    if (l < 1.0 - 1e-6) ++out.below_one;
    if (i > 0) out.max_dev_rest = std::max(out.max_dev_rest, std::abs(l - 1.0));
  }
  return out;
}

Matrix iteration_jacobian_fd(const SpuriousTuple& tuple, const GroundTruth& gt, double alpha,
                             double epsilon, double h) {
  const Index r = tuple.r();
  TangentBasis basis = spurious_tangent_basis(tuple, gt);
  Vector sigma(r);
  sigma.head(r - 1) = tuple.point.D1;
  sigma(r - 1) = epsilon;
  const FactoredPoint base(basis.Uz, sigma.asDiagonal().toDenseMatrix());
  const DenseSym zbase(base.dense());
  const GDConfig cfg{alpha, StepMode::varying, 1, 0.0, 0.0};
  const Index d = basis.dim();
  auto map = [&](const Vector& c) -> Vector {
    TangentParam xi = tangent_from_coordinates(basis, c);
    Retraction z = retract(zbase + xi.ambient(), r);
    Retraction next = rgd_step(z.point, gt, cfg);
    return tangent_coordinates(tangent_param(basis, DenseSym(next.point.dense()) - zbase));
  };
  Matrix j(d, d);
  const Vector zero = Vector::Zero(d);
  for (Index k = 0; k < d; ++k) j.col(k) = fd_directional(map, zero, Vector::Unit(d, k), h);
  return j;
}

}  // namespace rankflow
