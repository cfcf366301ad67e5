#include "rankflow/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rankflow {

Vector fd_directional(const VectorMap& fun, const Vector& x, const Vector& dir, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_directional: h must be positive");
  if (x.size() != dir.size()) throw DimensionError("fd_directional: x and dir differ in size");
  Vector fp = fun(x + h * dir);
  Vector fm = fun(x - h * dir);
  if (fp.size() != fm.size()) throw std::runtime_error("fd_directional: output size changed");
  return (fp - fm) / (2.0 * h);
}

FDReport fd_convergence(const VectorMap& fun, const Vector& x, const Vector& dir,
                        const Vector& exact, const std::vector<double>& hs) {
  if (hs.size() < 3) throw std::invalid_argument("fd_convergence: need at least 3 step sizes");
  FDReport rep;
  rep.hs = hs;
  double best = std::numeric_limits<double>::infinity();
  const double scale = std::max(exact.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  for (double h : hs) {
    Vector est = fd_directional(fun, x, dir, h);
    if (est.size() != exact.size()) throw DimensionError("fd_convergence: size mismatch");
    const double err = (est - exact).cwiseAbs().maxCoeff();
    rep.errors.push_back(err);
    if (err < best) {
      best = err;
      rep.h_used = h;
    }
  }
  rep.max_abs_err = best;
  rep.max_rel_err = best / scale;
  // slope of log(err) against log(h)
  double mx = 0, my = 0;
  const double m = static_cast<double>(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) {
    mx += std::log(hs[i]);
    my += std::log(std::max(rep.errors[i], std::numeric_limits<double>::min()));
  }
  mx /= m;
  my /= m;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const double dx = std::log(hs[i]) - mx;
    sxy += dx * (std::log(std::max(rep.errors[i], std::numeric_limits<double>::min())) - my);
    sxx += dx * dx;
  }
  rep.convergence_order = sxy / sxx;
  return rep;
}

EigMinDerivative eig_min_derivative(const Matrix& s, const Matrix& ds) {
  if (s.rows() != s.cols() || ds.rows() != s.rows() || ds.cols() != s.cols() || s.rows() == 0) {
    throw DimensionError("eig_min_derivative: shape mismatch");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()));
  const Vector& lam = es.eigenvalues();
  Index c = 1;
  while (c < lam.size() && lam(c) - lam(0) <= 1e-8) ++c;
  Matrix pc = es.eigenvectors().leftCols(c);
  EigMinDerivative out;
  out.cluster_size = c;
  out.cluster_mode = c > 1;
  out.value = (pc.transpose() * ds * pc).trace();
  return out;
}

SinThetaReport sin_theta_check(const Matrix& a, const Matrix& delta_mat, Index k) {
  const Index n = a.rows();
  if (a.cols() != n || delta_mat.rows() != n || delta_mat.cols() != n) {
    throw DimensionError("sin_theta_check: shape mismatch");
  }
  if (k < 1 || k >= n) throw std::invalid_argument("sin_theta_check: need 1 <= k < n");
  Matrix as = 0.5 * (a + a.transpose());
  Matrix bs = as + 0.5 * (delta_mat + delta_mat.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> ea(as);
  Eigen::SelfAdjointEigenSolver<Matrix> eb(bs);
  // ascending order; the top k are the last k
  Matrix e0 = ea.eigenvectors().rightCols(k);
  Vector a0 = ea.eigenvalues().tail(k);
  Matrix f1 = eb.eigenvectors().leftCols(n - k);
  Vector b1 = eb.eigenvalues().head(n - k);
  const double beta = a0.minCoeff();
  const double alpha = a0.maxCoeff();
  double delta = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < b1.size(); ++i) {
    const double l = b1(i);
    double d;
    if (l < beta) {
      d = beta - l;
    } else if (l > alpha) {
      d = l - alpha;
    } else {
      d = 0.0;
    }
    delta = std::min(delta, d);
  }
  if (!(delta > 0.0)) {
    throw std::domain_error("sin_theta_check: spectrum of B_1 meets [beta, alpha]");
  }
  // sines of the principal angles between E_0 and F_0 are the singular
  // values of F_1^T E_0
  Matrix c = f1.transpose() * e0;
  Eigen::JacobiSVD<Matrix> svd(c);
  Matrix r = bs * e0 - e0 * a0.asDiagonal();
  SinThetaReport rep;
  rep.delta = delta;
  rep.lhs_fro = delta * c.norm();
  rep.rhs_fro = r.norm();
  rep.lhs_two = delta * svd.singularValues()(0);
  rep.rhs_two = Eigen::JacobiSVD<Matrix>(r).singularValues()(0);
  const double slack = 1e-13 * (as.norm() + bs.norm());
  rep.holds = rep.lhs_fro <= rep.rhs_fro + slack && rep.lhs_two <= rep.rhs_two + slack;
  return rep;
}

namespace {

double point_segment(const Vector& z, const Vector& a, const Vector& b) {
  Vector ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0 ? (z - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (z - a - t * ab).norm();
}

double directed(const std::vector<Vector>& pts, const std::vector<Vector>& line, Index window) {
  const Index m = static_cast<Index>(line.size());
  if (m == 1) {
    double worst = 0;
    for (const Vector& z : pts) worst = std::max(worst, (z - line[0]).norm());
    return worst;
  }
  const Index segs = m - 1;
  Index center = 0;
  double worst = 0;
  for (const Vector& z : pts) {
    Index w = window;
    double best = std::numeric_limits<double>::infinity();
    Index arg = center;
    for (;;) {
      const Index lo = std::max<Index>(0, center - w), hi = std::min<Index>(segs - 1, center + w);
      best = std::numeric_limits<double>::infinity();
      for (Index i = lo; i <= hi; ++i) {
        const double d = point_segment(z, line[i], line[i + 1]);
        if (d < best) {
          best = d;
          arg = i;
        }
      }
      const bool at_edge = (arg == lo && lo > 0) || (arg == hi && hi < segs - 1);
      if (!at_edge) break;
      w *= 4;
    }
    center = arg;
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace

double polyline_hausdorff(const std::vector<Vector>& a, const std::vector<Vector>& b,
                          Index window) {
  if (a.empty() || b.empty()) throw std::invalid_argument("polyline_hausdorff: empty polyline");
  if (window < 1) throw std::invalid_argument("polyline_hausdorff: window must be positive");
  return std::max(directed(a, b, window), directed(b, a, window));
}

StiefelChart stiefel_chart(const Matrix& u, const Matrix& q) {
  const Index n = q.rows();
  const Index k = q.cols();
  if (u.rows() != n || u.cols() != k || k > n) throw DimensionError("stiefel_chart: shape mismatch");
  Matrix u1 = u.topRows(k), u2 = u.bottomRows(n - k);
  Matrix q1 = q.topRows(k), q2 = q.bottomRows(n - k);
  Matrix a = u1 + q1;
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible() || lu.rcond() < 1e-14) {
    throw SingularPointError("stiefel_chart: U_1 + Q_1 is singular (U outside the chart domain)");
  }
  // Evaluated in extended precision: when U_1 + Q_1 is poorly conditioned the
  // double-precision product loses the exact skew structure.
  using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  MatL u1l = u1.cast<long double>(), u2l = u2.cast<long double>();
  MatL q1l = q1.cast<long double>(), q2l = q2.cast<long double>();
  // Paired so each bracket is skew on its own; summing the four products in
  // sequence leaves a rounding residue that A^{-1} amplifies.
  MatL p1 = q1l.transpose() * u1l, p2 = u2l.transpose() * q2l;
  MatL core = (p1 - p1.transpose()) + (p2 - p2.transpose());
  Eigen::PartialPivLU<MatL> lul(u1l + q1l);
  MatL ainv = lul.inverse();
  StiefelChart out;
  out.omega11 = (ainv.transpose() * core * ainv).cast<double>();
  out.omega21 = ((u2l - q2l) * ainv).cast<double>();
  return out;
}

}  // namespace rankflow
