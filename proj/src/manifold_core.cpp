#include "rankflow/manifold_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace rankflow {

namespace {

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

// Thin orthonormal factor of A with positive diag(R).
Matrix thin_q(const Matrix& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
  Matrix r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  for (Index j = 0; j < a.cols(); ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

// Keeps the r algebraically largest eigenpairs of a symmetric matrix given in
// the orthonormal basis `basis` (n x k, core k x k), clamping at zero.
// `outside` is the eigenvalue of the part of the space not covered by the
// basis (0 when basis has fewer than n columns, -inf otherwise).
Retraction truncate_core(const Matrix& basis, const Matrix& core, Index r, double outside) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(core));
  const Vector& lam = es.eigenvalues();  // ascending
  const Index k = core.rows();
  Matrix u(basis.rows(), r);
  Matrix s = Matrix::Zero(r, r);
  bool deficient = false;
  for (Index i = 0; i < r; ++i) {
    const Index src = k - 1 - i;
    u.col(i) = basis * es.eigenvectors().col(src);
    const double value = lam(src);
    if (value <= 0.0) deficient = true;
    s(i, i) = std::max(value, 0.0);
  }
  double next = outside;
  if (k > r) next = std::max(next, lam(k - 1 - r));
  bool tie = false;
  if (std::isfinite(next)) {
    const double scale = std::max(1.0, std::abs(lam(k - 1)));
    tie = std::abs(lam(k - r) - next) <= 1e-12 * scale;
  }
  return Retraction{FactoredPoint(std::move(u), std::move(s)), deficient, tie};
}

}  // namespace

// ---------------------------------------------------------------------------

DenseSym::DenseSym(const Matrix& a) {
  require(a.rows() == a.cols(), "DenseSym: matrix must be square");
  a_ = symmetrize(a);
}

DenseSym DenseSym::operator+(const DenseSym& o) const { return DenseSym(a_ + o.a_); }
DenseSym DenseSym::operator-(const DenseSym& o) const { return DenseSym(a_ - o.a_); }
DenseSym DenseSym::operator*(double s) const { return DenseSym(a_ * s); }

double inner(const DenseSym& a, const DenseSym& b) {
  require(a.size() == b.size(), "inner: dimension mismatch");
  return a.matrix().cwiseProduct(b.matrix()).sum();
}

GroundTruth GroundTruth::from_factors(Matrix ux, Vector d) {
  require(ux.cols() == d.size(), "GroundTruth: U_x has " + std::to_string(ux.cols()) +
                                     " columns but " + std::to_string(d.size()) +
                                     " eigenvalues were given");
  require(ux.cols() <= ux.rows(), "GroundTruth: rank exceeds n");
  if (orthonormality_error(ux) > kOrthTol) {
    throw std::invalid_argument("GroundTruth: U_x is not orthonormal");
  }
  const Index r = d.size();
  std::vector<Index> order(r);
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return d(a) > d(b); });
  Matrix us(ux.rows(), r);
  Vector ds(r);
  for (Index i = 0; i < r; ++i) {
    us.col(i) = ux.col(order[i]);
    ds(i) = d(order[i]);
  }
  for (Index i = 0; i < r; ++i) {
    if (!(ds(i) > 0.0)) throw std::invalid_argument("GroundTruth: eigenvalues must be positive");
    if (i > 0 && ds(i) == ds(i - 1)) {
      throw std::invalid_argument("GroundTruth: eigenvalues must be pairwise distinct");
    }
  }
  return GroundTruth(std::move(us), std::move(ds));
}

Matrix GroundTruth::dense() const { return ux_ * d_.asDiagonal() * ux_.transpose(); }

Matrix GroundTruth::apply(const Matrix& a) const {
  require(a.rows() == n(), "GroundTruth::apply: dimension mismatch");
  return ux_ * (d_.asDiagonal() * (ux_.transpose() * a));
}

// ---------------------------------------------------------------------------

double orthonormality_error(const Matrix& u) {
  return (u.transpose() * u - Matrix::Identity(u.cols(), u.cols())).norm();
}

void reorthonormalize(Matrix& u, Matrix& s) {
  Eigen::HouseholderQR<Matrix> qr(u);
  Matrix q = qr.householderQ() * Matrix::Identity(u.rows(), u.cols());
  Matrix r = qr.matrixQR().topRows(u.cols()).triangularView<Eigen::Upper>();
  for (Index j = 0; j < u.cols(); ++j) {
    if (r(j, j) < 0) {
      q.col(j) = -q.col(j);
      r.row(j) = -r.row(j);
    }
  }
  u = std::move(q);
  s = symmetrize(r * s * r.transpose());
}

FactoredPoint::FactoredPoint(Matrix u, Matrix s) : u_(std::move(u)), s_(std::move(s)) {
  require(s_.rows() == s_.cols(), "FactoredPoint: S must be square");
  require(u_.cols() == s_.rows(), "FactoredPoint: U and S disagree on r");
  require(u_.cols() <= u_.rows(), "FactoredPoint: r exceeds n");
  s_ = symmetrize(s_);
  const double drift = orthonormality_error(u_);
  if (drift > kOrthReject) {
    throw DimensionError("FactoredPoint: U is not orthonormal (||U^T U - I||_F = " +
                         std::to_string(drift) + ")");
  }
  if (drift > kOrthTol) reorthonormalize(u_, s_);
}

Vector FactoredPoint::eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s_, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

double FactoredPoint::sigma_r() const {
  if (s_.rows() == 0) return 0.0;
  return eigenvalues()(0);
}

bool FactoredPoint::in_manifold(double tol) const {
  if (s_.rows() == 0) return true;
  return eigenvalues().cwiseAbs().minCoeff() > tol;
}

// ---------------------------------------------------------------------------

Index TangentBasis::dim() const {
  const Index r_ = r();
  return r_ * (2 * n() - r_ + 1) / 2;
}

TangentBasis tangent_basis(const FactoredPoint& point) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(point.S());
  const Index r = point.r();
  const Index n = point.n();
  // Descending order, matching Sigma = diag(sigma_1 >= ... >= sigma_r).
  Matrix p = es.eigenvectors().rowwise().reverse();
  Matrix uz = point.U() * p;
  Eigen::HouseholderQR<Matrix> qr(uz);
  Matrix full = qr.householderQ();
  return TangentBasis{std::move(uz), full.rightCols(n - r)};
}

DenseSym TangentParam::ambient() const {
  Matrix cross = basis.Uz * N * basis.Ut.transpose();
  return DenseSym(basis.Uz * M * basis.Uz.transpose() + cross + cross.transpose());
}

TangentParam tangent_param(const TangentBasis& basis, const DenseSym& y) {
  require(y.size() == basis.n(), "tangent_param: dimension mismatch");
  const Matrix& a = y.matrix();
  Matrix m = symmetrize(basis.Uz.transpose() * a * basis.Uz);
  Matrix nn = basis.Uz.transpose() * a * basis.Ut;
  return TangentParam{std::move(m), std::move(nn), basis};
}

Vector tangent_coordinates(const TangentParam& xi) {
  const Index r = xi.M.rows();
  const Index c = xi.N.cols();
  Vector out(r * (r + 1) / 2 + r * c);
  Index k = 0;
  const double s2 = std::sqrt(2.0);
  for (Index j = 0; j < r; ++j) {
    for (Index i = 0; i <= j; ++i) out(k++) = (i == j) ? xi.M(i, i) : s2 * xi.M(i, j);
  }
  for (Index j = 0; j < c; ++j) {
    for (Index i = 0; i < r; ++i) out(k++) = s2 * xi.N(i, j);
  }
  return out;
}

TangentParam tangent_from_coordinates(const TangentBasis& basis, const Vector& c) {
  const Index r = basis.r();
  const Index m = basis.n() - r;
  require(c.size() == basis.dim(), "tangent_from_coordinates: wrong coordinate count");
  Matrix mm = Matrix::Zero(r, r);
  Matrix nn = Matrix::Zero(r, m);
  Index k = 0;
  const double s2 = std::sqrt(2.0);
  for (Index j = 0; j < r; ++j) {
    for (Index i = 0; i <= j; ++i) {
      if (i == j) {
        mm(i, i) = c(k++);
      } else {
        mm(i, j) = mm(j, i) = c(k++) / s2;
      }
    }
  }
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < r; ++i) nn(i, j) = c(k++) / s2;
  }
  return TangentParam{std::move(mm), std::move(nn), basis};
}

// ---------------------------------------------------------------------------

DenseSym tangent_project(const FactoredPoint& point, const DenseSym& y) {
  require(y.size() == point.n(), "tangent_project: Y is " + std::to_string(y.size()) +
                                     "x" + std::to_string(y.size()) + ", point has n = " +
                                     std::to_string(point.n()));
  const Matrix& u = point.U();
  const Matrix& a = y.matrix();
  Matrix ya = a * u;                       // Y U
  Matrix core = u.transpose() * ya;        // U^T Y U
  Matrix left = u * ya.transpose();        // P_U Y  = U (Y U)^T
  Matrix both = u * core * u.transpose();  // P_U Y P_U
  return DenseSym(left + left.transpose() - both);
}

Retraction retract(const DenseSym& w, Index r) {
  require(r >= 0 && r <= w.size(), "retract: rank out of range");
  const Index n = w.size();
  return truncate_core(Matrix::Identity(n, n), w.matrix(), r,
                       -std::numeric_limits<double>::infinity());
}

DenseSym riem_gradient(const FactoredPoint& point, const GroundTruth& gt) {
  require(point.n() == gt.n(), "riem_gradient: dimension mismatch");
  return DenseSym(riem_gradient_factored(point, gt).dense(point.U()));
}

DenseSym riem_hessian_apply(const FactoredPoint& point, const GroundTruth& gt,
                            const TangentParam& xi) {
  require(point.n() == gt.n() && xi.basis.n() == point.n() && xi.basis.r() == point.r(),
          "riem_hessian_apply: dimension mismatch");
  const Matrix& u = point.U();
  const Matrix& uz = xi.basis.Uz;
  // Sigma expressed in the basis of xi; diagonal when the basis came from
  // tangent_basis(point).
  Matrix sz = symmetrize(uz.transpose() * point.dense() * uz);
  Eigen::SelfAdjointEigenSolver<Matrix> es(sz);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (sz.rows() > 0 && es.eigenvalues().cwiseAbs().minCoeff() <= 1e-14 * scale) {
    throw SingularPointError("riem_hessian_apply: Sigma is singular (point on the boundary)");
  }
  Matrix sz_inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                  es.eigenvectors().transpose();
  Matrix v = xi.basis.Ut * xi.N.transpose();  // U~ N^T
  // P_perp (Z - X) = -P_perp X.
  Matrix xv = gt.apply(v);
  Matrix pxv = -(xv - u * (u.transpose() * xv));
  Matrix term = pxv * sz_inv * uz.transpose();
  return xi.ambient() + DenseSym(term + term.transpose());
}

Matrix riem_hessian_matrix(const FactoredPoint& point, const GroundTruth& gt) {
  TangentBasis basis = tangent_basis(point);
  const Index d = basis.dim();
  Matrix h(d, d);
  for (Index j = 0; j < d; ++j) {
    TangentParam e = tangent_from_coordinates(basis, Vector::Unit(d, j));
    h.col(j) = tangent_coordinates(tangent_param(basis, riem_hessian_apply(point, gt, e)));
  }
  return symmetrize(h);
}

Index manifold_dim(Index m, Index n, Index r, Field field, bool hermitian) {
  if (r < 0 || r > std::min(m, n)) throw std::invalid_argument("manifold_dim: invalid rank");
  if (hermitian && m != n) throw std::invalid_argument("manifold_dim: Hermitian requires m = n");
  // Complex counts are real dimensions: the unitary gauge removes r^2 real
  // parameters for Hermitian and 2 r^2 for general matrices.
  if (hermitian) {
    return field == Field::real ? (2 * m - r + 1) * r / 2 : (2 * m - r) * r;
  }
  return field == Field::real ? (m + n - r) * r : 2 * (m + n - r) * r;
}

// ---------------------------------------------------------------------------

double FactoredTangent::norm() const {
  return std::sqrt(M.squaredNorm() + 2.0 * K.squaredNorm());
}

Matrix FactoredTangent::dense(const Matrix& u) const {
  Matrix ku = K * u.transpose();
  return u * M * u.transpose() + ku + ku.transpose();
}

FactoredTangent riem_gradient_factored(const FactoredPoint& point, const GroundTruth& gt) {
  require(point.n() == gt.n(), "riem_gradient: dimension mismatch");
  const Matrix& u = point.U();
  Matrix a = u.transpose() * gt.Ux();      // r x r_x
  Matrix b = gt.Ux() - u * a;              // P_perp U_x
  Matrix dat = gt.d().asDiagonal() * a.transpose();
  Matrix m = symmetrize(point.S() - a * dat);
  Matrix k = -b * dat;
  return FactoredTangent{std::move(m), std::move(k)};
}

Retraction retract_step(const FactoredPoint& point, const FactoredTangent& xi, double step) {
  const Matrix& u = point.U();
  const Index n = point.n();
  const Index r = point.r();
  if (n < 2 * r) {
    return retract(DenseSym(point.dense() - step * xi.dense(u)), r);
  }
  Matrix joint(n, 2 * r);
  joint << u, xi.K;
  Matrix basis = thin_q(joint);
  Matrix a = basis.transpose() * u;
  Matrix kc = basis.transpose() * xi.K;
  Matrix cross = kc * a.transpose();
  Matrix core = a * (point.S() - step * xi.M) * a.transpose() - step * (cross + cross.transpose());
  const double outside = n > 2 * r ? 0.0 : -std::numeric_limits<double>::infinity();
  return truncate_core(basis, core, r, outside);
}

double objective(const FactoredPoint& point, const GroundTruth& gt) {
  const double d = distance_to_truth(point, gt);
  return 0.5 * d * d;
}

double factored_distance(const Matrix& u1, const Matrix& s1, const Matrix& u2,
                         const Matrix& s2) {
  require(u1.rows() == u2.rows(), "factored_distance: dimension mismatch");
  const Index n = u1.rows();
  const Index k = u1.cols() + u2.cols();
  if (k >= n) {
    return (u1 * s1 * u1.transpose() - u2 * s2 * u2.transpose()).norm();
  }
  Matrix joint(n, k);
  joint << u1, u2;
  Matrix q = thin_q(joint);
  Matrix a1 = q.transpose() * u1;
  Matrix a2 = q.transpose() * u2;
  return (a1 * s1 * a1.transpose() - a2 * s2 * a2.transpose()).norm();
}

double distance_to_truth(const FactoredPoint& point, const GroundTruth& gt) {
  require(point.n() == gt.n(), "distance_to_truth: dimension mismatch");
  return factored_distance(point.U(), point.S(), gt.Ux(), gt.d().asDiagonal().toDenseMatrix());
}

}  // namespace rankflow
