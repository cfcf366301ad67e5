#include <gtest/gtest.h>

#include <cmath>

#include "rankflow/flows.hpp"
#include "rankflow/oracles.hpp"
#include "rankflow/random.hpp"
#include "rankflow/spurious_points.hpp"

using namespace rankflow;

namespace {

GroundTruth example_truth() {
  Vector d(2);
  d << 2, 1;
  return GroundTruth::from_factors(Matrix::Identity(3, 2), d);
}

FactoredPoint example_point() {
  Matrix u = Matrix::Zero(3, 2);
  u(0, 0) = 1;
  u(2, 1) = 1;
  Matrix s = Matrix::Zero(2, 2);
  s(0, 0) = 2;
  s(1, 1) = 1;
  return FactoredPoint(u, s);
}

FactoredPoint random_point(Index n, Index r, std::uint64_t seed) {
  Rng rng(seed);
  Matrix u = rng.haar_orthonormal(n, r);
  Matrix g = rng.gaussian(r, r);
  return FactoredPoint(u, g * g.transpose() + 0.3 * Matrix::Identity(r, r));
}

Matrix sym_of(const Matrix& a) { return 0.5 * (a + a.transpose()); }

// Upper triangle of a symmetric matrix, off-diagonals scaled so the
// Euclidean norm equals the Frobenius norm.
Vector sym_vec(const Matrix& z) {
  const Index n = z.rows();
  Vector v(n * (n + 1) / 2);
  Index k = 0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i <= j; ++i) v(k++) = i == j ? z(i, i) : std::sqrt(2.0) * z(i, j);
  }
  return v;
}

}  // namespace

TEST(DlraRhs, VanishesAtTruth) {
  GroundTruth gt = make_ground_truth(10, {3, 2, 1}, 1);
  Rng rng(2);
  Matrix q = rng.haar_orthonormal(3, 3);
  FlowDerivative v = dlra_rhs(gt.Ux() * q, q.transpose() * Matrix(gt.d().asDiagonal()) * q, gt);
  EXPECT_LE(v.dU.norm(), 1e-13);
  EXPECT_LE(v.dS.norm(), 1e-13);
}

TEST(DlraRhs, ExampleInitialization) {
  FlowDerivative v = dlra_rhs(FlowState{example_point(), 0.0}, example_truth());
  EXPECT_LE(v.dU.norm(), 1e-15);
  Matrix expect = Matrix::Zero(2, 2);
  expect(1, 1) = -1;
  EXPECT_LE((v.dS - expect).norm(), 1e-15);
}

TEST(DlraRhs, FactoredFormOfProjectedFlowAndGauge) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GroundTruth gt = make_ground_truth(12, {4, 2.5, 1, 0.5}, 10 + seed);
    FactoredPoint p = random_point(12, 4, 20 + seed);
    FlowDerivative v = dlra_rhs(FlowState{p, 0.0}, gt);
    Matrix dz = v.dU * p.S() * p.U().transpose() + p.U() * v.dS * p.U().transpose() +
                p.U() * p.S() * v.dU.transpose();
    EXPECT_LE((dz + riem_gradient(p, gt).matrix()).norm(), 1e-10);
    EXPECT_LE((p.U().transpose() * v.dU).norm(), 1e-10);
    FlowDerivative w = rescaled_rhs(FlowState{p, 0.0}, gt);
    EXPECT_LE((p.U().transpose() * w.dU).norm(), 1e-10);
  }
}

TEST(DlraRhs, SingularThrows) {
  GroundTruth gt = make_ground_truth(8, {2, 1}, 3);
  SpuriousTuple t = sample_spurious_tuple(spurious_point(gt, {true, false}), gt, 4);
  EXPECT_THROW(dlra_rhs(t.U, t.S, gt), SingularPointError);
}

TEST(RescaledRhs, ScaledDlraInTheInterior) {
  GroundTruth gt = make_ground_truth(9, {3, 2, 1}, 5);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    FactoredPoint p = random_point(9, 3, 30 + seed);
    FlowDerivative a = dlra_rhs(FlowState{p, 0.0}, gt);
    FlowDerivative b = rescaled_rhs(FlowState{p, 0.0}, gt);
    const double sig = sigma_min(p.S());
    EXPECT_LE((b.dU - sig * a.dU).norm(), 1e-12);
    EXPECT_LE((b.dS - sig * a.dS).norm(), 1e-12);
  }
}

TEST(RescaledRhs, DecaysLinearlyApproachingTuple) {
  GroundTruth gt = make_ground_truth(10, {4, 3, 2, 1}, 6);
  SpuriousTuple t = sample_spurious_tuple(spurious_point(gt, {true, false, true, true}), gt, 7);
  // move U off the tuple as well; with U frozen the rhs is only O(eps^2)
  Matrix w = t.point.U2.col(0) * t.p_r.transpose();
  std::vector<double> ratios;
  for (double eps : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8}) {
    Matrix u = t.U + eps * w;
    Matrix s = t.S + eps * Matrix::Identity(4, 4);
    reorthonormalize(u, s);
    FlowDerivative v = rescaled_rhs(u, s, gt);
    const double norm = std::sqrt(v.dU.squaredNorm() + v.dS.squaredNorm());
    ratios.push_back(norm / eps);
  }
  for (double q : ratios) {
    EXPECT_GT(q, 0.5 * ratios.back());
    EXPECT_LT(q, 2.0 * ratios.back());
  }
}

TEST(Phi, DiagonalFormula) {
  Vector d(3);
  d << 4, 2, 1;
  Vector expect(3);
  expect << 0.25, 0.5, 1.0;
  EXPECT_LE((phi(d.asDiagonal()) - Matrix(expect.asDiagonal())).norm(), 1e-15);
}

TEST(Phi, LimitAtSpuriousTupleAndContinuity) {
  GroundTruth gt = make_ground_truth(10, {4, 3, 2, 1}, 8);
  SpuriousTuple t = sample_spurious_tuple(spurious_point(gt, {true, true, false, true}), gt, 9);
  Matrix lim = t.p_r * t.p_r.transpose();
  EXPECT_LE((phi(t.S) - lim).norm(), 1e-12);
  Rng rng(10);
  Matrix e = rng.gaussian_symmetric(4);
  double prev = 1e300;
  for (double eps : {1e-2, 1e-4, 1e-6, 1e-8, 1e-10}) {
    const double dev = (phi(t.S + eps * e) - lim).norm();
    EXPECT_LT(dev, prev);
    prev = dev;
  }
  EXPECT_LE(prev, 1e-8);
}

TEST(Phi, RepeatedZeroEigenvalueThrows) {
  Vector d(3);
  d << 2, 0, 0;
  EXPECT_THROW(phi(d.asDiagonal()), SingularPointError);
}

TEST(Psi, LimitCasesAtSpuriousTuple) {
  GroundTruth gt = make_ground_truth(10, {4, 3, 2, 1}, 11);
  SpuriousTuple t = sample_spurious_tuple(spurious_point(gt, {true, false, true, true}), gt, 12);
  const Matrix& p = t.P;
  const Index r = 4;
  for (Index i = 0; i + 1 < r; ++i) {
    for (Index j = 0; j + 1 < r; ++j) {
      EXPECT_LE(psi(t.S, p.col(i) * p.col(j).transpose()).norm(), 1e-12);
    }
  }
  for (Index i = 0; i + 1 < r; ++i) {
    const double di = t.sigma(i);
    Matrix a = p.col(i) * t.p_r.transpose();
    EXPECT_LE((psi(t.S, a) + a / di).norm(), 1e-12);
    Matrix b = t.p_r * p.col(i).transpose();
    EXPECT_LE((psi(t.S, b) + b / di).norm(), 1e-12);
  }
  Vector w = Vector::Zero(r);
  for (Index i = 0; i + 1 < r; ++i) w(i) = 1.0 / t.sigma(i);
  Matrix expect = p * w.asDiagonal() * p.transpose();
  EXPECT_LE((psi(t.S, t.p_r * t.p_r.transpose()) - expect).norm(), 1e-12);
}

TEST(Psi, LimitMatchesSecantOfPhiAtTuple) {
  // phi is C^1 up to the boundary, so one-sided differences from S# recover psi
  GroundTruth gt = make_ground_truth(8, {3, 2, 1}, 13);
  SpuriousTuple t = sample_spurious_tuple(spurious_point(gt, {true, true, false}), gt, 14);
  Rng rng(15);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix eta = rng.gaussian_symmetric(3);
    // stay on the SPSD side so the smallest eigenvalue is simple and >= 0
    eta += (std::abs(t.p_r.dot(eta * t.p_r)) + 0.1) * t.p_r * t.p_r.transpose();
    Matrix exact = psi(t.S, eta);
    const double h = 1e-6;
    Matrix est = (phi(t.S + 2 * h * eta) - phi(t.S + h * eta)) / h;
    EXPECT_LE((sym_of(exact) - est).norm(), 1e-4 * std::max(1.0, exact.norm()));
  }
}

TEST(Psi, InteriorMatchesFiniteDifferences) {
  Rng rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix g = rng.gaussian(4, 4);
    Matrix s = g * g.transpose() + 0.2 * Matrix::Identity(4, 4);
    Matrix eta = rng.gaussian_symmetric(4);
    Matrix exact = psi(s, eta);
    const double h = 1e-6;
    Matrix est = (phi(s + h * eta) - phi(s - h * eta)) / (2 * h);
    EXPECT_LE((exact - est).norm(), 1e-6 * std::max(1.0, exact.norm()));
  }
}

TEST(Psi, EigenGapViolationThrows) {
  Vector d(3);
  d << 2, 1, 1;
  EXPECT_THROW(psi(d.asDiagonal(), Matrix::Identity(3, 3)), std::domain_error);
}

TEST(Integrate, ExampleDecayMatchesClosedForm) {
  StepControls c;
  IntegrationResult res = integrate(FlowSystem::dlra, example_point(), example_truth(), 5.0, c);
  EXPECT_EQ(res.status, FlowStatus::reached_t_end);
  EXPECT_NEAR(res.last.t, 5.0, 1e-12);
  Matrix zs = Matrix::Zero(3, 3);
  zs(0, 0) = 2;
  for (const FlowState& st : res.states) {
    EXPECT_NEAR((st.point.dense() - zs).norm(), std::exp(-st.t), 1e-6);
  }
}

TEST(Integrate, ZeroHorizonKeepsInitialState) {
  IntegrationResult res = integrate(FlowSystem::rescaled, example_point(), example_truth(), 0.0);
  EXPECT_EQ(res.states.size(), 1u);
  EXPECT_EQ(res.records.size(), 1u);
  EXPECT_EQ(res.states[0].point.dense(), example_point().dense());
}

TEST(Integrate, ExampleDlraHitsSigmaFloor) {
  IntegrationResult res = integrate(FlowSystem::dlra, example_point(), example_truth(), 40.0);
  EXPECT_EQ(res.status, FlowStatus::sigma_floor);
  EXPECT_FALSE(res.diagnostic.empty());
  EXPECT_NEAR(res.last.t, std::log(1e12), 0.05);
}

TEST(Integrate, RejectsDriftingSteps) {
  GroundTruth gt = make_ground_truth(10, {3, 2, 1}, 17);
  StepControls c;
  c.dt = 2.0;
  IntegrationResult res = integrate(FlowSystem::dlra, random_point(10, 3, 18), gt, 10.0, c);
  EXPECT_EQ(res.status, FlowStatus::step_rejected);
  EXPECT_THROW(integrate(FlowSystem::dlra, random_point(10, 3, 18), gt, -1.0), std::invalid_argument);
}

TEST(Integrate, GenericInitConvergesToTruth) {
  GroundTruth gt = make_ground_truth(100, {5, 4, 3, 2, 1}, 19);
  Rng rng(20);
  Matrix u = rng.haar_orthonormal(100, 5);
  Vector lam(5);
  for (Index i = 0; i < 5; ++i) lam(i) = 0.5 + 1.5 * (i + 1) / 5.0;
  StepControls c;
  c.keep_states = false;
  IntegrationResult res = integrate(FlowSystem::dlra, FactoredPoint(u, lam.asDiagonal()), gt, 25.0, c);
  EXPECT_EQ(res.status, FlowStatus::reached_t_end);
  EXPECT_LT(res.records.back().dist, 1e-6);
}

TEST(Integrate, GronwallBoundsAndMonotoneDescent) {
  GroundTruth gt = make_ground_truth(12, {3, 2, 1}, 21);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    FactoredPoint init = random_point(12, 3, 40 + seed);
    const double s0 = init.sigma_r();
    const double tol = 1e-2;
    for (FlowSystem sys : {FlowSystem::dlra, FlowSystem::rescaled}) {
      IntegrationResult res = integrate(sys, init, gt, 8.0);
      ASSERT_EQ(res.status, FlowStatus::reached_t_end);
      double prev_f = 1e300;
      for (const FlowState& st : res.states) {
        const double bound = sys == FlowSystem::dlra ? s0 * std::exp(-st.t) : s0 / (1 + st.t * s0);
        EXPECT_GE(st.point.sigma_r(), bound * (1 - tol)) << st.t;
        const double f = objective(st.point, gt);
        EXPECT_LE(f, prev_f + 1e-14);
        prev_f = f;
        EXPECT_LE(orthonormality_error(st.point.U()), kOrthTol);
      }
    }
  }
}

TEST(Integrate, RescaledTracesTheDlraCurve) {
  GroundTruth gt = make_ground_truth(8, {3, 2, 1}, 22);
  FactoredPoint init = random_point(8, 3, 23);
  // chord error of the polylines is O(dt^2) near the start, where the curve
  // bends most; dt = 1e-2 alone leaves about 2e-4
  StepControls c;
  c.grad_tol = 1e-9;
  c.dt = 2.5e-3;
  IntegrationResult a = integrate(FlowSystem::dlra, init, gt, 60.0, c);
  IntegrationResult b = integrate(FlowSystem::rescaled, init, gt, 200.0, c);
  ASSERT_EQ(a.status, FlowStatus::converged);
  ASSERT_EQ(b.status, FlowStatus::converged);
  std::vector<Vector> la, lb;
  for (const FlowState& st : a.states) la.push_back(sym_vec(st.point.dense()));
  for (const FlowState& st : b.states) lb.push_back(sym_vec(st.point.dense()));
  EXPECT_LE(polyline_hausdorff(la, lb), 1e-4);
}

TEST(PolylineHausdorff, MatchesBruteForceOnSmallCurves) {
  std::vector<Vector> a, b;
  for (int i = 0; i <= 300; ++i) {
    const double t = i / 300.0;
    Vector p(2), q(2);
    p << std::cos(3 * t), std::sin(3 * t);
    q << 1.01 * std::cos(3 * t * t), 1.01 * std::sin(3 * t * t);
    a.push_back(p);
    if (i % 3 == 0) b.push_back(q);
  }
  auto brute = [](const std::vector<Vector>& pts, const std::vector<Vector>& line) {
    double worst = 0;
    for (const Vector& z : pts) {
      double best = 1e300;
      for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        Vector ab = line[i + 1] - line[i];
        double t = std::clamp((z - line[i]).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
        best = std::min(best, (z - line[i] - t * ab).norm());
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  const double exact = std::max(brute(a, b), brute(b, a));
  EXPECT_NEAR(polyline_hausdorff(a, b, 4), exact, 1e-15);
  EXPECT_GE(polyline_hausdorff(a, b, 1), exact);
}

TEST(FlowCoordinates, RoundTrip) {
  Rng rng(24);
  FlowDerivative v{rng.gaussian(5, 2), rng.gaussian_symmetric(2)};
  Vector c = flow_coordinates(v);
  EXPECT_EQ(c.size(), 13);
  FlowDerivative w = flow_from_coordinates(5, 2, c);
  EXPECT_LE((w.dU - v.dU).norm() + (w.dS - v.dS).norm(), 1e-15);
  EXPECT_NEAR(c.norm(), std::sqrt(v.dU.squaredNorm() + v.dS.squaredNorm()), 1e-13);
}

TEST(RescaledJacobian, EscapeEigenpairForEveryMask) {
  GroundTruth gt = make_ground_truth(10, {4, 3, 2, 1}, 25);
  for (const SpuriousPoint& sp : enumerate_spurious(gt)) {
    if (sp.s != 3) continue;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      SpuriousTuple t = sample_spurious_tuple(sp, gt, 100 + seed);
      RescaledJacobian j = rescaled_jacobian(t, gt);
      EXPECT_EQ(j.positive_count, 1);
      EXPECT_NEAR(j.eigenvalues(0).real(), sp.D2(0), 1e-10);
      EXPECT_NEAR(j.eigenvalues(0).imag(), 0.0, 1e-10);
      EXPECT_LE(j.escape_residual, 1e-12);
      EXPECT_DOUBLE_EQ(j.missing_eigenvalue, sp.D2(0));
    }
  }
}

TEST(RescaledJacobian, SBlockVanishes) {
  GroundTruth gt = make_ground_truth(9, {3, 2, 1}, 26);
  SpuriousTuple t = sample_spurious_tuple(spurious_point(gt, {false, true, true}), gt, 27);
  const Index nr = 27;
  RescaledJacobian j = rescaled_jacobian(t, gt);
  EXPECT_LE(j.matrix.rightCols(j.matrix.cols() - nr).norm(), 1e-12);
}

TEST(RescaledJacobian, MatchesFiniteDifferences) {
  GroundTruth gt = make_ground_truth(9, {3, 2, 1}, 28);
  SpuriousTuple t = sample_spurious_tuple(spurious_point(gt, {true, false, true}), gt, 29);
  RescaledJacobian j = rescaled_jacobian(t, gt);
  const Index n = 9, r = 3;
  const Index d = j.matrix.cols();
  const double h = 1e-5;
  double worst = 0;
  for (Index k = 0; k < d; ++k) {
    FlowDerivative e = flow_from_coordinates(n, r, Vector::Unit(d, k));
    FlowDerivative fp = rescaled_rhs(t.U + h * e.dU, t.S + h * e.dS, gt);
    FlowDerivative fm = rescaled_rhs(t.U - h * e.dU, t.S - h * e.dS, gt);
    Vector est = (flow_coordinates(fp) - flow_coordinates(fm)) / (2 * h);
    worst = std::max(worst, (est - j.matrix.col(k)).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 1e-4 * gt.dense().norm());
}

TEST(RescaledJacobian, RejectsLowerRankTuples) {
  GroundTruth gt = make_ground_truth(10, {3, 2, 1}, 30);
  SpuriousTuple t = sample_spurious_tuple(spurious_point(gt, {true, false, false}), gt, 31);
  EXPECT_THROW(rescaled_jacobian(t, gt), std::invalid_argument);
}
