#include "rankflow/spurious_points.hpp"

#include <cmath>
#include <string>

#include "rankflow/random.hpp"

namespace rankflow {

GroundTruth make_ground_truth(Index n, const std::vector<double>& eigenvalues,
                              std::uint64_t seed) {
  const Index r = static_cast<Index>(eigenvalues.size());
  if (r > n) throw std::invalid_argument("make_ground_truth: rank exceeds n");
  Rng rng(seed);
  Matrix ux = rng.haar_orthonormal(n, r);
  Vector d = Eigen::Map<const Vector>(eigenvalues.data(), r);
  return GroundTruth::from_factors(std::move(ux), std::move(d));
}

SpuriousPoint spurious_point(const GroundTruth& gt, const std::vector<bool>& mask) {
  const Index r = gt.r();
  if (static_cast<Index>(mask.size()) != r) {
    throw std::invalid_argument("spurious_point: mask length must equal r");
  }
  SpuriousPoint sp;
  sp.mask = mask;
  for (bool b : mask) sp.s += b ? 1 : 0;
  if (sp.s == r) throw std::invalid_argument("spurious_point: all-ones mask is the ground truth");
  sp.U1.resize(gt.n(), sp.s);
  sp.D1.resize(sp.s);
  sp.U2.resize(gt.n(), r - sp.s);
  sp.D2.resize(r - sp.s);
  Index a = 0, b = 0;
  for (Index i = 0; i < r; ++i) {
    if (mask[i]) {
      sp.U1.col(a) = gt.Ux().col(i);
      sp.D1(a++) = gt.d()(i);
    } else {
      sp.U2.col(b) = gt.Ux().col(i);
      sp.D2(b++) = gt.d()(i);
    }
  }
  return sp;
}

std::vector<SpuriousPoint> enumerate_spurious(const GroundTruth& gt) {
  const Index r = gt.r();
  if (r >= 63) throw std::invalid_argument("enumerate_spurious: rank too large");
  const std::uint64_t count = (std::uint64_t{1} << r) - 1;
  std::vector<SpuriousPoint> out;
  out.reserve(count);
  for (std::uint64_t bits = 0; bits < count; ++bits) {
    std::vector<bool> mask(r);
    for (Index i = 0; i < r; ++i) mask[i] = (bits >> i) & 1U;
    out.push_back(spurious_point(gt, mask));
  }
  return out;
}

SpuriousTuple make_spurious_tuple(const SpuriousPoint& sp, const GroundTruth& gt, Matrix u3,
                                  Matrix p) {
  const Index n = gt.n();
  const Index r = gt.r();
  const Index k = r - sp.s;
  if (u3.rows() != n || u3.cols() != k) {
    throw DimensionError("make_spurious_tuple: U3 must be n x (r - s)");
  }
  if (p.rows() != r || p.cols() != r) throw DimensionError("make_spurious_tuple: P must be r x r");
  if (orthonormality_error(u3) > kOrthTol || (gt.Ux().transpose() * u3).norm() > kOrthTol) {
    throw std::invalid_argument("make_spurious_tuple: U3 must be orthonormal and perpendicular to U_x");
  }
  if (orthonormality_error(p) > kOrthTol) {
    throw std::invalid_argument("make_spurious_tuple: P must be orthogonal");
  }
  SpuriousTuple t;
  t.point = sp;
  t.U3 = std::move(u3);
  t.P = std::move(p);
  Matrix u13(n, r);
  u13 << sp.U1, t.U3;
  t.U = u13 * t.P.transpose();
  t.sigma = Vector::Zero(r);
  t.sigma.head(sp.s) = sp.D1;
  Matrix s = t.P * t.sigma.asDiagonal() * t.P.transpose();
  t.S = 0.5 * (s + s.transpose());
  t.p_r = t.P.col(r - 1);
  return t;
}

SpuriousTuple sample_spurious_tuple(const SpuriousPoint& sp, const GroundTruth& gt,
                                    std::uint64_t seed) {
  const Index n = gt.n();
  const Index r = gt.r();
  const Index k = r - sp.s;
  if (n - r < k) {
    throw std::invalid_argument("sample_spurious_tuple: complement of U_x has dimension " +
                                std::to_string(n - r) + " < r - s = " + std::to_string(k));
  }
  Rng rng(seed);
  Matrix u3 = rng.orthonormal_complement_sample(gt.Ux(), k);
  Matrix p = rng.haar_orthonormal(r, r);
  return make_spurious_tuple(sp, gt, std::move(u3), std::move(p));
}

Retraction perturb_along(const SpuriousTuple& tuple, const DenseSym& direction) {
  if (direction.size() != tuple.n()) throw DimensionError("perturb_along: dimension mismatch");
  return retract(DenseSym(tuple.dense()) + direction, tuple.r());
}

FactoredPoint perturb_near(const SpuriousTuple& tuple, double epsilon, std::uint64_t seed) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("perturb_near: epsilon must be positive");
  Rng rng(seed);
  for (int attempt = 0; attempt < 16; ++attempt) {
    Matrix e = rng.gaussian_symmetric(tuple.n());
    e /= e.norm();
    Retraction res = perturb_along(tuple, DenseSym(epsilon * e));
    if (!res.rank_deficient && res.point.in_manifold()) return res.point;
  }
  throw std::runtime_error("perturb_near: no full-rank sample after 16 draws");
}

void to_json(nlohmann::json& j, const SpuriousDescriptor& d) {
  std::vector<int> mask(d.mask.begin(), d.mask.end());
  j = nlohmann::json{{"mask", mask}, {"eigenvalues", d.eigenvalues}, {"seed", d.seed}};
}

void from_json(const nlohmann::json& j, SpuriousDescriptor& d) {
  std::vector<int> mask = j.at("mask").get<std::vector<int>>();
  d.mask.assign(mask.begin(), mask.end());
  d.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
  d.seed = j.at("seed").get<std::uint64_t>();
}

}  // namespace rankflow
