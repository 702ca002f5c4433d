#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include "siadv/error.hpp"
#include "siadv/geometry.hpp"
#include "support.hpp"

namespace siadv {
namespace {

using test::random_cloud;
using test::random_unit;

const double kH = 1.0 / std::sqrt(2.0);

std::vector<std::size_t> brute_knn(const PointCloud& c, std::size_t i,
                                   std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t j = 0; j < c.size(); ++j) {
    if (j == i) continue;
    const double dx = c[j].x() - c[i].x(), dy = c[j].y() - c[i].y(),
                 dz = c[j].z() - c[i].z();
    all.emplace_back(dx * dx + dy * dy + dz * dz, j);
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < k; ++r) out.push_back(all[r].second);
  return out;
}

// Smallest root of det(C - x I) = 0 by the trigonometric cubic formula.
double smallest_eigenvalue(const Mat3& c) {
  const double p1 = c(0, 1) * c(0, 1) + c(0, 2) * c(0, 2) + c(1, 2) * c(1, 2);
  const double q = c.trace() / 3.0;
  const double p2 = (c(0, 0) - q) * (c(0, 0) - q) +
                    (c(1, 1) - q) * (c(1, 1) - q) +
                    (c(2, 2) - q) * (c(2, 2) - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  if (p == 0.0) return q;
  const Mat3 b = (c - q * Mat3::Identity()) / p;
  const double r = std::clamp(b.determinant() / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  return q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
}

double orthogonality_error(const Mat3& r) {
  return (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
}

TEST(Knn, CollinearPoints) {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {5, 0, 0}};
  EXPECT_EQ(knn(c, 0, 2), (std::vector<std::size_t>{1, 2}));
}

TEST(Knn, EqualDistancesBreakByIndex) {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {3, 3, 3}};
  EXPECT_EQ(knn(c, 0, 1), (std::vector<std::size_t>{1}));
}

TEST(Knn, MatchesExhaustiveScan) {
  const PointCloud c = random_cloud(64, 1);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(knn(c, i, 5), brute_knn(c, i, 5)) << "point " << i;
  }
}

TEST(Knn, MatchesExhaustiveScanWithDuplicates) {
  PointCloud c = random_cloud(300, 2);
  for (std::size_t i = 0; i < 100; ++i) c.points.push_back(c[i * 2]);
  for (std::size_t i = 0; i < c.size(); i += 7) {
    EXPECT_EQ(knn(c, i, 20), brute_knn(c, i, 20)) << "point " << i;
  }
}

TEST(Knn, RejectsBadK) {
  const PointCloud c = random_cloud(5, 3);
  EXPECT_THROW(knn(c, 0, 0), ParameterError);
  EXPECT_THROW(knn(c, 0, 5), ParameterError);
  EXPECT_THROW(knn(c, 5, 2), ParameterError);
  EXPECT_NO_THROW(knn(c, 0, 4));
}

TEST(Covariance, IdenticalNeighboursGiveZero) {
  PointCloud c;
  c.points = {{1, 2, 3}, {1, 2, 3}, {1, 2, 3}, {1, 2, 3}};
  const std::vector<std::size_t> nb{1, 2, 3};
  EXPECT_EQ(covariance(c, 0, nb), Mat3::Zero());
}

TEST(Covariance, OpposedPairOnX) {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}};
  const std::vector<std::size_t> nb{1, 2};
  Mat3 expected = Mat3::Zero();
  expected(0, 0) = 2.0;
  EXPECT_EQ(covariance(c, 0, nb), expected);
}

TEST(Covariance, MatchesTermByTermSum) {
  const PointCloud c = random_cloud(11, 4);
  std::vector<std::size_t> nb;
  for (std::size_t j = 1; j <= 10; ++j) nb.push_back(j);
  const Mat3 got = covariance(c, 0, nb);
  double oracle[3][3] = {};
  for (std::size_t j : nb) {
    const double d[3] = {c[j].x() - c[0].x(), c[j].y() - c[0].y(),
                         c[j].z() - c[0].z()};
    for (int r = 0; r < 3; ++r) {
      for (int s = 0; s < 3; ++s) oracle[r][s] += d[r] * d[s];
    }
  }
  for (int r = 0; r < 3; ++r) {
    for (int s = 0; s < 3; ++s) EXPECT_NEAR(got(r, s), oracle[r][s], 1e-12);
  }
  EXPECT_EQ(got, got.transpose());
}

TEST(Covariance, PositiveSemidefinite) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const PointCloud c = random_cloud(21, 100 + seed);
    const auto nb = knn(c, 0, 20);
    EXPECT_GE(smallest_eigenvalue(covariance(c, 0, nb)), -1e-12);
  }
}

TEST(EstimateNormal, DiagonalMatrix) {
  Mat3 c = Mat3::Zero();
  c.diagonal() << 3, 2, 1;
  const NormalEstimate e = estimate_normal(c);
  EXPECT_EQ(e.normal, Vec3(0, 0, 1));
  EXPECT_FALSE(e.isotropic);
}

TEST(EstimateNormal, PlanarNeighbourhood) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  PointCloud c;
  for (int i = 0; i < 21; ++i) c.points.emplace_back(u(rng), u(rng), 0.0);
  const NormalEstimate e = estimate_normal(covariance(c, 0, knn(c, 0, 20)));
  EXPECT_NEAR((e.normal - Vec3(0, 0, 1)).norm(), 0.0, 1e-9);
}

TEST(EstimateNormal, TiltedPlaneUpToSign) {
  Rng rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 n = random_unit(rng);
    const Vec3 a = n.unitOrthogonal(), b = n.cross(a);
    const Vec3 origin(u(rng), u(rng), u(rng));
    PointCloud c;
    for (int i = 0; i < 21; ++i) c.points.push_back(origin + u(rng) * a + u(rng) * b);
    const Vec3 got = estimate_normal(covariance(c, 0, knn(c, 0, 20))).normal;
    EXPECT_NEAR(std::abs(got.dot(n)), 1.0, 1e-9);
  }
}

TEST(EstimateNormal, ResidualAgainstCubicRoot) {
  Rng rng(7);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    Mat3 a;
    for (int r = 0; r < 3; ++r) {
      for (int s = 0; s < 3; ++s) a(r, s) = g(rng);
    }
    const Mat3 c = a * a.transpose();
    const Mat3 sym = 0.5 * (c + c.transpose());
    const double lambda = smallest_eigenvalue(sym);
    const Vec3 v = estimate_normal(sym).normal;
    EXPECT_NEAR(v.norm(), 1.0, 1e-12);
    EXPECT_LT((sym * v - lambda * v).norm(), 1e-9) << "trial " << trial;
  }
}

TEST(EstimateNormal, RejectsAsymmetricInput) {
  Mat3 c = Mat3::Identity();
  c(0, 1) = 1e-6;
  EXPECT_THROW(estimate_normal(c), ParameterError);
}

TEST(EstimateNormal, RepeatedSmallestEigenvalueIsFlagged) {
  Mat3 c = Mat3::Zero();
  c.diagonal() << 1, 1, 3;
  const NormalEstimate a = estimate_normal(c);
  const NormalEstimate b = estimate_normal(c);
  EXPECT_TRUE(a.isotropic);
  EXPECT_EQ(a.normal, b.normal);
  EXPECT_NEAR(a.normal.z(), 0.0, 1e-12);
}

TEST(CanonicalizeNormal, SignRules) {
  EXPECT_EQ(canonicalize_normal(Vec3(0.6, 0, -0.8)), Vec3(-0.6, 0, 0.8));
  EXPECT_EQ(canonicalize_normal(Vec3(0.6, -0.8, 0)), Vec3(-0.6, 0.8, 0));
  EXPECT_EQ(canonicalize_normal(Vec3(-1, 0, 0)), Vec3(1, 0, 0));
  EXPECT_EQ(canonicalize_normal(Vec3(0.6, 0.8, 0)), Vec3(0.6, 0.8, 0));
}

TEST(JacobiEigen, ConvergesWithinSweepLimit) {
  Rng rng(8);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    Mat3 a;
    for (int r = 0; r < 3; ++r) {
      for (int s = 0; s < 3; ++s) a(r, s) = g(rng);
    }
    const Mat3 c = a + a.transpose();
    const SymmetricEigen e = jacobi_eigen(c);
    EXPECT_LE(e.sweeps, 50);
    const Mat3 recon =
        e.vectors * e.values.asDiagonal() * e.vectors.transpose();
    EXPECT_LT((recon - c).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(orthogonality_error(e.vectors), 1e-12);
  }
}

TEST(BuildFrame, PoleLimitForm) {
  const TangentFrame f = build_frame(Vec3(0.4, -2.0, 0.7), Vec3(0, 0, 1));
  Mat3 expected;
  expected << kH, -kH, 0, kH, kH, 0, 0, 0, 1;
  EXPECT_TRUE(f.degenerate);
  EXPECT_LT((f.rotation - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(f.translation, Vec3(0, 0, 0.7));
}

TEST(BuildFrame, DiagonalNormalAndIntercepts) {
  const double s = 1.0 / std::sqrt(3.0);
  const Vec3 n(s, s, s), p(1, 1, 1);
  const TangentFrame f = build_frame(p, n);
  EXPECT_FALSE(f.degenerate);
  EXPECT_LT((f.translation - Vec3(1, 1, 1)).norm(), 1e-12);
  const auto ic = axis_intercepts(p, n);
  ASSERT_TRUE(ic[0] && ic[1] && ic[2]);
  EXPECT_LT((*ic[0] - Vec3(3, 0, 0)).norm(), 1e-12);
  EXPECT_LT((*ic[1] - Vec3(0, 3, 0)).norm(), 1e-12);
  EXPECT_LT((*ic[2] - Vec3(0, 0, 3)).norm(), 1e-12);
  for (const auto& x : ic) EXPECT_NEAR((*x - p).dot(n), 0.0, 1e-12);
}

TEST(BuildFrame, InterceptsMissingForParallelAxes) {
  const auto ic = axis_intercepts(Vec3(0, 0, 2), Vec3(0, 0, 1));
  EXPECT_FALSE(ic[0]);
  EXPECT_FALSE(ic[1]);
  ASSERT_TRUE(ic[2]);
  EXPECT_EQ(*ic[2], Vec3(0, 0, 2));
}

TEST(BuildFrame, RejectsNonUnitNormal) {
  EXPECT_THROW(build_frame(Vec3::Zero(), Vec3(0, 0, 1.001)), ParameterError);
  EXPECT_THROW(build_frame(Vec3::Zero(), Vec3(0, 0, 0)), ParameterError);
  EXPECT_NO_THROW(build_frame(Vec3::Zero(), Vec3(0, 0, 1.0 + 5e-10)));
}

TEST(BuildFrame, TranslationIsProjection) {
  Rng rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3 n = random_unit(rng), p(u(rng), u(rng), u(rng));
    const TangentFrame f = build_frame(p, n);
    EXPECT_EQ(f.translation, Vec3(p.dot(f.normal) * f.normal));
    EXPECT_NEAR(f.normal.norm(), 1.0, 1e-12);
    EXPECT_LT((f.rotation.row(2).transpose() - n).norm(), 1e-15);
  }
}

TEST(BuildFrame, OrthogonalEverywhereIncludingPoles) {
  Rng rng(10);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    worst = std::max(worst,
                     orthogonality_error(build_frame(Vec3::Zero(),
                                                     random_unit(rng))
                                             .rotation));
  }
  int pole_forms = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double scale = std::pow(10.0, -5.0 - 6.0 * (u(rng) + 1.0) / 2.0);
    const Vec3 n =
        Vec3(scale * u(rng), scale * u(rng), u(rng) < 0 ? -1.0 : 1.0)
            .normalized();
    const TangentFrame f = build_frame(Vec3::Zero(), n);
    pole_forms += f.degenerate;
    worst = std::max(worst, orthogonality_error(f.rotation));
  }
  EXPECT_LT(worst, 1e-9);
  EXPECT_GT(pole_forms, 0);
}

TEST(ToTangent, HandComputedPoleExample) {
  const TangentFrame f = build_frame(Vec3(0.2, 0.3, 0.5), Vec3(0, 0, 1));
  const Vec3 q = to_tangent(f, Vec3(0.2, 0.3, 0.5));
  EXPECT_NEAR(q.x(), -0.1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(q.y(), 0.5 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(q.z(), 1.0, 1e-15);
  EXPECT_NEAR(q.x(), -0.070711, 1e-6);
  EXPECT_NEAR(q.y(), 0.353553, 1e-6);
}

TEST(FromTangent, OriginMapsBelowAnchor) {
  const TangentFrame f = build_frame(Vec3(0.3, 0.1, 0.25), Vec3(0, 0, 1));
  EXPECT_LT((from_tangent(f, Vec3::Zero()) - Vec3(0, 0, -0.25)).norm(),
            1e-15);
}

TEST(ToTangent, InPlanePointsShareThirdCoordinate) {
  Rng rng(12);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 2000; ++trial) {
    const Vec3 n = random_unit(rng), p(u(rng), u(rng), u(rng));
    const TangentFrame f = build_frame(p, n);
    const Vec3 a = n.unitOrthogonal(), b = n.cross(a);
    const Vec3 m = p + u(rng) * a + u(rng) * b;
    const double zp = to_tangent(f, p).z();
    EXPECT_NEAR(to_tangent(f, m).z(), zp, 1e-9);
    EXPECT_NEAR(zp, 2.0 * p.dot(n), 1e-12);
  }
}

TEST(ToTangent, RoundtripAndRigidity) {
  Rng rng(13);
  std::uniform_real_distribution<double> u(-2, 2);
  double worst_rt = 0.0, worst_dist = 0.0;
  for (int trial = 0; trial < 20000; ++trial) {
    Vec3 n = random_unit(rng);
    if (trial % 100 == 0) n = Vec3(0, 0, trial % 200 == 0 ? 1.0 : -1.0);
    const Vec3 anchor(u(rng), u(rng), u(rng));
    const TangentFrame f = build_frame(anchor, n);
    const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng));
    worst_rt = std::max(worst_rt, (from_tangent(f, to_tangent(f, a)) - a)
                                      .cwiseAbs()
                                      .maxCoeff());
    worst_dist = std::max(
        worst_dist,
        std::abs((to_tangent(f, a) - to_tangent(f, b)).norm() - (a - b).norm()));
  }
  EXPECT_LT(worst_rt, 1e-9);
  EXPECT_LT(worst_dist, 1e-9);
}

TEST(RotateGradient, PoleFrameExample) {
  const TangentFrame f = build_frame(Vec3::Zero(), Vec3(0, 0, 1));
  const Vec3 g = rotate_gradient(f, Vec3(1, 0, 0));
  EXPECT_LT((g - Vec3(kH, kH, 0)).norm(), 1e-15);
}

TEST(RotateGradient, NormalGradientHasNoTangentialPart) {
  Rng rng(14);
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3 n = random_unit(rng);
    const TangentFrame f = build_frame(Vec3::Zero(), n);
    const Vec3 g = rotate_gradient(f, 2.5 * f.normal);
    EXPECT_NEAR(g.x(), 0.0, 1e-12);
    EXPECT_NEAR(g.y(), 0.0, 1e-12);
  }
}

TEST(RotateGradient, PreservesNorm) {
  Rng rng(15);
  std::normal_distribution<double> gd(0, 3);
  for (int trial = 0; trial < 1000; ++trial) {
    const TangentFrame f = build_frame(Vec3::Zero(), random_unit(rng));
    const Vec3 g(gd(rng), gd(rng), gd(rng));
    EXPECT_NEAR(rotate_gradient(f, g).norm(), g.norm(), 1e-9);
  }
}

TEST(RotateGradient, ChainRuleOfInverseTransform) {
  // d/dp' of a linear function w.p evaluated at p = from_tangent(p').
  Rng rng(16);
  for (int trial = 0; trial < 100; ++trial) {
    const TangentFrame f = build_frame(Vec3(0.1, 0.2, 0.3), random_unit(rng));
    const Vec3 w = random_unit(rng), q(0.3, -0.2, 0.5);
    const double h = 1e-6;
    Vec3 fd;
    for (int j = 0; j < 3; ++j) {
      Vec3 e = Vec3::Zero();
      e[j] = h;
      fd[j] = (w.dot(from_tangent(f, q + e)) - w.dot(from_tangent(f, q - e))) /
              (2 * h);
    }
    EXPECT_LT((rotate_gradient(f, w) - fd).norm(), 1e-8);
  }
}

TEST(BuildFrames, PlanarGrid) {
  PointCloud c;
  for (int x = 0; x < 12; ++x) {
    for (int y = 0; y < 12; ++y) c.points.emplace_back(x * 0.1, y * 0.1, 0.3);
  }
  const TangentFrameSet fs = build_frames(c, 20);
  ASSERT_EQ(fs.size(), c.size());
  EXPECT_EQ(fs.k, 20u);
  for (const TangentFrame& f : fs.frames) {
    EXPECT_NEAR((f.normal - Vec3(0, 0, 1)).norm(), 0.0, 1e-9);
    EXPECT_TRUE(f.degenerate);
  }
}

TEST(BuildFrames, SphereNormalsAreRadial) {
  Rng rng(17);
  PointCloud c;
  for (int i = 0; i < 1024; ++i) c.points.push_back(random_unit(rng));
  const TangentFrameSet fs = build_frames(c, 20);
  double mean = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    mean += std::abs(fs[i].normal.dot(c[i].normalized()));
  }
  EXPECT_GT(mean / static_cast<double>(c.size()), 0.95);
}

TEST(BuildFrames, MinimalCloud) {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const TangentFrameSet fs = build_frames(c, 3);
  EXPECT_EQ(fs.size(), 4u);
  EXPECT_THROW(build_frames(c, 2), ParameterError);
}

TEST(BuildFrames, CloudLevelTransformRoundtrip) {
  const PointCloud c = random_cloud(200, 18);
  const TangentFrameSet fs = build_frames(c, 10);
  const std::vector<Vec3> t = to_tangent(fs, c);
  const PointCloud back = from_tangent(fs, t);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_LT((back[i] - c[i]).norm(), 1e-12);
  }
  const TangentFrameSet again = build_frames(c, 10);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(again[i].rotation, fs[i].rotation);
  }
}

}  // namespace
}  // namespace siadv
