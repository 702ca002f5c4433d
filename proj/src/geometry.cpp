#include "siadv/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "siadv/error.hpp"

namespace siadv {

namespace {

constexpr int kMaxJacobiSweeps = 50;
constexpr double kJacobiTolerance = 1e-12;

double off_diagonal_norm(const Mat3& a) {
  return std::sqrt(2.0 * (a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) +
                          a(1, 2) * a(1, 2)));
}

void check_k(std::size_t n, std::size_t k, std::size_t min_k) {
  if (k < min_k || k + 1 > n) {
    throw ParameterError("knn: k=" + std::to_string(k) + " out of range [" +
                         std::to_string(min_k) + ", N-1] for N=" +
                         std::to_string(n));
  }
}

struct CoordinateColumns {
  std::vector<double> x, y, z;

  explicit CoordinateColumns(const PointCloud& cloud)
      : x(cloud.size()), y(cloud.size()), z(cloud.size()) {
    for (std::size_t j = 0; j < cloud.size(); ++j) {
      x[j] = cloud[j].x();
      y[j] = cloud[j].y();
      z[j] = cloud[j].z();
    }
  }
};

/// k nearest neighbours of point i by exhaustive scan, sorted by
/// (squared distance, index). `dist` is scratch space of size N.
void nearest(const CoordinateColumns& c, std::size_t i, std::size_t k,
             std::vector<double>& dist, std::vector<std::size_t>& out) {
  const std::size_t n = c.x.size();
  const double px = c.x[i], py = c.y[i], pz = c.z[i];
  for (std::size_t j = 0; j < n; ++j) {
    const double dx = c.x[j] - px, dy = c.y[j] - py, dz = c.z[j] - pz;
    dist[j] = dx * dx + dy * dy + dz * dz;
  }
  dist[i] = std::numeric_limits<double>::infinity();

  // The k-th smallest of the per-block minima bounds the k-th smallest
  // distance from above, so only entries at or below it can qualify.
  const std::size_t block = std::max<std::size_t>(1, n / (2 * k));
  std::vector<double> minima;
  minima.reserve(n / block + 1);
  for (std::size_t b = 0; b < n; b += block) {
    const std::size_t e = std::min(n, b + block);
    double m = dist[b];
    for (std::size_t j = b + 1; j < e; ++j) m = std::min(m, dist[j]);
    if (std::isfinite(m)) minima.push_back(m);
  }
  double bound = std::numeric_limits<double>::infinity();
  if (minima.size() >= k) {
    std::nth_element(minima.begin(), minima.begin() + (k - 1), minima.end());
    bound = minima[k - 1];
  }

  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(4 * k);
  for (std::size_t j = 0; j < n; ++j) {
    if (dist[j] <= bound && j != i) cand.emplace_back(dist[j], j);
  }
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
  out.resize(k);
  for (std::size_t r = 0; r < k; ++r) out[r] = cand[r].second;
}

}  // namespace

std::vector<std::size_t> knn(const PointCloud& cloud, std::size_t i,
                             std::size_t k) {
  const std::size_t n = cloud.size();
  check_k(n, k, 1);
  if (i >= n) throw ParameterError("knn: point index out of range");
  const CoordinateColumns cols(cloud);
  std::vector<double> dist(n);
  std::vector<std::size_t> out;
  nearest(cols, i, k, dist, out);
  return out;
}

Mat3 covariance(const PointCloud& cloud, std::size_t i,
                std::span<const std::size_t> neighbors) {
  if (neighbors.empty()) throw ParameterError("covariance: no neighbours");
  const Vec3& p = cloud[i];
  double xx = 0, xy = 0, xz = 0, yy = 0, yz = 0, zz = 0;
  for (std::size_t j : neighbors) {
    if (j == i) throw ParameterError("covariance: neighbour equals centre");
    const Vec3 d = cloud[j] - p;
    xx += d.x() * d.x();
    xy += d.x() * d.y();
    xz += d.x() * d.z();
    yy += d.y() * d.y();
    yz += d.y() * d.z();
    zz += d.z() * d.z();
  }
  Mat3 c;
  c << xx, xy, xz, xy, yy, yz, xz, yz, zz;
  return c;
}

SymmetricEigen jacobi_eigen(const Mat3& c) {
  Mat3 a = c;
  Mat3 v = Mat3::Identity();
  const double threshold = kJacobiTolerance * std::min(1.0, c.norm());
  int sweep = 0;
  for (; sweep < kMaxJacobiSweeps; ++sweep) {
    const double off = off_diagonal_norm(a);
    if (off == 0.0 || off < threshold) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 0.5 / theta;
        } else {
          t = (theta >= 0 ? 1.0 : -1.0) /
              (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        }
        const double cs = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * cs;
        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = a(q, p) = 0.0;
        const int r = 3 - p - q;
        const double arp = a(r, p);
        const double arq = a(r, q);
        a(r, p) = a(p, r) = cs * arp - sn * arq;
        a(r, q) = a(q, r) = sn * arp + cs * arq;
        for (int row = 0; row < 3; ++row) {
          const double vp = v(row, p);
          const double vq = v(row, q);
          v(row, p) = cs * vp - sn * vq;
          v(row, q) = sn * vp + cs * vq;
        }
      }
    }
  }
  return {a.diagonal(), v, sweep};
}

Vec3 canonicalize_normal(const Vec3& n) {
  for (int axis = 2; axis >= 0; --axis) {
    if (n[axis] != 0.0) return n[axis] < 0.0 ? Vec3(-n) : n;
  }
  return n;
}

NormalEstimate estimate_normal(const Mat3& c) {
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw ParameterError("estimate_normal: matrix is not symmetric");
  }
  const SymmetricEigen eig = jacobi_eigen(c);
  int smallest = 0;
  for (int j = 1; j < 3; ++j) {
    if (eig.values[j] < eig.values[smallest]) smallest = j;
  }
  double second = std::numeric_limits<double>::infinity();
  for (int j = 0; j < 3; ++j) {
    if (j != smallest) second = std::min(second, eig.values[j]);
  }
  const double scale = eig.values.cwiseAbs().maxCoeff();
  NormalEstimate out;
  out.normal = canonicalize_normal(eig.vectors.col(smallest).normalized());
  out.isotropic = (second - eig.values[smallest]) <= 1e-10 * scale;
  return out;
}

std::array<std::optional<Vec3>, 3> axis_intercepts(const Vec3& p,
                                                   const Vec3& n) {
  std::array<std::optional<Vec3>, 3> out;
  const double offset = p.dot(n);
  for (int axis = 0; axis < 3; ++axis) {
    if (n[axis] == 0.0) continue;
    Vec3 x = Vec3::Zero();
    x[axis] = offset / n[axis];
    out[axis] = x;
  }
  return out;
}

TangentFrame build_frame(const Vec3& p, const Vec3& n) {
  const double len = n.norm();
  if (!std::isfinite(len) || std::abs(len - 1.0) > 1e-9) {
    throw ParameterError("build_frame: normal is not unit length");
  }
  TangentFrame f;
  f.normal = n / len;
  const double nx = f.normal.x(), ny = f.normal.y(), nz = f.normal.z();
  if (1.0 - nz * nz >= kPoleThreshold) {
    // sqrt(nx^2 + ny^2) equals sqrt(1 - nz^2) for a unit normal and does not
    // cancel near the poles.
    const double s = std::sqrt(nx * nx + ny * ny);
    f.rotation << ny / s, -nx / s, 0.0,  //
        nx * nz / s, ny * nz / s, -s,    //
        nx, ny, nz;
  } else {
    const double sign = nz < 0.0 ? -1.0 : 1.0;
    const double h = 1.0 / std::sqrt(2.0);
    f.rotation << h, -h, 0.0,  //
        sign * h, sign * h, 0.0,  //
        0.0, 0.0, sign;
    f.degenerate = true;
  }
  f.translation = p.dot(f.normal) * f.normal;
  return f;
}

Vec3 to_tangent(const TangentFrame& frame, const Vec3& p) {
  return frame.rotation * (p + frame.translation);
}

Vec3 from_tangent(const TangentFrame& frame, const Vec3& p_prime) {
  return frame.rotation.transpose() * p_prime - frame.translation;
}

Vec3 rotate_gradient(const TangentFrame& frame, const Vec3& g) {
  return frame.rotation * g;
}

TangentFrameSet build_frames(const PointCloud& cloud, std::size_t k) {
  check_k(cloud.size(), k, 3);
  TangentFrameSet set;
  set.k = k;
  set.frames.reserve(cloud.size());
  const CoordinateColumns cols(cloud);
  std::vector<double> dist(cloud.size());
  std::vector<std::size_t> nb;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    nearest(cols, i, k, dist, nb);
    const NormalEstimate est = estimate_normal(covariance(cloud, i, nb));
    TangentFrame f = build_frame(cloud[i], est.normal);
    f.isotropic = est.isotropic;
    set.frames.push_back(f);
  }
  return set;
}

std::vector<Vec3> to_tangent(const TangentFrameSet& frames,
                             const PointCloud& cloud) {
  if (frames.size() != cloud.size()) {
    throw ParameterError("to_tangent: frame count does not match cloud");
  }
  std::vector<Vec3> out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out[i] = to_tangent(frames[i], cloud[i]);
  }
  return out;
}

PointCloud from_tangent(const TangentFrameSet& frames,
                        std::span<const Vec3> transformed) {
  if (frames.size() != transformed.size()) {
    throw ParameterError("from_tangent: frame count does not match cloud");
  }
  PointCloud out;
  out.points.resize(transformed.size());
  for (std::size_t i = 0; i < transformed.size(); ++i) {
    out[i] = from_tangent(frames[i], transformed[i]);
  }
  return out;
}

}  // namespace siadv
