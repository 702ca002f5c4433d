#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace siadv {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Ordered point set. Index i refers to the same point across every
/// transform, inverse and attack step.
struct PointCloud {
  std::vector<Vec3> points;
  std::optional<int> label;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const Vec3& operator[](std::size_t i) const { return points[i]; }
  Vec3& operator[](std::size_t i) { return points[i]; }
};

inline constexpr std::size_t kDefaultNeighbors = 20;

/// Threshold on 1 - n_z^2 below which the pole (limit) rotation is used.
inline constexpr double kPoleThreshold = 1e-10;

/// Local coordinate system attached to one point: rows of `rotation` are
/// the x', y', z' axes expressed in ambient coordinates, z' being the normal.
struct TangentFrame {
  Vec3 normal = Vec3::UnitZ();
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  bool degenerate = false;  // pole form of the rotation was used
  bool isotropic = false;   // smallest covariance eigenvalue was repeated
};

struct TangentFrameSet {
  std::vector<TangentFrame> frames;
  std::size_t k = kDefaultNeighbors;

  std::size_t size() const { return frames.size(); }
  const TangentFrame& operator[](std::size_t i) const { return frames[i]; }
};

/// k nearest neighbours of point i (i excluded), sorted by (distance, index).
/// Requires 1 <= k <= N - 1; frame construction additionally needs k >= 3.
std::vector<std::size_t> knn(const PointCloud& cloud, std::size_t i,
                             std::size_t k);

/// Sum of outer products of neighbour offsets around point i.
Mat3 covariance(const PointCloud& cloud, std::size_t i,
                std::span<const std::size_t> neighbors);

struct SymmetricEigen {
  Vec3 values;   // unsorted, values[j] belongs to column j of vectors
  Mat3 vectors;  // orthonormal columns
  int sweeps = 0;
};

/// Cyclic Jacobi eigen-decomposition of a symmetric 3x3 matrix.
SymmetricEigen jacobi_eigen(const Mat3& c);

struct NormalEstimate {
  Vec3 normal;
  bool isotropic = false;
};

/// Flip so the first nonzero of (n_z, n_y, n_x) is positive.
Vec3 canonicalize_normal(const Vec3& n);

/// Unit eigenvector of the smallest eigenvalue, sign-canonicalized.
/// Throws ParameterError if `c` is not symmetric within 1e-12.
NormalEstimate estimate_normal(const Mat3& c);

/// Points where the tangent plane through p with normal n meets the x, y and
/// z axes; empty where the plane is parallel to that axis.
std::array<std::optional<Vec3>, 3> axis_intercepts(const Vec3& p,
                                                   const Vec3& n);

/// Throws ParameterError unless |‖n‖ - 1| <= 1e-9.
TangentFrame build_frame(const Vec3& p, const Vec3& n);

/// p' = R (p + T)
Vec3 to_tangent(const TangentFrame& frame, const Vec3& p);
/// p = R^T p' - T
Vec3 from_tangent(const TangentFrame& frame, const Vec3& p_prime);
/// Gradient with respect to p' given the ambient gradient: R g.
Vec3 rotate_gradient(const TangentFrame& frame, const Vec3& g);

/// knn -> covariance -> estimate_normal -> build_frame for every point.
TangentFrameSet build_frames(const PointCloud& cloud,
                             std::size_t k = kDefaultNeighbors);

std::vector<Vec3> to_tangent(const TangentFrameSet& frames,
                             const PointCloud& cloud);
PointCloud from_tangent(const TangentFrameSet& frames,
                        std::span<const Vec3> transformed);

}  // namespace siadv
