#include "siadv/data.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "siadv/error.hpp"

namespace siadv {

namespace {

constexpr double kPi = std::numbers::pi;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 unit_sphere(Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (;;) {
    Vec3 v(gauss(rng), gauss(rng), gauss(rng));
    const double len = v.norm();
    if (len > 1e-12) return v / len;
  }
}

Vec3 disk(Rng& rng, double radius, double z) {
  const double r = radius * std::sqrt(uniform(rng, 0.0, 1.0));
  const double phi = uniform(rng, 0.0, 2.0 * kPi);
  return {r * std::cos(phi), r * std::sin(phi), z};
}

Vec3 triangle(Rng& rng, const Vec3& a, const Vec3& b, const Vec3& c) {
  const double s = std::sqrt(uniform(rng, 0.0, 1.0));
  const double t = uniform(rng, 0.0, 1.0);
  return (1.0 - s) * a + s * (1.0 - t) * b + s * t * c;
}

/// Index drawn with probability proportional to `weights`.
std::size_t pick(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform(rng, 0.0, total);
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

Vec3 sample_one(ShapeClass shape, const ShapeParams& p, Rng& rng) {
  switch (shape) {
    case ShapeClass::Sphere:
      return p.radius * unit_sphere(rng);
    case ShapeClass::Cube: {
      const auto face = static_cast<int>(uniform(rng, 0.0, 6.0)) % 6;
      const int axis = face / 2;
      Vec3 v(uniform(rng, -p.half_extent, p.half_extent),
             uniform(rng, -p.half_extent, p.half_extent),
             uniform(rng, -p.half_extent, p.half_extent));
      v[axis] = (face % 2 == 0) ? p.half_extent : -p.half_extent;
      return v;
    }
    case ShapeClass::Cylinder: {
      const double r = p.radius, h = p.height;
      const double w[3] = {2.0 * kPi * r * h, kPi * r * r, kPi * r * r};
      switch (pick(rng, w)) {
        case 0: {
          const double phi = uniform(rng, 0.0, 2.0 * kPi);
          return {r * std::cos(phi), r * std::sin(phi),
                  uniform(rng, -h / 2, h / 2)};
        }
        case 1:
          return disk(rng, r, h / 2);
        default:
          return disk(rng, r, -h / 2);
      }
    }
    case ShapeClass::Cone: {
      const double r = p.radius, h = p.height;
      const double slant = std::sqrt(r * r + h * h);
      const double w[2] = {kPi * r * slant, kPi * r * r};
      if (pick(rng, w) == 0) {
        // Distance from the apex scales with sqrt(u) for area uniformity.
        const double s = std::sqrt(uniform(rng, 0.0, 1.0));
        const double phi = uniform(rng, 0.0, 2.0 * kPi);
        return {s * r * std::cos(phi), s * r * std::sin(phi), h / 2 - s * h};
      }
      return disk(rng, r, -h / 2);
    }
    case ShapeClass::Torus: {
      const double big = p.radius, small = p.minor_radius;
      for (;;) {
        const double psi = uniform(rng, 0.0, 2.0 * kPi);
        const double accept = (big + small * std::cos(psi)) / (big + small);
        if (uniform(rng, 0.0, 1.0) > accept) continue;
        const double phi = uniform(rng, 0.0, 2.0 * kPi);
        const double ring = big + small * std::cos(psi);
        return {ring * std::cos(phi), ring * std::sin(phi),
                small * std::sin(psi)};
      }
    }
    case ShapeClass::Plane:
      return {uniform(rng, -p.half_extent, p.half_extent),
              uniform(rng, -p.half_width, p.half_width), 0.0};
    case ShapeClass::Pyramid: {
      // Triangular base inscribed in a circle of radius half_extent.
      const double a = p.half_extent, h = p.height;
      const Vec3 apex(0, 0, h / 2);
      Vec3 corners[3];
      for (int k = 0; k < 3; ++k) {
        const double phi = 2.0 * kPi * k / 3.0;
        corners[k] = {a * std::cos(phi), a * std::sin(phi), -h / 2};
      }
      double w[4];
      for (int k = 0; k < 3; ++k) {
        w[k] = 0.5 * (corners[k] - apex).cross(corners[(k + 1) % 3] - apex).norm();
      }
      w[3] = 0.5 * (corners[1] - corners[0]).cross(corners[2] - corners[0]).norm();
      const std::size_t f = pick(rng, w);
      if (f == 3) return triangle(rng, corners[0], corners[1], corners[2]);
      return triangle(rng, apex, corners[f], corners[(f + 1) % 3]);
    }
    case ShapeClass::Capsule: {
      const double r = p.radius, len = p.height;
      const double w[2] = {2.0 * kPi * r * len, 4.0 * kPi * r * r};
      if (pick(rng, w) == 0) {
        const double phi = uniform(rng, 0.0, 2.0 * kPi);
        return {r * std::cos(phi), r * std::sin(phi),
                uniform(rng, -len / 2, len / 2)};
      }
      Vec3 v = r * unit_sphere(rng);
      v.z() += v.z() >= 0 ? len / 2 : -len / 2;
      return v;
    }
  }
  throw ParameterError("sample_surface: unknown shape class");
}

Mat3 yaw_matrix(double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

}  // namespace

const std::array<std::string_view, kClassCount>& class_names() {
  static const std::array<std::string_view, kClassCount> names = {
      "sphere", "cube",  "cylinder", "cone",
      "torus",  "plane", "pyramid",  "capsule"};
  return names;
}

ShapeClass shape_from_label(std::size_t label) {
  if (label >= kClassCount) throw ParameterError("label out of range");
  return static_cast<ShapeClass>(label);
}

ShapeParams random_shape_params(ShapeClass shape, Rng& rng) {
  ShapeParams p;
  p.yaw = uniform(rng, 0.0, 2.0 * kPi);
  switch (shape) {
    case ShapeClass::Sphere:
      p.radius = uniform(rng, 0.5, 1.5);
      break;
    case ShapeClass::Cube:
      p.half_extent = uniform(rng, 0.5, 1.5);
      break;
    case ShapeClass::Cylinder:
      // height / diameter in [0.5, 3]
      p.radius = 1.0;
      p.height = 2.0 * uniform(rng, 0.5, 3.0);
      break;
    case ShapeClass::Cone:
      p.radius = 1.0;
      p.height = uniform(rng, 1.0, 3.0);
      break;
    case ShapeClass::Torus:
      p.radius = 1.0;
      p.minor_radius = uniform(rng, 0.2, 0.5);
      break;
    case ShapeClass::Plane:
      p.half_extent = 1.0;
      p.half_width = uniform(rng, 0.5, 1.0);
      break;
    case ShapeClass::Pyramid:
      p.half_extent = 1.0;
      p.height = uniform(rng, 1.0, 3.0);
      break;
    case ShapeClass::Capsule:
      // straight section / diameter in [0.5, 2]
      p.radius = 1.0;
      p.height = 2.0 * uniform(rng, 0.5, 2.0);
      break;
  }
  return p;
}

std::vector<Vec3> sample_surface(ShapeClass shape, const ShapeParams& params,
                                 std::size_t n, Rng& rng) {
  const Mat3 yaw = yaw_matrix(params.yaw);
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(yaw * sample_one(shape, params, rng));
  }
  return out;
}

PointCloud generate(ShapeClass shape, const ShapeParams& params,
                    std::size_t n_points, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud cloud;
  cloud.points = sample_surface(shape, params, n_points, rng);
  std::normal_distribution<double> jitter(0.0, kSurfaceJitter);
  for (Vec3& p : cloud.points) {
    p += Vec3(jitter(rng), jitter(rng), jitter(rng));
  }
  cloud = normalize_unit_cube(cloud);
  cloud.label = static_cast<int>(shape);
  return cloud;
}

PointCloud generate(ShapeClass shape, std::size_t n_points,
                    std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5ba9e));
  const ShapeParams params = random_shape_params(shape, rng);
  return generate(shape, params, n_points, seed);
}

PointCloud normalize_unit_cube(const PointCloud& cloud) {
  if (cloud.empty()) throw ParameterError("normalize_unit_cube: empty cloud");
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : cloud.points) centroid += p;
  centroid /= static_cast<double>(cloud.size());
  double scale = 0.0;
  for (const Vec3& p : cloud.points) {
    scale = std::max(scale, (p - centroid).cwiseAbs().maxCoeff());
  }
  // Rounding in the centroid leaves a tiny nonzero scale for coincident points.
  const double tiny = 1e-12 * std::max(1.0, centroid.cwiseAbs().maxCoeff());
  if (!(scale > tiny) || !std::isfinite(scale)) {
    throw ParameterError("normalize_unit_cube: zero scale");
  }
  PointCloud out = cloud;
  for (Vec3& p : out.points) p = (p - centroid) / scale;
  return out;
}

PointCloud augment(const PointCloud& cloud, std::uint64_t seed,
                   const AugmentConfig& config) {
  Rng rng(seed);
  PointCloud out = cloud;
  if (config.rotate) {
    const Mat3 r = yaw_matrix(uniform(rng, 0.0, 2.0 * kPi));
    for (Vec3& p : out.points) p = r * p;
  }
  if (config.jitter_sigma > 0.0) {
    std::normal_distribution<double> gauss(0.0, config.jitter_sigma);
    for (Vec3& p : out.points) {
      for (int a = 0; a < 3; ++a) {
        p[a] += std::clamp(gauss(rng), -config.jitter_clip, config.jitter_clip);
      }
    }
  }
  const std::size_t n = out.size();
  if (config.max_drop > 0.0 && n > 1) {
    const double ratio = uniform(rng, 0.0, config.max_drop);
    const auto dropped = static_cast<std::size_t>(ratio * n);
    if (dropped > 0 && dropped < n) {
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<Vec3> kept;
      kept.reserve(n);
      std::vector<std::size_t> survivors(order.begin() + dropped, order.end());
      std::sort(survivors.begin(), survivors.end());
      for (std::size_t i : survivors) kept.push_back(out[i]);
      std::uniform_int_distribution<std::size_t> any(0, survivors.size() - 1);
      while (kept.size() < n) kept.push_back(kept[any(rng)]);
      out.points = std::move(kept);
    }
  }
  return out;
}

std::string_view split_name(Split split) {
  return split == Split::Train ? "train" : "test";
}

SyntheticDataset make_dataset(Split split, std::size_t count,
                              std::size_t n_points,
                              std::uint64_t master_seed) {
  SyntheticDataset ds;
  ds.split = split;
  ds.seed = master_seed;
  ds.n_points = n_points;
  for (auto name : class_names()) ds.class_names.emplace_back(name);
  ds.samples.reserve(count);
  const std::uint64_t stream = split == Split::Train ? 1 : 2;
  for (std::size_t i = 0; i < count; ++i) {
    const ShapeClass shape = shape_from_label(i % kClassCount);
    ds.samples.push_back(
        generate(shape, n_points, derive_seed(master_seed, stream, i)));
  }
  return ds;
}

}  // namespace siadv
