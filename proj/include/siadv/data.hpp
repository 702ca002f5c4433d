#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "siadv/geometry.hpp"
#include "siadv/rng.hpp"

namespace siadv {

enum class ShapeClass {
  Sphere,
  Cube,
  Cylinder,
  Cone,
  Torus,
  Plane,
  Pyramid,
  Capsule
};

inline constexpr std::size_t kClassCount = 8;
inline constexpr std::size_t kDefaultPoints = 1024;
inline constexpr double kSurfaceJitter = 0.005;

const std::array<std::string_view, kClassCount>& class_names();
ShapeClass shape_from_label(std::size_t label);

/// Shape dimensions in raw (pre-normalization) units. Which fields matter
/// depends on the class:
///   sphere   radius
///   cube     half_extent
///   cylinder radius, height
///   cone     radius, height
///   torus    radius (major), minor_radius
///   plane    half_extent (x), half_width (y)
///   pyramid  half_extent (circumradius of the triangular base), height
///   capsule  radius, height (length of the straight section)
/// All shapes are rotated by `yaw` about z after sampling.
struct ShapeParams {
  double radius = 1.0;
  double half_extent = 1.0;
  double half_width = 1.0;
  double height = 2.0;
  double minor_radius = 0.3;
  double yaw = 0.0;
};

ShapeParams random_shape_params(ShapeClass shape, Rng& rng);

/// Area-uniform samples on the shape surface, before jitter and
/// normalization.
std::vector<Vec3> sample_surface(ShapeClass shape, const ShapeParams& params,
                                 std::size_t n, Rng& rng);

/// Surface samples plus Gaussian jitter, normalized into [-1, 1]^3.
PointCloud generate(ShapeClass shape, const ShapeParams& params,
                    std::size_t n_points, std::uint64_t seed);
/// Same with shape parameters drawn from `seed`.
PointCloud generate(ShapeClass shape, std::size_t n_points,
                    std::uint64_t seed);

/// Centroid to origin, then divide by the largest absolute coordinate.
/// Throws ParameterError when every point coincides.
PointCloud normalize_unit_cube(const PointCloud& cloud);

struct AugmentConfig {
  bool rotate = true;          // uniform yaw in [0, 2 pi)
  double jitter_sigma = 0.01;  // per coordinate, 0 disables
  double jitter_clip = 0.05;
  double max_drop = 0.10;      // drop U[0, max_drop] of points, resample
};

PointCloud augment(const PointCloud& cloud, std::uint64_t seed,
                   const AugmentConfig& config = {});

enum class Split { Train, Test };
std::string_view split_name(Split split);

struct SyntheticDataset {
  std::vector<PointCloud> samples;
  std::vector<std::string> class_names;
  Split split = Split::Train;
  std::uint64_t seed = 0;
  std::size_t n_points = kDefaultPoints;
};

/// Balanced split: sample i has label i % 8 and its own seed derived from
/// (master seed, split, i), so train and test never share a sample seed.
SyntheticDataset make_dataset(Split split, std::size_t count,
                              std::size_t n_points, std::uint64_t master_seed);

// ---------------------------------------------------------------------------
// File formats

/// One "x y z" line per point, '#' lines ignored.
PointCloud parse_xyz(std::string_view text);
std::string format_xyz(const PointCloud& cloud);
PointCloud read_xyz(const std::filesystem::path& path);
void write_xyz(const PointCloud& cloud, const std::filesystem::path& path);

/// Blue (low) to red (high) by quantile of each scalar among all scalars.
std::array<std::uint8_t, 3> quantile_color(double quantile);
std::string format_ply_colored(const PointCloud& cloud,
                               std::span<const double> scalars);
void write_ply_colored(const PointCloud& cloud,
                       std::span<const double> scalars,
                       const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);
std::string read_file(const std::filesystem::path& path);

struct DatasetOnDisk {
  std::uint64_t seed = 0;
  std::size_t n_points = kDefaultPoints;
  std::vector<PointCloud> train;
  std::vector<PointCloud> test;
};

/// DIR/manifest.json plus DIR/{train,test}/NNNNNN_<class>.xyz.
void save_dataset(const std::filesystem::path& dir, const DatasetOnDisk& data);
DatasetOnDisk load_dataset(const std::filesystem::path& dir);

}  // namespace siadv
