#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "siadv/geometry.hpp"
#include "siadv/outcome.hpp"

namespace siadv {

/// Frobenius norm of the coordinate difference of index-aligned clouds.
double l2_distance(const PointCloud& a, const PointCloud& b);

/// 0.5 * (mean_a min_b |x-y|^2 + mean_b min_a |x-y|^2)
double chamfer(const PointCloud& a, const PointCloud& b);

/// Directed: max over adversarial points of the distance to the nearest
/// clean point.
double hausdorff(const PointCloud& adv, const PointCloud& clean);

/// Mean distance from each point to its k nearest other points.
std::vector<double> mean_knn_distances(const PointCloud& cloud, std::size_t k);

/// Indices kept by statistical outlier removal: points whose mean k-NN
/// distance exceeds mean + alpha * stddev are dropped.
std::vector<std::size_t> sor_keep(const PointCloud& cloud, std::size_t k = 2,
                                  double alpha = 1.1);
PointCloud sor_defense(const PointCloud& cloud, std::size_t k = 2,
                       double alpha = 1.1);

/// ceil((1 - ratio) * N) indices sampled without replacement, ascending.
std::vector<std::size_t> random_drop_keep(std::size_t n, double ratio,
                                          std::uint64_t seed);
PointCloud random_drop(const PointCloud& cloud, double ratio,
                       std::uint64_t seed);

PointCloud subset(const PointCloud& cloud, std::span<const std::size_t> keep);

enum class Defense { None, Sor, Drop30, Drop50 };

std::string_view defense_name(Defense d);
Defense parse_defense(std::string_view name);  // none|sor|drop30|drop50

/// Surviving indices under `d`; the seed only matters for the drops.
std::vector<std::size_t> defense_keep(const PointCloud& cloud, Defense d,
                                      std::uint64_t seed);

struct MetricReport {
  double asr = 0.0;
  double avg_queries = 0.0;
  double median_queries = 0.0;
  double mean_l2 = 0.0;
  double mean_chamfer = 0.0;    // x 1e4
  double mean_hausdorff = 0.0;  // x 1e2
  double mean_time_s = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_success = 0;
  bool successes_only = false;  // distance/query means over successes only
};

inline constexpr double kChamferScale = 1e4;
inline constexpr double kHausdorffScale = 1e2;

/// Throws ParameterError on an empty set.
MetricReport aggregate(std::span<const AttackOutcome> outcomes,
                       bool successes_only = false);

}  // namespace siadv
