#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "siadv/classifier.hpp"
#include "siadv/geometry.hpp"

namespace siadv {

struct SensitivityMap {
  std::vector<double> scores;        // s_i >= 0
  std::vector<double> directions;    // theta_i in (-pi, pi]
  std::vector<std::size_t> ranking;  // descending score, ascending index
  std::vector<Vec3> gradients;       // transformed gradients g'_i
  std::shared_ptr<const TangentFrameSet> frames;

  std::size_t size() const { return scores.size(); }
};

/// Ambient margin-loss gradient rotated into each point's frame. The z'
/// component is kept.
std::vector<Vec3> gradient_map(const ClassifierParams& model,
                               const TangentFrameSet& frames,
                               const PointCloud& cloud, std::size_t t);

/// s_i = |(g'_1, g'_2)|, theta_i = atan2(g'_2, g'_1). Zero-score points get
/// theta = 0 and therefore sort last.
SensitivityMap sensitivity_scores(std::span<const Vec3> transformed_gradients);

/// Frames from `cloud`, then gradient_map and sensitivity_scores.
SensitivityMap compute_sensitivity(const ClassifierParams& model,
                                   const PointCloud& cloud, std::size_t t,
                                   std::size_t k = kDefaultNeighbors);

/// |topK(a) n topK(b)| / K with K = round(fraction * N).
double topk_overlap(const SensitivityMap& a, const SensitivityMap& b,
                    double fraction);

enum class SweepOrdering { Descending, Ascending, Random };

std::string_view sweep_ordering_name(SweepOrdering o);
SweepOrdering parse_sweep_ordering(std::string_view name);

/// Point order used by the sweep: ranking, its reverse by (score, index)
/// ascending, or a seeded shuffle.
std::vector<std::size_t> sweep_order(const SensitivityMap& map,
                                     SweepOrdering ordering,
                                     std::uint64_t seed);

struct SweepConfig {
  SweepOrdering ordering = SweepOrdering::Descending;
  double step = 0.03;
  std::vector<double> fractions;  // empty: 0, 0.05, ..., 1
  std::uint64_t seed = 0;         // random ordering, per cloud derived
  std::size_t knn_k = kDefaultNeighbors;
  std::size_t jobs = 1;
};

struct SweepCurve {
  std::vector<double> fractions;
  std::vector<double> accuracy;
};

std::vector<double> default_sweep_fractions();

/// Moves points one at a time, in sweep order, by `step` along the descent
/// direction -(cos theta_i, sin theta_i, 0) of their clean frame, and
/// records mean accuracy after each grid fraction of points.
SweepCurve perturb_sweep(const ClassifierParams& model,
                         std::span<const PointCloud> testset,
                         const SweepConfig& config);

}  // namespace siadv
