#include "siadv/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "siadv/error.hpp"
#include "siadv/parallel.hpp"
#include "siadv/rng.hpp"

namespace siadv {

std::vector<Vec3> gradient_map(const ClassifierParams& model,
                               const TangentFrameSet& frames,
                               const PointCloud& cloud, std::size_t t) {
  if (frames.size() != cloud.size()) {
    throw ParameterError("gradient_map: frames do not match the cloud");
  }
  std::vector<Vec3> g = input_gradient(model, cloud, t);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = rotate_gradient(frames[i], g[i]);
  }
  return g;
}

SensitivityMap sensitivity_scores(std::span<const Vec3> g) {
  SensitivityMap map;
  const std::size_t n = g.size();
  map.gradients.assign(g.begin(), g.end());
  map.scores.resize(n);
  map.directions.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g1 = g[i].x(), g2 = g[i].y();
    map.scores[i] = std::sqrt(g1 * g1 + g2 * g2);
    double theta = map.scores[i] > 0.0 ? std::atan2(g2, g1) : 0.0;
    if (theta == -std::numbers::pi) theta = std::numbers::pi;
    map.directions[i] = theta;
  }
  map.ranking.resize(n);
  std::iota(map.ranking.begin(), map.ranking.end(), 0);
  std::stable_sort(map.ranking.begin(), map.ranking.end(),
                   [&](std::size_t a, std::size_t b) {
                     return map.scores[a] > map.scores[b];
                   });
  return map;
}

SensitivityMap compute_sensitivity(const ClassifierParams& model,
                                   const PointCloud& cloud, std::size_t t,
                                   std::size_t k) {
  auto frames = std::make_shared<const TangentFrameSet>(build_frames(cloud, k));
  SensitivityMap map =
      sensitivity_scores(gradient_map(model, *frames, cloud, t));
  map.frames = std::move(frames);
  return map;
}

double topk_overlap(const SensitivityMap& a, const SensitivityMap& b,
                    double fraction) {
  if (a.size() != b.size()) {
    throw ParameterError("topk_overlap: maps differ in size");
  }
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ParameterError("topk_overlap: fraction must lie in (0, 1]");
  }
  const auto k = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(a.size())));
  if (k == 0) throw ParameterError("topk_overlap: K rounds to zero");
  std::vector<char> in_a(a.size(), 0);
  for (std::size_t r = 0; r < k; ++r) in_a[a.ranking[r]] = 1;
  std::size_t common = 0;
  for (std::size_t r = 0; r < k; ++r) common += in_a[b.ranking[r]];
  return static_cast<double>(common) / static_cast<double>(k);
}

std::string_view sweep_ordering_name(SweepOrdering o) {
  switch (o) {
    case SweepOrdering::Descending:
      return "descending";
    case SweepOrdering::Ascending:
      return "ascending";
    case SweepOrdering::Random:
      return "random";
  }
  return "descending";
}

SweepOrdering parse_sweep_ordering(std::string_view name) {
  if (name == "descending") return SweepOrdering::Descending;
  if (name == "ascending") return SweepOrdering::Ascending;
  if (name == "random") return SweepOrdering::Random;
  throw ParameterError("unknown sweep ordering '" + std::string(name) + "'");
}

std::vector<std::size_t> sweep_order(const SensitivityMap& map,
                                     SweepOrdering ordering,
                                     std::uint64_t seed) {
  std::vector<std::size_t> order(map.size());
  std::iota(order.begin(), order.end(), 0);
  switch (ordering) {
    case SweepOrdering::Descending:
      order = map.ranking;
      break;
    case SweepOrdering::Ascending:
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) {
                         return map.scores[a] < map.scores[b];
                       });
      break;
    case SweepOrdering::Random: {
      Rng rng(seed);
      std::shuffle(order.begin(), order.end(), rng);
      break;
    }
  }
  return order;
}

std::vector<double> default_sweep_fractions() {
  std::vector<double> f;
  for (int i = 0; i <= 20; ++i) f.push_back(i / 20.0);
  return f;
}

SweepCurve perturb_sweep(const ClassifierParams& model,
                         std::span<const PointCloud> testset,
                         const SweepConfig& config) {
  SweepCurve curve;
  curve.fractions =
      config.fractions.empty() ? default_sweep_fractions() : config.fractions;
  for (double f : curve.fractions) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw ParameterError("perturb_sweep: fractions must lie in [0, 1]");
    }
  }
  if (!std::is_sorted(curve.fractions.begin(), curve.fractions.end())) {
    throw ParameterError("perturb_sweep: fractions must be ascending");
  }
  curve.accuracy.assign(curve.fractions.size(), 0.0);
  if (testset.empty()) return curve;

  // correct[c][f] = 1 when cloud c is classified correctly at fraction f.
  std::vector<std::vector<char>> correct(testset.size());
  parallel_for(testset.size(), config.jobs, [&](std::size_t c) {
    const PointCloud& clean = testset[c];
    if (!clean.label) throw ParameterError("perturb_sweep: unlabelled cloud");
    const auto t = static_cast<std::size_t>(*clean.label);
    const SensitivityMap map =
        compute_sensitivity(model, clean, t, config.knn_k);
    const std::vector<std::size_t> order =
        sweep_order(map, config.ordering, derive_seed(config.seed, c));

    IncrementalForward net(model);
    PointCloud cloud = clean;
    std::vector<char>& row = correct[c];
    row.resize(curve.fractions.size());
    std::size_t moved = 0;
    for (std::size_t f = 0; f < curve.fractions.size(); ++f) {
      const auto target = static_cast<std::size_t>(std::llround(
          curve.fractions[f] * static_cast<double>(cloud.size())));
      for (; moved < target; ++moved) {
        const std::size_t i = order[moved];
        const TangentFrame& frame = (*map.frames)[i];
        const double th = map.directions[i];
        const Vec3 step(config.step * std::cos(th), config.step * std::sin(th),
                        0.0);
        cloud[i] = from_tangent(frame, to_tangent(frame, clean[i]) - step);
      }
      row[f] = net.evaluate(cloud).argmax() == t;
    }
  });
  for (const auto& row : correct) {
    for (std::size_t f = 0; f < row.size(); ++f) curve.accuracy[f] += row[f];
  }
  for (double& a : curve.accuracy) a /= static_cast<double>(testset.size());
  return curve;
}

}  // namespace siadv
