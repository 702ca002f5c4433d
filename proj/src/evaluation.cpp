#include "siadv/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "siadv/error.hpp"
#include "siadv/rng.hpp"

namespace siadv {

namespace {

void require_nonempty(const PointCloud& c, const char* what) {
  if (c.empty()) throw ParameterError(std::string(what) + ": empty cloud");
}

/// Fixed evaluation order (x, then y, then z) so results do not depend on
/// how a vector expression happens to be reduced.
double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// For every point of `from`, the squared distance to its nearest point of
/// `to`.
std::vector<double> nearest_squared(const PointCloud& from,
                                    const PointCloud& to) {
  std::vector<double> out(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& q : to.points) {
      best = std::min(best, squared_distance(from[i], q));
    }
    out[i] = best;
  }
  return out;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) /
         static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

double l2_distance(const PointCloud& a, const PointCloud& b) {
  if (a.size() != b.size()) {
    throw ParameterError("l2_distance: clouds differ in size");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sum += (a[i] - b[i]).squaredNorm();
  }
  return std::sqrt(sum);
}

double chamfer(const PointCloud& a, const PointCloud& b) {
  require_nonempty(a, "chamfer");
  require_nonempty(b, "chamfer");
  return 0.5 * (mean(nearest_squared(a, b)) + mean(nearest_squared(b, a)));
}

double hausdorff(const PointCloud& adv, const PointCloud& clean) {
  require_nonempty(adv, "hausdorff");
  require_nonempty(clean, "hausdorff");
  const std::vector<double> d = nearest_squared(adv, clean);
  return std::sqrt(*std::max_element(d.begin(), d.end()));
}

std::vector<double> mean_knn_distances(const PointCloud& cloud,
                                       std::size_t k) {
  const std::size_t n = cloud.size();
  if (k == 0 || n <= k) {
    throw ParameterError("sor: need more than k=" + std::to_string(k) +
                         " points");
  }
  std::vector<double> out(n);
  std::vector<double> row(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row[r++] = (cloud[i] - cloud[j]).norm();
    }
    std::partial_sort(row.begin(), row.begin() + k, row.end());
    double s = 0.0;
    for (std::size_t q = 0; q < k; ++q) s += row[q];
    out[i] = s / static_cast<double>(k);
  }
  return out;
}

std::vector<std::size_t> sor_keep(const PointCloud& cloud, std::size_t k,
                                  double alpha) {
  const std::vector<double> d = mean_knn_distances(cloud, k);
  const double mu = mean(d);
  double var = 0.0;
  for (double v : d) var += (v - mu) * (v - mu);
  const double sigma = std::sqrt(var / static_cast<double>(d.size()));
  const double threshold = mu + alpha * sigma;
  std::vector<std::size_t> keep;
  keep.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(d[i] > threshold)) keep.push_back(i);
  }
  if (keep.empty()) throw DefenseError("sor: every point was removed");
  return keep;
}

PointCloud sor_defense(const PointCloud& cloud, std::size_t k, double alpha) {
  return subset(cloud, sor_keep(cloud, k, alpha));
}

std::vector<std::size_t> random_drop_keep(std::size_t n, double ratio,
                                          std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw ParameterError("random_drop: ratio must lie in [0, 1)");
  }
  // ceil((1 - r) n) written as n - floor(r n) to avoid 0.7 * 1000 = 700.0..1
  const auto dropped = static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(n) + 1e-9));
  const std::size_t kept = n - std::min(dropped, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates: the first `kept` slots are a uniform sample.
  for (std::size_t i = 0; i < kept; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(kept);
  std::sort(idx.begin(), idx.end());
  return idx;
}

PointCloud random_drop(const PointCloud& cloud, double ratio,
                       std::uint64_t seed) {
  return subset(cloud, random_drop_keep(cloud.size(), ratio, seed));
}

PointCloud subset(const PointCloud& cloud, std::span<const std::size_t> keep) {
  PointCloud out;
  out.label = cloud.label;
  out.points.reserve(keep.size());
  for (std::size_t i : keep) out.points.push_back(cloud[i]);
  return out;
}

std::string_view defense_name(Defense d) {
  switch (d) {
    case Defense::None:
      return "none";
    case Defense::Sor:
      return "sor";
    case Defense::Drop30:
      return "drop30";
    case Defense::Drop50:
      return "drop50";
  }
  return "none";
}

Defense parse_defense(std::string_view name) {
  if (name == "none") return Defense::None;
  if (name == "sor") return Defense::Sor;
  if (name == "drop30") return Defense::Drop30;
  if (name == "drop50") return Defense::Drop50;
  throw ParameterError("unknown defense '" + std::string(name) + "'");
}

std::vector<std::size_t> defense_keep(const PointCloud& cloud, Defense d,
                                      std::uint64_t seed) {
  switch (d) {
    case Defense::Sor:
      return sor_keep(cloud);
    case Defense::Drop30:
      return random_drop_keep(cloud.size(), 0.3, seed);
    case Defense::Drop50:
      return random_drop_keep(cloud.size(), 0.5, seed);
    case Defense::None:
      break;
  }
  std::vector<std::size_t> all(cloud.size());
  std::iota(all.begin(), all.end(), 0);
  return all;
}

MetricReport aggregate(std::span<const AttackOutcome> outcomes,
                       bool successes_only) {
  if (outcomes.empty()) throw ParameterError("aggregate: no outcomes");
  MetricReport r;
  r.n_samples = outcomes.size();
  r.successes_only = successes_only;
  std::vector<double> queries, l2, cd, hd, time;
  for (const AttackOutcome& o : outcomes) {
    if (o.success) ++r.n_success;
    if (successes_only && !o.success) continue;
    queries.push_back(static_cast<double>(o.queries));
    l2.push_back(o.l2);
    cd.push_back(o.chamfer);
    hd.push_back(o.hausdorff);
    time.push_back(o.wall_time_seconds);
  }
  r.asr = static_cast<double>(r.n_success) / static_cast<double>(r.n_samples);
  if (!queries.empty()) {
    r.avg_queries = mean(queries);
    r.median_queries = median(queries);
    r.mean_l2 = mean(l2);
    r.mean_chamfer = kChamferScale * mean(cd);
    r.mean_hausdorff = kHausdorffScale * mean(hd);
    r.mean_time_s = mean(time);
  }
  return r;
}

}  // namespace siadv
