#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "siadv/classifier.hpp"
#include "siadv/data.hpp"
#include "siadv/geometry.hpp"
#include "siadv/rng.hpp"

namespace siadv::test {

inline Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(g(rng), g(rng), g(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

inline PointCloud random_cloud(std::size_t n, std::uint64_t seed,
                               double half = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-half, half);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
  return c;
}

/// Datasets and quickly trained models shared by the tests. The models are
/// cached as checkpoints in the build tree because every test case runs in
/// its own process under ctest; checkpoints roundtrip bitwise.
struct Fixtures {
  SyntheticDataset train;
  SyntheticDataset test;
  ClassifierParams model_a;
  ClassifierParams model_b;
};

inline const Fixtures& fixtures() {
  static const Fixtures f = [] {
    Fixtures out;
    out.train = make_dataset(Split::Train, 240, kDefaultPoints, 11);
    out.test = make_dataset(Split::Test, 48, kDefaultPoints, 11);
    const std::filesystem::path dir = SIADV_TEST_CACHE_DIR;
    auto model = [&](Arch arch, std::uint64_t seed, const char* name) {
      const auto path = dir / name;
      if (std::filesystem::exists(path)) return load_params(path, arch);
      TrainConfig cfg;
      cfg.epochs = 10;
      cfg.seed = seed;
      cfg.failure_accuracy = 0.0;
      ClassifierParams p = train(arch, kClassCount, out.train.samples,
                                 out.test.samples, cfg);
      std::filesystem::create_directories(dir);
      save_params(p, path);
      return p;
    };
    out.model_a = model(Arch::VariantA, 3, "fixture_a_v1.json");
    out.model_b = model(Arch::VariantB, 4, "fixture_b_v1.json");
    return out;
  }();
  return f;
}

/// Test clouds the model classifies correctly.
inline std::vector<PointCloud> correctly_classified(
    const ClassifierParams& model, std::size_t limit) {
  std::vector<PointCloud> out;
  for (const PointCloud& c : fixtures().test.samples) {
    if (out.size() == limit) break;
    if (static_cast<int>(predict(model, c)) == *c.label) out.push_back(c);
  }
  return out;
}

}  // namespace siadv::test
