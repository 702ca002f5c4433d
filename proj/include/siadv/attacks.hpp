#pragma once

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "siadv/classifier.hpp"
#include "siadv/evaluation.hpp"
#include "siadv/outcome.hpp"

namespace siadv {

struct WhiteBoxConfig {
  double step_size = 0.007;  // beta, transformed-coordinate units
  std::size_t iterations = 50;
  double linf_radius = 0.16;
  std::size_t knn_k = kDefaultNeighbors;

  void validate() const;  // throws ParameterError
};

enum class Ordering {
  Sensitivity,      // surrogate sensitivity ranking, tangent bases
  Random,           // seeded random point order, tangent bases
  Ascending,        // reverse sensitivity ranking, tangent bases
  SimbaRandomAxes,  // 3N ambient axes in seeded random order
  SimbaPlus,        // ambient axes by descending |surrogate gradient|
};

std::string_view ordering_name(Ordering o);
Ordering parse_ordering(std::string_view name);
bool uses_tangent_bases(Ordering o);

/// Which sign of the step is queried first for each basis.
///   Descent: the sign that lowers the surrogate margin (-eps on tangent
///            bases, -sign(g) on SimBA+ axes); random axes try +eps first.
///   Plus:    always +eps first.
enum class FirstSign { Descent, Plus };

std::string_view first_sign_name(FirstSign s);
FirstSign parse_first_sign(std::string_view name);

struct BlackBoxConfig {
  double step_size = 0.32;  // epsilon
  std::size_t max_queries = 10000;
  Ordering ordering = Ordering::Sensitivity;
  std::uint64_t seed = 0;
  std::size_t knn_k = kDefaultNeighbors;
  FirstSign first_sign = FirstSign::Descent;

  void validate() const;  // throws ParameterError
};

/// Opaque score interface to the target model. One instance per attack run;
/// implementations may keep per-run caches.
class ScoreOracle {
 public:
  virtual ~ScoreOracle() = default;
  Logits query(const PointCloud& cloud);
  std::size_t queries() const { return queries_; }

 protected:
  virtual Logits evaluate(const PointCloud& cloud) = 0;

 private:
  std::size_t queries_ = 0;
};

/// A classifier, optionally behind a defense. Drop defenses draw a fresh
/// subset on every query from (seed, query number).
class ModelOracle : public ScoreOracle {
 public:
  explicit ModelOracle(const ClassifierParams& params,
                       Defense defense = Defense::None,
                       std::uint64_t seed = 0);

 protected:
  Logits evaluate(const PointCloud& cloud) override;

 private:
  IncrementalForward net_;
  Defense defense_;
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
};

/// Iterative tangent-plane attack: per step, fresh frames from the current
/// cloud, tangential gradient normalized by its global norm, descent by
/// beta, inverse transform, per-coordinate clip to the clean cloud.
AttackOutcome whitebox_attack(const ClassifierParams& model,
                              const PointCloud& cloud, std::size_t label,
                              const WhiteBoxConfig& cfg);

/// Same loop in ambient coordinates with the full 3D gradient.
AttackOutcome ifgm_baseline(const ClassifierParams& model,
                            const PointCloud& cloud, std::size_t label,
                            const WhiteBoxConfig& cfg);

/// Query attack: unit bases in the order of `cfg.ordering`, each tried with
/// both signs at most once; a trial is kept when the target's true-class
/// probability strictly decreases.
AttackOutcome blackbox_attack(ScoreOracle& target,
                              const ClassifierParams& surrogate,
                              const PointCloud& cloud, std::size_t label,
                              const BlackBoxConfig& cfg);

enum class AttackMode { WhiteBox, Ifgm, BlackBox };

std::string_view attack_mode_name(AttackMode m);

struct BatchSpec {
  AttackMode mode = AttackMode::WhiteBox;
  const ClassifierParams* target = nullptr;
  const ClassifierParams* surrogate = nullptr;  // black-box only
  WhiteBoxConfig white;
  BlackBoxConfig black;
  Defense defense = Defense::None;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct BatchResult {
  std::vector<AttackOutcome> outcomes;
  std::optional<MetricReport> report;  // absent for an empty batch
};

/// Attacks every labelled sample. Sample i uses seeds derived from
/// (spec.seed, i), so results do not depend on `jobs`. White-box success
/// under a defense is judged on the defended cloud after the attack;
/// black-box attacks query the defended pipeline directly.
BatchResult batch_attack(const BatchSpec& spec,
                         std::span<const PointCloud> samples);

nlohmann::json to_json(const WhiteBoxConfig& cfg);
nlohmann::json to_json(const BlackBoxConfig& cfg);
nlohmann::json to_json(const MetricReport& report);
/// Per-run record; the trial log is included for black-box runs.
nlohmann::json outcome_json(const AttackOutcome& o,
                            const nlohmann::json& config);

}  // namespace siadv
