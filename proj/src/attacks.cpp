#include "siadv/attacks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "siadv/error.hpp"
#include "siadv/parallel.hpp"
#include "siadv/rng.hpp"
#include "siadv/sensitivity.hpp"

namespace siadv {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void finish_metrics(AttackOutcome& o, const PointCloud& clean,
                    Clock::time_point t0) {
  o.l2 = l2_distance(o.adversarial, clean);
  o.chamfer = chamfer(o.adversarial, clean);
  o.hausdorff = hausdorff(o.adversarial, clean);
  o.wall_time_seconds = seconds_since(t0);
}

void clip_to(PointCloud& adv, const PointCloud& clean, double radius) {
  for (std::size_t i = 0; i < adv.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      adv[i][a] = std::clamp(adv[i][a], clean[i][a] - radius,
                             clean[i][a] + radius);
    }
  }
}

void check_label(const ClassifierParams& model, std::size_t label) {
  if (label >= model.class_count) {
    throw ParameterError("attack: label out of range");
  }
}

enum class StepSpace { Tangent, Ambient };

AttackOutcome gradient_attack(const ClassifierParams& model,
                              const PointCloud& cloud, std::size_t label,
                              const WhiteBoxConfig& cfg, StepSpace space) {
  cfg.validate();
  check_label(model, label);
  const auto t0 = Clock::now();
  AttackOutcome out;
  out.attack = space == StepSpace::Tangent ? "whitebox" : "ifgm";
  out.label = static_cast<int>(label);
  out.adversarial = cloud;
  PointCloud& adv = out.adversarial;
  const std::size_t n = cloud.size();
  std::vector<Vec3> step(n);

  for (; out.iterations < cfg.iterations; ++out.iterations) {
    const MarginGradient mg = margin_loss_gradient(model, adv, label);
    if (mg.loss == 0.0) break;
    if (space == StepSpace::Tangent) {
      const TangentFrameSet frames = build_frames(adv, cfg.knn_k);
      double norm2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        step[i] = rotate_gradient(frames[i], mg.grad[i]);
        step[i].z() = 0.0;
        norm2 += step[i].squaredNorm();
      }
      if (!(norm2 > 0.0)) {
        out.stuck = true;
        break;
      }
      const double scale = cfg.step_size / std::sqrt(norm2);
      for (std::size_t i = 0; i < n; ++i) {
        const Vec3 p = to_tangent(frames[i], adv[i]) - scale * step[i];
        adv[i] = from_tangent(frames[i], p);
      }
    } else {
      double norm2 = 0.0;
      for (const Vec3& g : mg.grad) norm2 += g.squaredNorm();
      if (!(norm2 > 0.0)) {
        out.stuck = true;
        break;
      }
      const double scale = cfg.step_size / std::sqrt(norm2);
      for (std::size_t i = 0; i < n; ++i) adv[i] -= scale * mg.grad[i];
    }
    clip_to(adv, cloud, cfg.linf_radius);
  }

  out.final_prediction = static_cast<int>(predict(model, adv));
  out.success = out.final_prediction != out.label;
  finish_metrics(out, cloud, t0);
  return out;
}

/// Basis order and per-basis first sign for the black-box loop.
struct BasisPlan {
  std::vector<std::size_t> order;
  std::vector<double> first_sign;  // +1 or -1, indexed by basis
};

BasisPlan tangent_plan(const SensitivityMap& map, const BlackBoxConfig& cfg) {
  BasisPlan plan;
  switch (cfg.ordering) {
    case Ordering::Sensitivity:
      plan.order = sweep_order(map, SweepOrdering::Descending, 0);
      break;
    case Ordering::Ascending:
      plan.order = sweep_order(map, SweepOrdering::Ascending, 0);
      break;
    default:
      plan.order = sweep_order(map, SweepOrdering::Random, cfg.seed);
      break;
  }
  // theta points up the surrogate margin, so -eps is the descent guess.
  plan.first_sign.assign(map.size(),
                         cfg.first_sign == FirstSign::Descent ? -1.0 : 1.0);
  return plan;
}

BasisPlan axis_plan(const std::vector<Vec3>& grad, const BlackBoxConfig& cfg) {
  const std::size_t m = 3 * grad.size();
  auto g = [&](std::size_t a) { return grad[a / 3][static_cast<int>(a % 3)]; };
  BasisPlan plan;
  plan.order.resize(m);
  std::iota(plan.order.begin(), plan.order.end(), 0);
  plan.first_sign.assign(m, 1.0);
  if (cfg.ordering == Ordering::SimbaRandomAxes) {
    Rng rng(cfg.seed);
    std::shuffle(plan.order.begin(), plan.order.end(), rng);
    return plan;
  }
  std::stable_sort(plan.order.begin(), plan.order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return std::abs(g(a)) > std::abs(g(b));
                   });
  if (cfg.first_sign == FirstSign::Descent) {
    for (std::size_t a = 0; a < m; ++a) {
      if (g(a) > 0.0) plan.first_sign[a] = -1.0;
    }
  }
  return plan;
}

}  // namespace

void WhiteBoxConfig::validate() const {
  if (!(step_size > 0.0) || iterations == 0 || !(linf_radius > 0.0) ||
      knn_k < 3) {
    throw ParameterError(
        "white-box config: step_size, iterations and linf_radius must be "
        "positive and knn_k >= 3");
  }
}

void BlackBoxConfig::validate() const {
  if (!(step_size > 0.0) || max_queries < 1 || knn_k < 3) {
    throw ParameterError(
        "black-box config: step_size must be positive, max_queries >= 1, "
        "knn_k >= 3");
  }
}

std::string_view ordering_name(Ordering o) {
  switch (o) {
    case Ordering::Sensitivity:
      return "sensitivity";
    case Ordering::Random:
      return "random";
    case Ordering::Ascending:
      return "ascending";
    case Ordering::SimbaRandomAxes:
      return "simba_random_axes";
    case Ordering::SimbaPlus:
      return "simba_plus";
  }
  return "sensitivity";
}

Ordering parse_ordering(std::string_view name) {
  for (Ordering o : {Ordering::Sensitivity, Ordering::Random,
                     Ordering::Ascending, Ordering::SimbaRandomAxes,
                     Ordering::SimbaPlus}) {
    if (name == ordering_name(o)) return o;
  }
  throw ParameterError("unknown ordering '" + std::string(name) + "'");
}

bool uses_tangent_bases(Ordering o) {
  return o == Ordering::Sensitivity || o == Ordering::Random ||
         o == Ordering::Ascending;
}

std::string_view first_sign_name(FirstSign s) {
  return s == FirstSign::Descent ? "descent" : "plus";
}

FirstSign parse_first_sign(std::string_view name) {
  if (name == "descent") return FirstSign::Descent;
  if (name == "plus") return FirstSign::Plus;
  throw ParameterError("unknown first_sign '" + std::string(name) + "'");
}

Logits ScoreOracle::query(const PointCloud& cloud) {
  ++queries_;
  return evaluate(cloud);
}

ModelOracle::ModelOracle(const ClassifierParams& params, Defense defense,
                         std::uint64_t seed)
    : net_(params), defense_(defense), seed_(seed) {}

Logits ModelOracle::evaluate(const PointCloud& cloud) {
  const std::uint64_t call = calls_++;
  if (defense_ == Defense::None) return net_.evaluate(cloud);
  const auto keep = defense_keep(cloud, defense_, derive_seed(seed_, call));
  return net_.evaluate_subset(cloud, keep);
}

AttackOutcome whitebox_attack(const ClassifierParams& model,
                              const PointCloud& cloud, std::size_t label,
                              const WhiteBoxConfig& cfg) {
  return gradient_attack(model, cloud, label, cfg, StepSpace::Tangent);
}

AttackOutcome ifgm_baseline(const ClassifierParams& model,
                            const PointCloud& cloud, std::size_t label,
                            const WhiteBoxConfig& cfg) {
  return gradient_attack(model, cloud, label, cfg, StepSpace::Ambient);
}

AttackOutcome blackbox_attack(ScoreOracle& target,
                              const ClassifierParams& surrogate,
                              const PointCloud& cloud, std::size_t label,
                              const BlackBoxConfig& cfg) {
  cfg.validate();
  check_label(surrogate, label);
  const auto t0 = Clock::now();
  AttackOutcome out;
  out.attack = "blackbox/" + std::string(ordering_name(cfg.ordering));
  out.label = static_cast<int>(label);
  out.adversarial = cloud;
  PointCloud& adv = out.adversarial;
  const std::size_t q0 = target.queries();
  auto used = [&] { return target.queries() - q0; };

  Logits pool = target.query(adv);
  double prob = pool.probs.at(label);
  std::size_t pred = pool.argmax();

  if (pred == label) {
    const bool tangent = uses_tangent_bases(cfg.ordering);
    std::optional<TangentFrameSet> frames;
    std::vector<Vec3> transformed;
    SensitivityMap map;
    BasisPlan plan;
    if (tangent) {
      frames = build_frames(cloud, cfg.knn_k);
      transformed = to_tangent(*frames, cloud);
      map = sensitivity_scores(gradient_map(surrogate, *frames, cloud, label));
      out.zero_sensitivity = std::all_of(
          map.scores.begin(), map.scores.end(), [](double s) { return s == 0; });
      plan = tangent_plan(map, cfg);
    } else {
      const std::vector<Vec3> g = input_gradient(surrogate, cloud, label);
      out.zero_sensitivity = std::all_of(g.begin(), g.end(), [](const Vec3& v) {
        return v.isZero(0.0);
      });
      plan = axis_plan(g, cfg);
    }

    for (std::size_t basis : plan.order) {
      if (pred != label) break;
      if (used() >= cfg.max_queries) {
        out.budget_exhausted = true;
        break;
      }
      const std::size_t point = tangent ? basis : basis / 3;
      ++out.trialed_bases;
      const double first = plan.first_sign[basis] * cfg.step_size;
      for (double alpha : {first, -first}) {
        if (used() >= cfg.max_queries) {
          out.budget_exhausted = true;
          break;
        }
        Vec3 candidate;
        if (tangent) {
          const double th = map.directions[point];
          const Vec3 q(std::cos(th), std::sin(th), 0.0);
          candidate = from_tangent((*frames)[point],
                                   transformed[point] + alpha * q);
        } else {
          candidate = adv[point];
          candidate[static_cast<int>(basis % 3)] += alpha;
        }
        const Vec3 saved = adv[point];
        adv[point] = candidate;
        const Logits trial = target.query(adv);
        Trial log{point, basis, alpha, false, prob, trial.probs.at(label)};
        if (trial.probs[label] < prob) {
          log.accepted = true;
          out.trial_log.push_back(log);
          prob = trial.probs[label];
          pred = trial.argmax();
          ++out.accepted_steps;
          break;
        }
        adv[point] = saved;
        out.trial_log.push_back(log);
      }
      if (out.budget_exhausted) break;
    }
  }

  out.queries = used();
  out.final_prediction = static_cast<int>(pred);
  out.success = pred != label;
  finish_metrics(out, cloud, t0);
  return out;
}

std::string_view attack_mode_name(AttackMode m) {
  switch (m) {
    case AttackMode::WhiteBox:
      return "whitebox";
    case AttackMode::Ifgm:
      return "ifgm";
    case AttackMode::BlackBox:
      return "blackbox";
  }
  return "whitebox";
}

BatchResult batch_attack(const BatchSpec& spec,
                         std::span<const PointCloud> samples) {
  if (!spec.target) throw ParameterError("batch_attack: no target model");
  if (spec.mode == AttackMode::BlackBox && !spec.surrogate) {
    throw ParameterError("batch_attack: black-box mode needs a surrogate");
  }
  BatchResult result;
  result.outcomes.resize(samples.size());
  parallel_for(samples.size(), spec.jobs, [&](std::size_t i) {
    const PointCloud& cloud = samples[i];
    if (!cloud.label) throw ParameterError("batch_attack: unlabelled sample");
    const auto label = static_cast<std::size_t>(*cloud.label);
    const std::uint64_t seed = derive_seed(spec.seed, i);
    AttackOutcome o;
    if (spec.mode == AttackMode::BlackBox) {
      BlackBoxConfig cfg = spec.black;
      cfg.seed = derive_seed(spec.black.seed, i);
      ModelOracle oracle(*spec.target, spec.defense, derive_seed(seed, 1));
      o = blackbox_attack(oracle, *spec.surrogate, cloud, label, cfg);
    } else {
      o = spec.mode == AttackMode::WhiteBox
              ? whitebox_attack(*spec.target, cloud, label, spec.white)
              : ifgm_baseline(*spec.target, cloud, label, spec.white);
      if (spec.defense != Defense::None) {
        const PointCloud defended = subset(
            o.adversarial,
            defense_keep(o.adversarial, spec.defense, derive_seed(seed, 2)));
        o.undefended_success = o.success;
        o.final_prediction = static_cast<int>(predict(*spec.target, defended));
        o.success = o.final_prediction != o.label;
      }
    }
    o.sample_id = i;
    result.outcomes[i] = std::move(o);
  });
  if (!result.outcomes.empty()) result.report = aggregate(result.outcomes);
  return result;
}

nlohmann::json to_json(const WhiteBoxConfig& cfg) {
  return {{"step_size", cfg.step_size},
          {"iterations", cfg.iterations},
          {"linf_radius", cfg.linf_radius},
          {"knn_k", cfg.knn_k}};
}

nlohmann::json to_json(const BlackBoxConfig& cfg) {
  return {{"step_size", cfg.step_size},
          {"max_queries", cfg.max_queries},
          {"ordering", ordering_name(cfg.ordering)},
          {"seed", cfg.seed},
          {"knn_k", cfg.knn_k},
          {"first_sign", first_sign_name(cfg.first_sign)}};
}

nlohmann::json to_json(const MetricReport& r) {
  return {{"asr", r.asr},
          {"avg_queries", r.avg_queries},
          {"median_queries", r.median_queries},
          {"mean_l2", r.mean_l2},
          {"mean_chamfer_x1e4", r.mean_chamfer},
          {"mean_hausdorff_x1e2", r.mean_hausdorff},
          {"mean_time_s", r.mean_time_s},
          {"n_samples", r.n_samples},
          {"n_success", r.n_success},
          {"successes_only", r.successes_only}};
}

nlohmann::json outcome_json(const AttackOutcome& o,
                            const nlohmann::json& config) {
  nlohmann::json j = {{"sample_id", o.sample_id},
                      {"attack", o.attack},
                      {"config", config},
                      {"label", o.label},
                      {"final_prediction", o.final_prediction},
                      {"success", o.success},
                      {"queries", o.queries},
                      {"iterations", o.iterations},
                      {"accepted_steps", o.accepted_steps},
                      {"trialed_bases", o.trialed_bases},
                      {"l2", o.l2},
                      {"chamfer_x1e4", kChamferScale * o.chamfer},
                      {"hausdorff_x1e2", kHausdorffScale * o.hausdorff},
                      {"wall_time_s", o.wall_time_seconds},
                      {"stuck", o.stuck},
                      {"zero_sensitivity", o.zero_sensitivity},
                      {"budget_exhausted", o.budget_exhausted}};
  if (o.undefended_success) j["undefended_success"] = *o.undefended_success;
  nlohmann::json log = nlohmann::json::array();
  for (const Trial& t : o.trial_log) {
    log.push_back({{"point_index", t.point_index},
                   {"basis_index", t.basis_index},
                   {"alpha", t.alpha},
                   {"accepted", t.accepted},
                   {"prob_before", t.prob_before},
                   {"prob_after", t.prob_after}});
  }
  j["trial_log"] = std::move(log);
  return j;
}

}  // namespace siadv
