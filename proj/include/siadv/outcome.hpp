#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "siadv/geometry.hpp"

namespace siadv {

/// One target query made by the black-box attack.
struct Trial {
  std::size_t point_index = 0;
  std::size_t basis_index = 0;  // point index, or 3 * point + axis for axes
  double alpha = 0.0;
  bool accepted = false;
  double prob_before = 0.0;
  double prob_after = 0.0;
};

struct AttackOutcome {
  std::string attack;
  std::size_t sample_id = 0;
  int label = -1;
  PointCloud adversarial;
  bool success = false;
  int final_prediction = -1;
  std::optional<bool> undefended_success;  // set when a defense judged

  std::size_t queries = 0;
  std::size_t iterations = 0;  // white-box steps taken
  std::size_t accepted_steps = 0;
  std::size_t trialed_bases = 0;
  bool stuck = false;            // zero gradient with positive loss
  bool zero_sensitivity = false;  // surrogate map was all zero
  bool budget_exhausted = false;

  double l2 = 0.0;
  double chamfer = 0.0;
  double hausdorff = 0.0;
  double wall_time_seconds = 0.0;

  std::vector<Trial> trial_log;
};

}  // namespace siadv
