#pragma once

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include "siadv/attacks.hpp"
#include "siadv/classifier.hpp"

namespace siadv::cli {

/// Reads keys from one JSON object and remembers which were used, so that
/// leftovers can be reported as unknown. `where` prefixes error messages.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& object, std::string where);

  bool has(const std::string& key) const;
  template <typename T>
  T get(const std::string& key, T fallback);
  template <typename T>
  T require(const std::string& key);
  ConfigReader child(const std::string& key);

  /// Throws ConfigError naming every key that was never read.
  void finish() const;

 private:
  const nlohmann::json& at(const std::string& key);

  const nlohmann::json& object_;
  std::string where_;
  std::set<std::string> used_;
};

enum class WhiteMethod { Tangent, Ifgm };

struct AttackRunConfig {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;  // first n test samples
  WhiteMethod method = WhiteMethod::Tangent;
  WhiteBoxConfig white;
  BlackBoxConfig black;
};

/// Top-level keys: seed, samples, whitebox, blackbox. The block for `mode`
/// is required (it may be empty); the other block is rejected.
AttackRunConfig parse_attack_config(const nlohmann::json& j, AttackMode mode);

struct TrainRunConfig {
  std::optional<std::uint64_t> seed;
  TrainConfig train;
};

/// Optional keys: seed, epochs, lr, momentum, lr_halving_epochs,
/// batch_size, augment.
TrainRunConfig parse_train_config(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);

/// Flag value, then config value, then SIADV_SEED, then 0.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag,
                           std::optional<std::uint64_t> config);

}  // namespace siadv::cli
