#include "run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <string_view>
#include <vector>

#include "siadv/data.hpp"
#include "siadv/error.hpp"

namespace siadv::cli {

ConfigReader::ConfigReader(const nlohmann::json& object, std::string where)
    : object_(object), where_(std::move(where)) {
  if (!object_.is_object()) {
    throw ConfigError(where_ + ": expected a JSON object");
  }
}

bool ConfigReader::has(const std::string& key) const {
  return object_.contains(key);
}

const nlohmann::json& ConfigReader::at(const std::string& key) {
  used_.insert(key);
  return object_.at(key);
}

template <typename T>
T ConfigReader::get(const std::string& key, T fallback) {
  if (!has(key)) {
    used_.insert(key);
    return fallback;
  }
  return require<T>(key);
}

template <typename T>
T ConfigReader::require(const std::string& key) {
  if (!has(key)) {
    throw ConfigError(where_ + ": missing required key '" + key + "'");
  }
  const nlohmann::json& v = at(key);
  try {
    if constexpr (std::is_same_v<T, std::size_t> ||
                  std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError(where_ + ": key '" + key + "' has the wrong type");
  }
}

ConfigReader ConfigReader::child(const std::string& key) {
  if (!has(key)) {
    throw ConfigError(where_ + ": missing required key '" + key + "'");
  }
  return ConfigReader(at(key), where_ + "." + key);
}

void ConfigReader::finish() const {
  std::string unknown;
  for (const auto& [key, value] : object_.items()) {
    if (used_.count(key)) continue;
    unknown += unknown.empty() ? "'" : ", '";
    unknown += key + "'";
  }
  if (!unknown.empty()) {
    throw ConfigError(where_ + ": unknown key(s) " + unknown);
  }
}

template bool ConfigReader::get<bool>(const std::string&, bool);
template double ConfigReader::get<double>(const std::string&, double);
template std::size_t ConfigReader::get<std::size_t>(const std::string&,
                                                    std::size_t);
template std::string ConfigReader::get<std::string>(const std::string&,
                                                    std::string);

namespace {

WhiteBoxConfig read_white(ConfigReader r, WhiteMethod& method) {
  WhiteBoxConfig c;
  const std::string m = r.get<std::string>("method", "tangent");
  if (m == "tangent") {
    method = WhiteMethod::Tangent;
  } else if (m == "ifgm") {
    method = WhiteMethod::Ifgm;
  } else {
    throw ConfigError("config.whitebox: method must be 'tangent' or 'ifgm'");
  }
  c.step_size = r.get("step_size", c.step_size);
  c.iterations = r.get("iterations", c.iterations);
  c.linf_radius = r.get("linf_radius", c.linf_radius);
  c.knn_k = r.get("knn_k", c.knn_k);
  r.finish();
  c.validate();
  return c;
}

BlackBoxConfig read_black(ConfigReader r) {
  BlackBoxConfig c;
  c.step_size = r.get("step_size", c.step_size);
  c.max_queries = r.get("max_queries", c.max_queries);
  c.ordering = parse_ordering(
      r.get<std::string>("ordering", std::string(ordering_name(c.ordering))));
  c.seed = r.get<std::size_t>("seed", c.seed);
  c.knn_k = r.get("knn_k", c.knn_k);
  c.first_sign = parse_first_sign(r.get<std::string>(
      "first_sign", std::string(first_sign_name(c.first_sign))));
  r.finish();
  c.validate();
  return c;
}

}  // namespace

AttackRunConfig parse_attack_config(const nlohmann::json& j, AttackMode mode) {
  ConfigReader r(j, "config");
  AttackRunConfig c;
  if (r.has("seed")) c.seed = r.require<std::size_t>("seed");
  if (r.has("samples")) c.samples = r.require<std::size_t>("samples");
  if (mode == AttackMode::BlackBox) {
    c.black = read_black(r.child("blackbox"));
    if (r.has("whitebox")) {
      throw ConfigError("config: 'whitebox' block given for black mode");
    }
  } else {
    c.white = read_white(r.child("whitebox"), c.method);
    if (r.has("blackbox")) {
      throw ConfigError("config: 'blackbox' block given for white mode");
    }
  }
  r.finish();
  return c;
}

TrainRunConfig parse_train_config(const nlohmann::json& j) {
  ConfigReader r(j, "config");
  TrainRunConfig c;
  if (r.has("seed")) c.seed = r.require<std::size_t>("seed");
  TrainConfig& t = c.train;
  t.epochs = r.get("epochs", t.epochs);
  t.lr = r.get("lr", t.lr);
  t.momentum = r.get("momentum", t.momentum);
  t.lr_halving_epochs = r.get("lr_halving_epochs", t.lr_halving_epochs);
  t.batch_size = r.get("batch_size", t.batch_size);
  t.augment = r.get("augment", t.augment);
  r.finish();
  if (t.batch_size == 0 || !(t.lr > 0.0)) {
    throw ConfigError("config: batch_size and lr must be positive");
  }
  return c;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag,
                           std::optional<std::uint64_t> config) {
  if (flag) return *flag;
  if (config) return *config;
  if (const char* env = std::getenv("SIADV_SEED"); env && *env) {
    std::uint64_t v = 0;
    const std::string_view s(env);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
      throw ConfigError("SIADV_SEED is not an unsigned integer: " +
                        std::string(s));
    }
    return v;
  }
  return 0;
}

}  // namespace siadv::cli
