#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "commands.hpp"
#include "run_config.hpp"
#include "schema_check.hpp"
#include "siadv/data.hpp"
#include "siadv/error.hpp"
#include "support.hpp"

namespace siadv {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::initializer_list<std::string> args) {
  std::vector<std::string> owned = {"siadv"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const std::string& a : owned) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(),
                                out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("siadv_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    model_ = (dir_ / "model_a.json").string();
    save_params(test::fixtures().model_a, model_);
    surrogate_ = (dir_ / "model_b.json").string();
    save_params(test::fixtures().model_b, surrogate_);
    unsetenv("SIADV_SEED");
  }
  void TearDown() override {
    unsetenv("SIADV_SEED");
    fs::remove_all(dir_);
  }

  std::string path(const std::string& name) const {
    return (dir_ / name).string();
  }
  std::string dataset(const std::string& name = "data") {
    const std::string d = path(name);
    const CliRun r = cli({"gen-data", "--out", d, "--seed", "3", "--n-train", "8",
                       "--n-test", "8", "--n-points", "256"});
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }
  std::string config(const json& j, const std::string& name = "cfg.json") {
    write_file_atomic(path(name), j.dump());
    return path(name);
  }

  fs::path dir_;
  std::string model_;
  std::string surrogate_;
};

std::string slurp(const std::string& p) { return read_file(p); }

test::SchemaCheck schema(const char* name) {
  return test::SchemaCheck(
      json::parse(read_file(fs::path(SIADV_DOCS_DIR) / name)));
}

std::string joined(const std::vector<std::string>& errors) {
  std::string s;
  for (const std::string& e : errors) s += e + "\n";
  return s;
}

TEST_F(CliTest, HelpAndUsageErrors) {
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"train", "--data", "x"}).code, 2);
}

TEST_F(CliTest, GenDataWritesCountsAndRefusesToOverwrite) {
  const std::string d = dataset();
  const json m = json::parse(slurp(d + "/manifest.json"));
  EXPECT_EQ(m["n_train"], 8);
  EXPECT_EQ(m["n_test"], 8);
  EXPECT_EQ(m["seed"], 3);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(d)) {
    files += e.path().extension() == ".xyz";
  }
  EXPECT_EQ(files, 16u);
  const std::string first = slurp(d + "/" + m["samples"][0]["path"].get<std::string>());

  const CliRun again = cli({"gen-data", "--out", d, "--seed", "3"});
  EXPECT_EQ(again.code, 2);
  EXPECT_NE(again.err.find("--force"), std::string::npos);

  const std::string other = dataset("data2");
  const json m2 = json::parse(slurp(other + "/manifest.json"));
  EXPECT_EQ(slurp(other + "/" + m2["samples"][0]["path"].get<std::string>()),
            first);
  EXPECT_EQ(cli({"gen-data", "--out", d, "--seed", "4", "--n-train", "8",
                 "--n-test", "8", "--n-points", "256", "--force"})
                .code,
            0);
  EXPECT_NE(slurp(d + "/" + m["samples"][0]["path"].get<std::string>()), first);
}

TEST_F(CliTest, SeedFromEnvironment) {
  setenv("SIADV_SEED", "42", 1);
  ASSERT_EQ(cli({"gen-data", "--out", path("env"), "--n-train", "8",
                 "--n-test", "8", "--n-points", "64"})
                .code,
            0);
  EXPECT_EQ(json::parse(slurp(path("env") + "/manifest.json"))["seed"], 42);
  EXPECT_EQ(cli::resolve_seed(7, std::nullopt), 7u);
  EXPECT_EQ(cli::resolve_seed(std::nullopt, 9), 9u);
  EXPECT_EQ(cli::resolve_seed(std::nullopt, std::nullopt), 42u);
  unsetenv("SIADV_SEED");
  EXPECT_EQ(cli::resolve_seed(std::nullopt, std::nullopt), 0u);
}

TEST_F(CliTest, TrainExitCodes) {
  const std::string d = dataset();
  EXPECT_EQ(cli({"train", "--data", path("missing"), "--out", path("m.json")})
                .code,
            2);
  EXPECT_EQ(cli({"train", "--data", d, "--out", path("m.json"), "--epochs",
                 "0"})
                .code,
            3);
  // One epoch on a tiny split stays below the training-failure floor.
  const CliRun failed = cli({"train", "--data", d, "--out", path("m.json"),
                             "--epochs", "1", "--gate", "0"});
  EXPECT_EQ(failed.code, 3);
  EXPECT_NE(failed.out.find("training failed"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("m.json")));
  EXPECT_EQ(cli({"train", "--data", d, "--out", path("m.json"), "--arch",
                 "C"})
                .code,
            2);
  EXPECT_EQ(cli({"train", "--data", d, "--out", path("m.json"), "--config",
                 config({{"epochz", 3}})})
                .code,
            2);
}

TEST_F(CliTest, WhiteAttackReportEchoesDefaults) {
  const std::string d = dataset();
  const std::string report = path("white.json");
  const CliRun r = cli({"attack", "--mode", "white", "--model", model_, "--data",
                     d, "--config", config({{"whitebox", json::object()}}),
                     "--report", report, "--seed", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(slurp(report));
  const auto errors = schema("attack_report.schema.json").validate(j);
  EXPECT_TRUE(errors.empty()) << joined(errors);
  for (const char* key :
       {"command", "mode", "attack", "defense", "seed", "model", "surrogate",
        "config", "query_convention", "metrics", "metrics_successes_only",
        "samples"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  const json& w = j["config"]["whitebox"];
  EXPECT_EQ(w["step_size"], 0.007);
  EXPECT_EQ(w["iterations"], 50);
  EXPECT_EQ(w["linf_radius"], 0.16);
  EXPECT_EQ(w["knn_k"], 20);
  EXPECT_EQ(w["method"], "tangent");
  EXPECT_EQ(j["seed"], 5);
  EXPECT_EQ(j["samples"].size(), 8u);
  EXPECT_EQ(j["metrics"]["n_samples"], 8);
  double successes = 0;
  for (const json& s : j["samples"]) successes += s["success"].get<bool>();
  EXPECT_DOUBLE_EQ(j["metrics"]["asr"].get<double>(), successes / 8.0);
}

TEST_F(CliTest, AttackConfigErrors) {
  const std::string d = dataset();
  auto attack = [&](const std::string& mode, const json& cfg) {
    return cli({"attack", "--mode", mode, "--model", model_, "--surrogate",
                surrogate_, "--data", d, "--config", config(cfg), "--report",
                path("r.json")})
        .code;
  };
  EXPECT_EQ(attack("white", {{"whitebox", {{"step", 0.1}}}}), 2);
  EXPECT_EQ(attack("white", json::object()), 2);
  EXPECT_EQ(attack("white", {{"whitebox", {{"iterations", -1}}}}), 2);
  EXPECT_EQ(attack("white", {{"whitebox", {{"method", "pgd"}}}}), 2);
  EXPECT_EQ(attack("white", {{"whitebox", json::object()},
                             {"blackbox", json::object()}}),
            2);
  EXPECT_EQ(attack("black", {{"blackbox", {{"ordering", "best"}}}}), 2);
  EXPECT_EQ(attack("grey", {{"whitebox", json::object()}}), 2);
  EXPECT_EQ(cli({"attack", "--mode", "black", "--model", model_, "--data", d,
                 "--config", config({{"blackbox", json::object()}}),
                 "--report", path("r.json")})
                .code,
            2);
  EXPECT_FALSE(fs::exists(path("r.json")));
}

TEST_F(CliTest, BlackAttackAndGate) {
  const std::string d = dataset();
  const std::string cfg = config(
      {{"samples", 3}, {"blackbox", {{"max_queries", 60}, {"seed", 2}}}});
  const CliRun r = cli({"attack", "--mode", "black", "--model", model_,
                     "--surrogate", surrogate_, "--data", d, "--config", cfg,
                     "--report", path("b.json"), "--defense", "drop30",
                     "--gate", "1.01", "--jobs", "2"});
  EXPECT_EQ(r.code, 1) << r.err;
  const json j = json::parse(slurp(path("b.json")));
  const auto errors = schema("attack_report.schema.json").validate(j);
  EXPECT_TRUE(errors.empty()) << joined(errors);
  EXPECT_EQ(j["defense"], "drop30");
  EXPECT_EQ(j["config"]["blackbox"]["max_queries"], 60);
  EXPECT_EQ(j["config"]["blackbox"]["ordering"], "sensitivity");
  EXPECT_EQ(j["samples"].size(), 3u);
  for (const json& s : j["samples"]) {
    EXPECT_LE(s["queries"].get<int>(), 60);
    EXPECT_EQ(s["trial_log"].size() + 1, s["queries"].get<std::size_t>());
  }
}

TEST_F(CliTest, SensitivityWritesPlyAndScores) {
  const std::string d = dataset();
  const json m = json::parse(slurp(d + "/manifest.json"));
  std::string input;
  for (const json& s : m["samples"]) {
    const std::string p = d + "/" + s["path"].get<std::string>();
    if (predict(test::fixtures().model_a, read_xyz(p)) == s["label"].get<std::size_t>()) {
      input = p;
      break;
    }
  }
  ASSERT_FALSE(input.empty());
  const CliRun r = cli({"sensitivity", "--model", model_, "--input", input,
                     "--out", path("s.ply"), "--report", path("s.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.err.empty()) << r.err;
  EXPECT_NE(slurp(path("s.ply")).find("element vertex 256\n"),
            std::string::npos);
  const json j = json::parse(slurp(path("s.json")));
  ASSERT_EQ(j["scores"].size(), 256u);
  double max_score = 0.0;
  for (const json& s : j["scores"]) {
    EXPECT_GE(s.get<double>(), 0.0);
    max_score = std::max(max_score, s.get<double>());
  }
  EXPECT_GT(max_score, 0.0);
  EXPECT_EQ(j["ranking"].size(), 256u);
}

TEST_F(CliTest, SensitivityWarnsOnMisclassifiedOrUnlabelled) {
  const std::string d = dataset();
  const json m = json::parse(slurp(d + "/manifest.json"));
  const std::string input = d + "/" + m["samples"][0]["path"].get<std::string>();
  const std::size_t predicted = predict(test::fixtures().model_a, read_xyz(input));
  const std::string wrong = std::to_string((predicted + 1) % 8);
  const CliRun r = cli({"sensitivity", "--model", model_, "--input", input,
                     "--out", path("s.ply"), "--report", path("s.json"),
                     "--label", wrong});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("misclassified"), std::string::npos);
  const json j = json::parse(slurp(path("s.json")));
  EXPECT_TRUE(j.contains("warning"));
  for (const json& s : j["scores"]) EXPECT_EQ(s.get<double>(), 0.0);

  write_xyz(read_xyz(input), path("plain.xyz"));
  const CliRun u = cli({"sensitivity", "--model", model_, "--input",
                     path("plain.xyz"), "--out", path("u.ply"), "--report",
                     path("u.json")});
  EXPECT_EQ(u.code, 0);
  EXPECT_NE(u.err.find("predicted class"), std::string::npos);
  EXPECT_EQ(cli({"sensitivity", "--model", model_, "--input", input, "--out",
                 path("s.ply"), "--report", path("s.json"), "--label",
                 "blob"})
                .code,
            2);
}

TEST_F(CliTest, SweepCsvStartsAtCleanAccuracy) {
  const std::string d = dataset();
  const CliRun r = cli({"sweep", "--model", model_, "--data", d, "--out",
                     path("sweep.csv"), "--step", "0.05"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream csv(slurp(path("sweep.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "fraction,accuracy");
  std::getline(csv, line);
  const auto comma = line.find(',');
  EXPECT_EQ(std::stod(line.substr(0, comma)), 0.0);
  const DatasetOnDisk data = load_dataset(d);
  double clean = 0.0;
  for (const PointCloud& c : data.test) {
    clean += static_cast<int>(predict(test::fixtures().model_a, c)) == *c.label;
  }
  EXPECT_NEAR(std::stod(line.substr(comma + 1)), clean / data.test.size(),
              1e-6);
  std::size_t rows = 1;
  while (std::getline(csv, line)) ++rows;
  EXPECT_GT(rows, 2u);
  EXPECT_EQ(cli({"sweep", "--model", model_, "--data", d, "--out",
                 path("sweep.csv"), "--ordering", "sideways"})
                .code,
            2);
}

TEST(Schemas, ValidatorRejectsBrokenDocuments) {
  const test::SchemaCheck report = schema("attack_report.schema.json");
  EXPECT_FALSE(report.validate(json::object()).empty());
  json bad = {{"command", "attack"}, {"mode", "grey"}};
  EXPECT_FALSE(report.validate(bad).empty());
  const test::SchemaCheck config = schema("attack_config.schema.json");
  EXPECT_TRUE(config.validate({{"whitebox", {{"step_size", 0.01}}}}).empty());
  EXPECT_TRUE(config.validate({{"seed", 2},
                               {"samples", 3},
                               {"blackbox", {{"max_queries", 60}, {"seed", 2}}}})
                  .empty());
  EXPECT_FALSE(config.validate({{"whitebox", {{"step", 0.1}}}}).empty());
  EXPECT_FALSE(config.validate({{"whitebox", {{"step_size", -1.0}}}}).empty());
  const test::SchemaCheck train = schema("train_config.schema.json");
  EXPECT_TRUE(train.validate({{"epochs", 5}, {"augment", false}}).empty());
  EXPECT_FALSE(train.validate({{"epochz", 3}}).empty());
}

TEST(Guarded, MapsExceptionsToExitCodes) {
  std::ostringstream err;
  EXPECT_EQ(cli::guarded([]() -> int { throw ConfigError("x"); }, err), 2);
  EXPECT_EQ(cli::guarded([]() -> int { throw IoError("x"); }, err), 2);
  EXPECT_EQ(cli::guarded([]() -> int { throw IntegrityError("x"); }, err), 2);
  EXPECT_EQ(cli::guarded([]() -> int { throw std::runtime_error("x"); }, err),
            3);
  EXPECT_EQ(cli::guarded([] { return 0; }, err), 0);
}

}  // namespace
}  // namespace siadv
