#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

namespace siadv::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kExitOk = 0,
  kExitGateUnmet = 1,
  kExitUsage = 2,
  kExitInternal = 3,
};

struct GenDataOptions {
  fs::path out;
  std::optional<std::uint64_t> seed;
  std::size_t n_train = 480;
  std::size_t n_test = 200;
  std::size_t n_points = 1024;
  bool force = false;
};

struct TrainOptions {
  std::string arch = "A";
  fs::path data;
  fs::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<fs::path> config;
  double gate = 0.90;
};

struct AttackOptions {
  std::string mode;
  fs::path model;
  std::optional<fs::path> surrogate;
  fs::path data;
  fs::path config;
  fs::path report;
  std::string defense = "none";
  std::optional<std::uint64_t> seed;
  std::optional<double> gate;  // minimum ASR
  std::size_t jobs = 1;
};

struct SensitivityOptions {
  fs::path model;
  fs::path input;
  fs::path out;
  fs::path report;
  std::optional<std::string> label;  // index or class name
  std::size_t knn_k = 20;
};

struct SweepOptions {
  fs::path model;
  fs::path data;
  std::string ordering = "descending";
  double step = 0.03;
  fs::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::size_t jobs = 1;
};

int cmd_gen_data(const GenDataOptions& o, std::ostream& out);
int cmd_train(const TrainOptions& o, std::ostream& out);
int cmd_attack(const AttackOptions& o, std::ostream& out);
int cmd_sensitivity(const SensitivityOptions& o, std::ostream& out,
                    std::ostream& err);
int cmd_sweep(const SweepOptions& o, std::ostream& out);

/// Runs `body`, mapping library exceptions to exit codes with a message on
/// `err`: bad input, configs and files give 2, anything else 3.
int guarded(const std::function<int()>& body, std::ostream& err);

/// Parses argv and dispatches; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace siadv::cli
