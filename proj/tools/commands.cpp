#include "commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cctype>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <vector>

#include "run_config.hpp"
#include "siadv/attacks.hpp"
#include "siadv/classifier.hpp"
#include "siadv/data.hpp"
#include "siadv/error.hpp"
#include "siadv/evaluation.hpp"
#include "siadv/sensitivity.hpp"

namespace siadv::cli {

namespace {

bool nonempty_dir(const fs::path& p) {
  return fs::is_directory(p) && !fs::is_empty(p);
}

std::vector<PointCloud> test_split(const fs::path& dir,
                                   std::optional<std::size_t> limit) {
  DatasetOnDisk data = load_dataset(dir);
  if (limit && *limit < data.test.size()) data.test.resize(*limit);
  return std::move(data.test);
}

std::size_t parse_label(const std::string& s) {
  if (!s.empty() &&
      std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isdigit(c);
      })) {
    const std::size_t v = std::stoul(s);
    if (v >= kClassCount) throw ConfigError("label out of range: " + s);
    return v;
  }
  const auto& names = class_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == s) return i;
  }
  throw ConfigError("unknown class label '" + s + "'");
}

/// Labels encoded as NNNNNN_<class>.xyz by save_dataset.
std::optional<std::size_t> label_from_filename(const fs::path& path) {
  const std::string stem = path.stem().string();
  const std::size_t us = stem.rfind('_');
  if (us == std::string::npos) return std::nullopt;
  const std::string name = stem.substr(us + 1);
  const auto& names = class_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  return std::nullopt;
}

}  // namespace

int cmd_gen_data(const GenDataOptions& o, std::ostream& out) {
  if (nonempty_dir(o.out) && !o.force) {
    throw IoError("output directory " + o.out.string() +
                  " is not empty; pass --force to overwrite");
  }
  if (o.n_points < kDefaultNeighbors + 1) {
    throw ParameterError("--n-points must exceed the neighbourhood size");
  }
  if (o.force) {
    fs::remove_all(o.out / "train");
    fs::remove_all(o.out / "test");
    fs::remove(o.out / "manifest.json");
  }
  const std::uint64_t seed = resolve_seed(o.seed, std::nullopt);
  DatasetOnDisk data;
  data.seed = seed;
  data.n_points = o.n_points;
  data.train = make_dataset(Split::Train, o.n_train, o.n_points, seed).samples;
  data.test = make_dataset(Split::Test, o.n_test, o.n_points, seed).samples;
  save_dataset(o.out, data);
  out << "wrote " << data.train.size() << " train and " << data.test.size()
      << " test clouds to " << o.out.string() << " (seed " << seed << ")\n";
  return kExitOk;
}

int cmd_train(const TrainOptions& o, std::ostream& out) {
  TrainRunConfig rc;
  if (o.config) rc = parse_train_config(read_json_file(*o.config));
  const Arch arch = parse_arch(o.arch);
  const DatasetOnDisk data = load_dataset(o.data);
  if (data.train.empty() || data.test.empty()) {
    throw IoError("dataset " + o.data.string() +
                  " needs both train and test samples");
  }
  TrainConfig cfg = rc.train;
  cfg.seed = resolve_seed(o.seed, rc.seed);
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.lr) cfg.lr = *o.lr;

  TrainReport report;
  ClassifierParams params;
  try {
    params = train(arch, kClassCount, data.train, data.test, cfg, &report);
  } catch (const TrainingFailure& e) {
    out << "training failed: " << e.what() << "\n";
    return kExitInternal;
  }
  save_params(params, o.out);
  out << std::fixed << std::setprecision(4) << arch_name(arch)
      << " test_accuracy " << report.test_accuracy << " train_seconds "
      << std::setprecision(2) << report.train_seconds << "\n";
  if (report.test_accuracy < o.gate) {
    out << "accuracy gate " << o.gate << " not met\n";
    return kExitInternal;
  }
  return kExitOk;
}

int cmd_attack(const AttackOptions& o, std::ostream& out) {
  AttackMode mode;
  if (o.mode == "white") {
    mode = AttackMode::WhiteBox;
  } else if (o.mode == "black") {
    mode = AttackMode::BlackBox;
  } else {
    throw ConfigError("--mode must be 'white' or 'black'");
  }
  if (mode == AttackMode::BlackBox && !o.surrogate) {
    throw ConfigError("black mode requires --surrogate");
  }
  AttackRunConfig rc = parse_attack_config(read_json_file(o.config), mode);
  if (mode == AttackMode::WhiteBox && rc.method == WhiteMethod::Ifgm) {
    mode = AttackMode::Ifgm;
  }
  const ClassifierParams target = load_params(o.model);
  std::optional<ClassifierParams> surrogate;
  if (o.surrogate) surrogate = load_params(*o.surrogate);
  const std::vector<PointCloud> samples = test_split(o.data, rc.samples);

  BatchSpec spec;
  spec.mode = mode;
  spec.target = &target;
  spec.surrogate = surrogate ? &*surrogate : nullptr;
  spec.white = rc.white;
  spec.black = rc.black;
  spec.defense = parse_defense(o.defense);
  spec.seed = resolve_seed(o.seed, rc.seed);
  spec.jobs = o.jobs;
  const BatchResult result = batch_attack(spec, samples);

  nlohmann::json config;
  if (mode == AttackMode::BlackBox) {
    config["blackbox"] = to_json(spec.black);
  } else {
    config["whitebox"] = to_json(spec.white);
    config["whitebox"]["method"] =
        mode == AttackMode::Ifgm ? "ifgm" : "tangent";
  }
  nlohmann::json doc = {
      {"command", "attack"},
      {"mode", o.mode},
      {"attack", attack_mode_name(mode)},
      {"defense", defense_name(spec.defense)},
      {"seed", spec.seed},
      {"model", o.model.string()},
      {"surrogate", o.surrogate ? nlohmann::json(o.surrogate->string())
                                : nlohmann::json()},
      {"config", config},
      {"query_convention", "initial query counted"},
  };
  if (result.report) {
    doc["metrics"] = to_json(*result.report);
    const bool any_success = result.report->n_success > 0;
    doc["metrics_successes_only"] =
        any_success ? to_json(aggregate(result.outcomes, true))
                    : nlohmann::json();
  } else {
    doc["metrics"] = nullptr;
    doc["metrics_successes_only"] = nullptr;
  }
  doc["samples"] = nlohmann::json::array();
  for (const AttackOutcome& oc : result.outcomes) {
    doc["samples"].push_back(outcome_json(oc, config));
  }
  write_file_atomic(o.report, doc.dump(1) + "\n");

  const double asr = result.report ? result.report->asr : 0.0;
  out << std::fixed << std::setprecision(4) << attack_mode_name(mode)
      << " samples " << samples.size() << " asr " << asr;
  if (result.report) {
    out << " avg_queries " << result.report->avg_queries << " chamfer_x1e4 "
        << result.report->mean_chamfer << " hausdorff_x1e2 "
        << result.report->mean_hausdorff;
  }
  out << "\n";
  if (o.gate && asr < *o.gate) {
    out << "ASR gate " << *o.gate << " not met\n";
    return kExitGateUnmet;
  }
  return kExitOk;
}

int cmd_sensitivity(const SensitivityOptions& o, std::ostream& out,
                    std::ostream& err) {
  const ClassifierParams model = load_params(o.model);
  const PointCloud cloud = read_xyz(o.input);
  if (cloud.size() <= o.knn_k) {
    throw ParameterError("input has too few points for the neighbourhood");
  }
  const std::size_t predicted = predict(model, cloud);
  std::optional<std::size_t> label;
  if (o.label) {
    label = parse_label(*o.label);
  } else {
    label = label_from_filename(o.input);
  }
  if (!label) {
    err << "warning: no label given or encoded in the file name; using the "
           "predicted class\n";
    label = predicted;
  }
  const SensitivityMap map = compute_sensitivity(model, cloud, *label, o.knn_k);
  nlohmann::json doc = {{"label", *label},
                        {"predicted", predicted},
                        {"scores", map.scores},
                        {"directions", map.directions},
                        {"ranking", map.ranking}};
  if (predicted != *label) {
    const std::string msg =
        "input is misclassified (predicted " +
        std::string(class_names()[predicted]) + ", label " +
        std::string(class_names()[*label]) + "); all scores are zero";
    err << "warning: " << msg << "\n";
    doc["warning"] = msg;
  }
  write_ply_colored(cloud, map.scores, o.out);
  write_file_atomic(o.report, doc.dump(1) + "\n");
  double max_score = 0.0;
  for (double s : map.scores) max_score = std::max(max_score, s);
  out << "points " << cloud.size() << " label " << class_names()[*label]
      << " predicted " << class_names()[predicted] << " max_score "
      << max_score << "\n";
  return kExitOk;
}

int cmd_sweep(const SweepOptions& o, std::ostream& out) {
  const ClassifierParams model = load_params(o.model);
  const std::vector<PointCloud> samples = test_split(o.data, o.samples);
  SweepConfig cfg;
  cfg.ordering = parse_sweep_ordering(o.ordering);
  cfg.step = o.step;
  cfg.seed = resolve_seed(o.seed, std::nullopt);
  cfg.jobs = o.jobs;
  if (!(cfg.step >= 0.0)) throw ParameterError("--step must be >= 0");
  const SweepCurve curve = perturb_sweep(model, samples, cfg);
  std::string csv = "fraction,accuracy\n";
  char line[64];
  for (std::size_t i = 0; i < curve.fractions.size(); ++i) {
    std::snprintf(line, sizeof line, "%.4g,%.6f\n", curve.fractions[i],
                  curve.accuracy[i]);
    csv += line;
  }
  write_file_atomic(o.out, csv);
  out << sweep_ordering_name(cfg.ordering) << " sweep over "
      << samples.size() << " clouds written to " << o.out.string() << "\n";
  return kExitOk;
}

int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const IntegrityError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Tangent-plane adversarial attacks on point-cloud "
               "classifiers"};
  app.name("siadv");
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* g = app.add_subcommand("gen-data", "Write a synthetic dataset");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Master seed (default SIADV_SEED or 0)");
  g->add_option("--n-train", gen.n_train, "Training clouds")
      ->capture_default_str();
  g->add_option("--n-test", gen.n_test, "Test clouds")->capture_default_str();
  g->add_option("--n-points", gen.n_points, "Points per cloud")
      ->capture_default_str();
  g->add_flag("--force", gen.force, "Overwrite a non-empty directory");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train a classifier");
  t->add_option("--arch", tr.arch, "A or B")->capture_default_str();
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--seed", tr.seed, "Seed (default SIADV_SEED or 0)");
  t->add_option("--epochs", tr.epochs, "Epochs (default 30)");
  t->add_option("--lr", tr.lr, "Learning rate (default 0.03)");
  t->add_option("--config", tr.config, "Training config JSON");
  t->add_option("--gate", tr.gate, "Held-out accuracy gate")
      ->capture_default_str();

  AttackOptions at;
  auto* a = app.add_subcommand("attack", "Attack the test split");
  a->add_option("--mode", at.mode, "white or black")->required();
  a->add_option("--model", at.model, "Target checkpoint")->required();
  a->add_option("--surrogate", at.surrogate, "Surrogate checkpoint");
  a->add_option("--data", at.data, "Dataset directory")->required();
  a->add_option("--config", at.config, "Attack config JSON")->required();
  a->add_option("--report", at.report, "Report path")->required();
  a->add_option("--defense", at.defense, "none, sor, drop30 or drop50")
      ->capture_default_str();
  a->add_option("--seed", at.seed, "Seed (overrides config)");
  a->add_option("--gate", at.gate, "Exit 1 when ASR is below this");
  a->add_option("--jobs", at.jobs, "Worker threads, 0 = all cores")
      ->capture_default_str();

  SensitivityOptions se;
  auto* s = app.add_subcommand("sensitivity", "Sensitivity map of one cloud");
  s->add_option("--model", se.model, "Checkpoint")->required();
  s->add_option("--input", se.input, "XYZ cloud")->required();
  s->add_option("--out", se.out, "Colored PLY path")->required();
  s->add_option("--report", se.report, "JSON path")->required();
  s->add_option("--label", se.label, "True class (index or name)");
  s->add_option("--knn", se.knn_k, "Neighbourhood size")
      ->capture_default_str();

  SweepOptions sw;
  auto* w = app.add_subcommand("sweep", "Accuracy versus perturbed fraction");
  w->add_option("--model", sw.model, "Checkpoint")->required();
  w->add_option("--data", sw.data, "Dataset directory")->required();
  w->add_option("--ordering", sw.ordering, "descending, ascending, random")
      ->capture_default_str();
  w->add_option("--step", sw.step, "Per-point step")->capture_default_str();
  w->add_option("--out", sw.out, "CSV path")->required();
  w->add_option("--seed", sw.seed, "Seed for the random ordering");
  w->add_option("--samples", sw.samples, "Use the first n test clouds");
  w->add_option("--jobs", sw.jobs, "Worker threads, 0 = all cores")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream so, se_;
    const int code = app.exit(e, so, se_);
    out << so.str();
    err << se_.str();
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*g) return guarded([&] { return cmd_gen_data(gen, out); }, err);
  if (*t) return guarded([&] { return cmd_train(tr, out); }, err);
  if (*a) return guarded([&] { return cmd_attack(at, out); }, err);
  if (*s) return guarded([&] { return cmd_sensitivity(se, out, err); }, err);
  return guarded([&] { return cmd_sweep(sw, out); }, err);
}

}  // namespace siadv::cli
