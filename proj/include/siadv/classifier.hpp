#pragma once

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "siadv/error.hpp"
#include "siadv/geometry.hpp"

namespace siadv {

/// PointNet-style classifiers: a shared per-point ReLU MLP, feature-wise max
/// pooling over points, then a one-hidden-layer head.
///   VariantA: 3->32->64->128, head 128->64->C
///   VariantB: 3->48->96->160, head 160->80->C
enum class Arch { VariantA, VariantB };

std::string_view arch_name(Arch arch);
Arch parse_arch(std::string_view name);  // "VariantA"/"A", "VariantB"/"B"

/// Fully connected layer, y = x W + b with W stored row-major (in x out).
struct DenseLayer {
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  double& w(std::size_t i, std::size_t o) { return weight[i * out + o]; }
  double w(std::size_t i, std::size_t o) const { return weight[i * out + o]; }
};

struct ClassifierParams {
  Arch arch = Arch::VariantA;
  std::size_t class_count = 0;
  std::vector<DenseLayer> point_layers;  // ReLU after each
  std::vector<DenseLayer> head_layers;   // ReLU after all but the last
  std::uint64_t seed = 0;
  nlohmann::json train_meta = nlohmann::json::object();

  std::size_t feature_width() const { return point_layers.back().out; }
};

struct Logits {
  std::vector<double> scores;
  std::vector<double> probs;

  std::size_t argmax() const;
};

/// Glorot-uniform weights, zero biases.
ClassifierParams init_params(Arch arch, std::size_t class_count,
                             std::uint64_t seed);

/// Throws ShapeError if layer shapes disagree with `params.arch`, and
/// ParameterError on non-finite entries.
void validate_params(const ClassifierParams& params);

Logits forward(const ClassifierParams& params, const PointCloud& cloud);
std::size_t predict(const ClassifierParams& params, const PointCloud& cloud);

/// max(s_t - max_{j != t} s_j, 0) on raw scores.
double margin_loss(const Logits& logits, std::size_t t);

struct MarginGradient {
  Logits logits;
  double loss = 0.0;
  std::vector<Vec3> grad;  // dL/dp_i, zero everywhere when loss == 0
};

/// Reverse-mode gradient of the margin loss with respect to every input
/// coordinate. Max pooling routes each channel to its (lowest-index) argmax.
MarginGradient margin_loss_gradient(const ClassifierParams& params,
                                    const PointCloud& cloud, std::size_t t);
std::vector<Vec3> input_gradient(const ClassifierParams& params,
                                 const PointCloud& cloud, std::size_t t);

/// -log softmax(scores)_t
double cross_entropy(const Logits& logits, std::size_t t);

struct ParamGradients {
  std::vector<DenseLayer> point_layers;
  std::vector<DenseLayer> head_layers;
  double loss = 0.0;  // mean cross-entropy over the batch
};

/// Mean cross-entropy gradient over a labelled batch.
ParamGradients param_gradients(const ClassifierParams& params,
                               std::span<const PointCloud> batch);

/// Evaluates the network for many clouds that differ from the previous
/// query in a few points only. Per-point features are cached and only rows
/// whose coordinates changed are recomputed, so results are bitwise equal
/// to forward(). One instance per thread.
class IncrementalForward {
 public:
  explicit IncrementalForward(const ClassifierParams& params);

  Logits evaluate(const PointCloud& cloud);
  /// Pools only the rows listed in `keep` (ascending indices).
  Logits evaluate_subset(const PointCloud& cloud,
                         std::span<const std::size_t> keep);

  std::size_t rows_recomputed() const { return rows_recomputed_; }

 private:
  void refresh(const PointCloud& cloud);

  const ClassifierParams* params_;
  std::vector<Vec3> cached_points_;
  std::vector<double> features_;  // N x feature_width
  std::size_t rows_recomputed_ = 0;
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 30;
  double lr = 0.03;
  double momentum = 0.9;
  std::size_t lr_halving_epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double failure_accuracy = 0.70;
  bool augment = true;
};

struct TrainReport {
  double test_accuracy = 0.0;
  double train_seconds = 0.0;
  std::vector<double> epoch_loss;
};

class TrainingFailure : public Error {
 public:
  TrainingFailure(const std::string& what, ClassifierParams params,
                  double accuracy)
      : Error(what), params_(std::move(params)), accuracy_(accuracy) {}
  const ClassifierParams& params() const { return params_; }
  double accuracy() const { return accuracy_; }

 private:
  ClassifierParams params_;
  double accuracy_;
};

double accuracy(const ClassifierParams& params,
                std::span<const PointCloud> samples);

/// Mini-batch SGD with momentum on labelled clouds. Throws TrainingFailure
/// when held-out accuracy ends below `config.failure_accuracy`.
ClassifierParams train(Arch arch, std::size_t class_count,
                       std::span<const PointCloud> train_set,
                       std::span<const PointCloud> test_set,
                       const TrainConfig& config,
                       TrainReport* report = nullptr);

// ---------------------------------------------------------------------------
// Checkpoints

void save_params(const ClassifierParams& params,
                 const std::filesystem::path& path);
/// Throws IntegrityError on malformed or truncated files, ShapeError when
/// `expected` is given and does not match the stored architecture.
ClassifierParams load_params(const std::filesystem::path& path,
                             std::optional<Arch> expected = std::nullopt);

std::string serialize_params(const ClassifierParams& params);
ClassifierParams deserialize_params(std::string_view text,
                                    std::optional<Arch> expected = std::nullopt);

}  // namespace siadv
