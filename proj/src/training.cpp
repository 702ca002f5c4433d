#include <algorithm>
#include <chrono>
#include <numeric>
#include <string>

#include "siadv/classifier.hpp"
#include "siadv/data.hpp"
#include "siadv/rng.hpp"

namespace siadv {

namespace {

void sgd_step(std::vector<DenseLayer>& layers, std::vector<DenseLayer>& velocity,
              const std::vector<DenseLayer>& grads, double lr,
              double momentum) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto update = [&](std::vector<double>& p, std::vector<double>& v,
                      const std::vector<double>& g) {
      for (std::size_t k = 0; k < p.size(); ++k) {
        v[k] = momentum * v[k] + g[k];
        p[k] -= lr * v[k];
      }
    };
    update(layers[l].weight, velocity[l].weight, grads[l].weight);
    update(layers[l].bias, velocity[l].bias, grads[l].bias);
  }
}

std::vector<DenseLayer> zeros(const std::vector<DenseLayer>& layers) {
  std::vector<DenseLayer> out = layers;
  for (auto& l : out) {
    std::fill(l.weight.begin(), l.weight.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  return out;
}

}  // namespace

double accuracy(const ClassifierParams& params,
                std::span<const PointCloud> samples) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const PointCloud& c : samples) {
    if (c.label && predict(params, c) == static_cast<std::size_t>(*c.label)) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

ClassifierParams train(Arch arch, std::size_t class_count,
                       std::span<const PointCloud> train_set,
                       std::span<const PointCloud> test_set,
                       const TrainConfig& config, TrainReport* report) {
  if (train_set.empty()) throw ParameterError("train: empty training set");
  if (config.batch_size == 0 || config.lr < 0.0 || config.momentum < 0.0) {
    throw ParameterError("train: invalid configuration");
  }
  const auto t0 = std::chrono::steady_clock::now();
  ClassifierParams params = init_params(arch, class_count, config.seed);
  std::vector<DenseLayer> vel_point = zeros(params.point_layers);
  std::vector<DenseLayer> vel_head = zeros(params.head_layers);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(config.seed, 0xba7c4));
  std::vector<double> epoch_loss;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::size_t halvings =
        config.lr_halving_epochs ? epoch / config.lr_halving_epochs : 0;
    const double lr = config.lr / static_cast<double>(1ULL << halvings);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<PointCloud> batch;
      batch.reserve(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        if (config.augment) {
          batch.push_back(augment(train_set[idx],
                                  derive_seed(config.seed, epoch + 1, idx)));
        } else {
          batch.push_back(train_set[idx]);
        }
      }
      const ParamGradients g = param_gradients(params, batch);
      loss_sum += g.loss;
      ++batches;
      sgd_step(params.point_layers, vel_point, g.point_layers, lr,
               config.momentum);
      sgd_step(params.head_layers, vel_head, g.head_layers, lr,
               config.momentum);
    }
    epoch_loss.push_back(batches ? loss_sum / static_cast<double>(batches)
                                 : 0.0);
  }

  const double acc = accuracy(params, test_set);
  const double seconds = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
  params.train_meta = {{"epochs", config.epochs},
                       {"lr", config.lr},
                       {"momentum", config.momentum},
                       {"batch_size", config.batch_size},
                       {"lr_halving_epochs", config.lr_halving_epochs},
                       {"n_train", train_set.size()},
                       {"n_test", test_set.size()},
                       {"test_accuracy", acc}};
  if (report) {
    report->test_accuracy = acc;
    report->train_seconds = seconds;
    report->epoch_loss = epoch_loss;
  }
  if (acc < config.failure_accuracy) {
    throw TrainingFailure("training reached held-out accuracy " +
                              std::to_string(acc) + " < " +
                              std::to_string(config.failure_accuracy),
                          std::move(params), acc);
  }
  return params;
}

}  // namespace siadv
