#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "siadv/classifier.hpp"
#include "siadv/rng.hpp"

namespace siadv {

namespace {

// Per-point rows are evaluated in tiles of kTile rows through an identical
// instruction sequence, so a row's features do not depend on where it sits
// in the cloud or on which other rows are evaluated with it.
constexpr std::size_t kTile = 4;
constexpr std::size_t kBlock = 16;  // output columns per accumulator block
constexpr std::size_t kMaxWidth = 256;

struct ArchShape {
  std::array<std::size_t, 4> point;  // 3 -> a -> b -> c
  std::size_t hidden;
};

ArchShape arch_shape(Arch arch) {
  if (arch == Arch::VariantA) return {{3, 32, 64, 128}, 64};
  return {{3, 48, 96, 160}, 80};
}

using Lane = double __attribute__((vector_size(64)));  // 8 doubles
constexpr std::size_t kLaneWidth = 8;

void dense_tile(const double* in, std::size_t in_dim, const DenseLayer& layer,
                double* out) {
  const std::size_t out_dim = layer.out;
  for (std::size_t ob = 0; ob < out_dim; ob += kBlock) {
    Lane lo, hi;
    __builtin_memcpy(&lo, layer.bias.data() + ob, sizeof lo);
    __builtin_memcpy(&hi, layer.bias.data() + ob + kLaneWidth, sizeof hi);
    Lane acc[kTile][2];
    for (std::size_t p = 0; p < kTile; ++p) {
      acc[p][0] = lo;
      acc[p][1] = hi;
    }
    for (std::size_t i = 0; i < in_dim; ++i) {
      const double* w = layer.weight.data() + i * out_dim + ob;
      Lane w0, w1;
      __builtin_memcpy(&w0, w, sizeof w0);
      __builtin_memcpy(&w1, w + kLaneWidth, sizeof w1);
      for (std::size_t p = 0; p < kTile; ++p) {
        const double x = in[p * in_dim + i];
        acc[p][0] += x * w0;
        acc[p][1] += x * w1;
      }
    }
    const Lane zero = {};
    for (std::size_t p = 0; p < kTile; ++p) {
      const Lane r0 = acc[p][0] > zero ? acc[p][0] : zero;
      const Lane r1 = acc[p][1] > zero ? acc[p][1] : zero;
      __builtin_memcpy(out + p * out_dim + ob, &r0, sizeof r0);
      __builtin_memcpy(out + p * out_dim + ob + kLaneWidth, &r1, sizeof r1);
    }
  }
}

/// Dot product of two length-n vectors, n a multiple of kLaneWidth, summed
/// lane-wise and then across lanes in a fixed order.
double dot_lanes(const double* a, const double* b, std::size_t n) {
  Lane acc = {};
  for (std::size_t o = 0; o < n; o += kLaneWidth) {
    Lane x, y;
    __builtin_memcpy(&x, a + o, sizeof x);
    __builtin_memcpy(&y, b + o, sizeof y);
    acc += x * y;
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < kLaneWidth; ++k) sum += acc[k];
  return sum;
}

/// Runs the per-point MLP for `rows` (indices into `points`). Writes the final
/// features to `features` (rows.size() x width). When `hidden` is non-null it
/// receives every layer's post-ReLU activations, hidden[l] being
/// rows.size() x point_layers[l].out.
void point_mlp(const ClassifierParams& params, std::span<const Vec3> points,
               std::span<const std::size_t> rows, double* features,
               std::vector<std::vector<double>>* hidden = nullptr) {
  const auto& layers = params.point_layers;
  const std::size_t width = params.feature_width();
  if (hidden) {
    hidden->resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      (*hidden)[l].assign(rows.size() * layers[l].out, 0.0);
    }
  }
  alignas(64) double buf_a[kTile * kMaxWidth];
  alignas(64) double buf_b[kTile * kMaxWidth];
  for (std::size_t start = 0; start < rows.size(); start += kTile) {
    const std::size_t count = std::min(kTile, rows.size() - start);
    for (std::size_t p = 0; p < kTile; ++p) {
      const Vec3 v = p < count ? points[rows[start + p]] : Vec3::Zero();
      buf_a[p * 3 + 0] = v.x();
      buf_a[p * 3 + 1] = v.y();
      buf_a[p * 3 + 2] = v.z();
    }
    double* in = buf_a;
    double* out = buf_b;
    std::size_t in_dim = 3;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      dense_tile(in, in_dim, layers[l], out);
      in_dim = layers[l].out;
      if (hidden) {
        for (std::size_t p = 0; p < count; ++p) {
          std::copy_n(out + p * in_dim, in_dim,
                      (*hidden)[l].data() + (start + p) * in_dim);
        }
      }
      std::swap(in, out);
    }
    for (std::size_t p = 0; p < count; ++p) {
      std::copy_n(in + p * width, width, features + (start + p) * width);
    }
  }
}

struct Pooled {
  std::vector<double> values;
  std::vector<std::size_t> argmax;  // row index (into the pooled rows)
};

/// Feature-wise max over the listed rows of an (N x width) matrix; the lowest
/// row wins ties.
Pooled max_pool(const double* features, std::size_t width,
                std::span<const std::size_t> rows) {
  Pooled out;
  out.values.assign(features + rows[0] * width,
                    features + rows[0] * width + width);
  out.argmax.assign(width, rows[0]);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const double* f = features + rows[r] * width;
    for (std::size_t c = 0; c < width; ++c) {
      if (f[c] > out.values[c]) {
        out.values[c] = f[c];
        out.argmax[c] = rows[r];
      }
    }
  }
  return out;
}

void dense_vec(const std::vector<double>& x, const DenseLayer& layer,
               bool relu, std::vector<double>& y) {
  y.assign(layer.bias.begin(), layer.bias.end());
  for (std::size_t i = 0; i < layer.in; ++i) {
    const double xi = x[i];
    const double* w = layer.weight.data() + i * layer.out;
    for (std::size_t o = 0; o < layer.out; ++o) y[o] += xi * w[o];
  }
  if (relu) {
    for (double& v : y) v = v > 0.0 ? v : 0.0;
  }
}

struct HeadState {
  std::vector<std::vector<double>> inputs;  // input of each head layer
  Logits logits;
};

Logits make_logits(std::vector<double> scores) {
  Logits l;
  l.scores = std::move(scores);
  const double m = *std::max_element(l.scores.begin(), l.scores.end());
  l.probs.resize(l.scores.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < l.scores.size(); ++j) {
    l.probs[j] = std::exp(l.scores[j] - m);
    sum += l.probs[j];
  }
  for (double& p : l.probs) p /= sum;
  return l;
}

HeadState run_head(const ClassifierParams& params, std::vector<double> pooled) {
  HeadState st;
  st.inputs.push_back(std::move(pooled));
  std::vector<double> y;
  for (std::size_t l = 0; l < params.head_layers.size(); ++l) {
    const bool last = l + 1 == params.head_layers.size();
    dense_vec(st.inputs.back(), params.head_layers[l], !last, y);
    if (!last) st.inputs.push_back(y);
  }
  st.logits = make_logits(std::move(y));
  return st;
}

void check_input(const ClassifierParams& params, const PointCloud& cloud) {
  if (params.point_layers.empty() || params.head_layers.empty()) {
    throw ParameterError("classifier: parameters are empty");
  }
  if (cloud.empty()) throw ParameterError("classifier: empty point cloud");
  if (params.point_layers.front().in != 3) {
    throw ParameterError("classifier: first layer must take 3 inputs");
  }
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

struct ForwardState {
  std::vector<double> features;  // N x width
  Pooled pooled;
  HeadState head;
};

ForwardState forward_state(const ClassifierParams& params,
                           const PointCloud& cloud) {
  check_input(params, cloud);
  ForwardState st;
  const std::size_t width = params.feature_width();
  const auto rows = all_rows(cloud.size());
  st.features.resize(cloud.size() * width);
  point_mlp(params, cloud.points, rows, st.features.data());
  st.pooled = max_pool(st.features.data(), width, rows);
  st.head = run_head(params, st.pooled.values);
  return st;
}

DenseLayer zero_like(const DenseLayer& layer) {
  DenseLayer z;
  z.name = layer.name;
  z.in = layer.in;
  z.out = layer.out;
  z.weight.assign(layer.weight.size(), 0.0);
  z.bias.assign(layer.bias.size(), 0.0);
  return z;
}

/// Back-propagates dL/dscores. Accumulates parameter gradients into `grads`
/// (scaled by `scale`) and/or writes dL/dp into `dinput`.
void backward(const ClassifierParams& params, const PointCloud& cloud,
              const ForwardState& st, std::vector<double> dout, double scale,
              ParamGradients* grads, std::vector<Vec3>* dinput) {
  // Head, last layer first.
  for (std::size_t l = params.head_layers.size(); l-- > 0;) {
    const DenseLayer& layer = params.head_layers[l];
    const std::vector<double>& x = st.head.inputs[l];
    if (grads) {
      DenseLayer& g = grads->head_layers[l];
      for (std::size_t i = 0; i < layer.in; ++i) {
        const double xi = x[i] * scale;
        if (xi == 0.0) continue;
        for (std::size_t o = 0; o < layer.out; ++o) g.w(i, o) += xi * dout[o];
      }
      for (std::size_t o = 0; o < layer.out; ++o) g.bias[o] += scale * dout[o];
    }
    std::vector<double> dx(layer.in, 0.0);
    for (std::size_t i = 0; i < layer.in; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < layer.out; ++o) acc += layer.w(i, o) * dout[o];
      // Inputs of layers after the first are post-ReLU activations.
      dx[i] = (l == 0 || x[i] > 0.0) ? acc : 0.0;
    }
    dout = std::move(dx);
  }

  // Route pooled gradients to the argmax rows.
  const std::size_t width = params.feature_width();
  std::vector<std::size_t> critical;
  for (std::size_t c = 0; c < width; ++c) {
    if (dout[c] != 0.0) critical.push_back(st.pooled.argmax[c]);
  }
  std::sort(critical.begin(), critical.end());
  critical.erase(std::unique(critical.begin(), critical.end()),
                 critical.end());
  if (dinput) dinput->assign(cloud.size(), Vec3::Zero());
  if (critical.empty()) return;

  const std::size_t m = critical.size();
  std::vector<std::vector<double>> acts;
  std::vector<double> feats(m * width);
  point_mlp(params, cloud.points, critical, feats.data(), &acts);

  std::vector<double> delta(m * width, 0.0);  // dL/d(post-ReLU features)
  for (std::size_t c = 0; c < width; ++c) {
    if (dout[c] == 0.0) continue;
    const auto r = std::lower_bound(critical.begin(), critical.end(),
                                    st.pooled.argmax[c]) - critical.begin();
    delta[r * width + c] += dout[c];
  }

  std::vector<double> inputs0(m * 3);
  for (std::size_t r = 0; r < m; ++r) {
    for (int a = 0; a < 3; ++a) inputs0[r * 3 + a] = cloud[critical[r]][a];
  }

  for (std::size_t l = params.point_layers.size(); l-- > 0;) {
    const DenseLayer& layer = params.point_layers[l];
    const std::vector<double>& post = acts[l];
    const std::vector<double>& x = l == 0 ? inputs0 : acts[l - 1];
    // Through the ReLU.
    for (std::size_t k = 0; k < delta.size(); ++k) {
      if (!(post[k] > 0.0)) delta[k] = 0.0;
    }
    if (grads) {
      DenseLayer& g = grads->point_layers[l];
      for (std::size_t r = 0; r < m; ++r) {
        const double* __restrict d = delta.data() + r * layer.out;
        const double* xr = x.data() + r * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) {
          const double xi = xr[i] * scale;
          if (xi == 0.0) continue;
          double* __restrict gw = g.weight.data() + i * layer.out;
          for (std::size_t o = 0; o < layer.out; ++o) gw[o] += xi * d[o];
        }
        for (std::size_t o = 0; o < layer.out; ++o) g.bias[o] += scale * d[o];
      }
    }
    if (l == 0 && !dinput) break;
    std::vector<double> dx(m * layer.in, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      const double* __restrict d = delta.data() + r * layer.out;
      for (std::size_t i = 0; i < layer.in; ++i) {
        const double* __restrict w = layer.weight.data() + i * layer.out;
        dx[r * layer.in + i] = dot_lanes(w, d, layer.out);
      }
    }
    delta = std::move(dx);
  }
  if (dinput) {
    for (std::size_t r = 0; r < m; ++r) {
      (*dinput)[critical[r]] =
          Vec3(delta[r * 3 + 0], delta[r * 3 + 1], delta[r * 3 + 2]);
    }
  }
}

std::size_t runner_up(const std::vector<double>& scores, std::size_t t) {
  std::size_t best = t == 0 ? 1 : 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (j != t && scores[j] > scores[best]) best = j;
  }
  return best;
}

}  // namespace

std::string_view arch_name(Arch arch) {
  return arch == Arch::VariantA ? "VariantA" : "VariantB";
}

Arch parse_arch(std::string_view name) {
  if (name == "VariantA" || name == "A") return Arch::VariantA;
  if (name == "VariantB" || name == "B") return Arch::VariantB;
  throw ParameterError("unknown architecture '" + std::string(name) + "'");
}

std::size_t Logits::argmax() const {
  return static_cast<std::size_t>(
      std::max_element(scores.begin(), scores.end()) - scores.begin());
}

ClassifierParams init_params(Arch arch, std::size_t class_count,
                             std::uint64_t seed) {
  if (class_count < 2) throw ParameterError("init_params: need >= 2 classes");
  const ArchShape shape = arch_shape(arch);
  ClassifierParams params;
  params.arch = arch;
  params.class_count = class_count;
  params.seed = seed;
  Rng rng(seed);
  auto make = [&](std::string name, std::size_t in, std::size_t out) {
    DenseLayer layer;
    layer.name = std::move(name);
    layer.in = in;
    layer.out = out;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    layer.weight.resize(in * out);
    for (double& w : layer.weight) w = dist(rng);
    layer.bias.assign(out, 0.0);
    return layer;
  };
  for (std::size_t l = 0; l + 1 < shape.point.size(); ++l) {
    params.point_layers.push_back(make("point" + std::to_string(l + 1),
                                       shape.point[l], shape.point[l + 1]));
  }
  params.head_layers.push_back(make("head1", shape.point.back(), shape.hidden));
  params.head_layers.push_back(make("head2", shape.hidden, class_count));
  return params;
}

void validate_params(const ClassifierParams& params) {
  const ArchShape shape = arch_shape(params.arch);
  const std::string arch(arch_name(params.arch));
  if (params.point_layers.size() != 3 || params.head_layers.size() != 2) {
    throw ShapeError(arch + ": expected 3 point layers and 2 head layers");
  }
  auto check = [&](const DenseLayer& layer, std::size_t in, std::size_t out) {
    if (layer.in != in || layer.out != out ||
        layer.weight.size() != in * out || layer.bias.size() != out) {
      throw ShapeError(arch + ": layer " + layer.name + " has shape " +
                       std::to_string(layer.in) + "x" +
                       std::to_string(layer.out) + ", expected " +
                       std::to_string(in) + "x" + std::to_string(out));
    }
    for (double v : layer.weight) {
      if (!std::isfinite(v)) {
        throw ParameterError("layer " + layer.name + " has non-finite weight");
      }
    }
    for (double v : layer.bias) {
      if (!std::isfinite(v)) {
        throw ParameterError("layer " + layer.name + " has non-finite bias");
      }
    }
  };
  for (std::size_t l = 0; l < 3; ++l) {
    check(params.point_layers[l], shape.point[l], shape.point[l + 1]);
  }
  check(params.head_layers[0], shape.point.back(), shape.hidden);
  check(params.head_layers[1], shape.hidden, params.class_count);
}

Logits forward(const ClassifierParams& params, const PointCloud& cloud) {
  return forward_state(params, cloud).head.logits;
}

std::size_t predict(const ClassifierParams& params, const PointCloud& cloud) {
  return forward(params, cloud).argmax();
}

double margin_loss(const Logits& logits, std::size_t t) {
  if (t >= logits.scores.size()) {
    throw ParameterError("margin_loss: class index out of range");
  }
  const std::size_t j = runner_up(logits.scores, t);
  return std::max(logits.scores[t] - logits.scores[j], 0.0);
}

MarginGradient margin_loss_gradient(const ClassifierParams& params,
                                    const PointCloud& cloud, std::size_t t) {
  const ForwardState st = forward_state(params, cloud);
  MarginGradient out;
  out.logits = st.head.logits;
  out.loss = margin_loss(out.logits, t);
  if (out.loss <= 0.0) {
    out.grad.assign(cloud.size(), Vec3::Zero());
    return out;
  }
  std::vector<double> dscores(params.class_count, 0.0);
  dscores[t] = 1.0;
  dscores[runner_up(out.logits.scores, t)] = -1.0;
  backward(params, cloud, st, std::move(dscores), 1.0, nullptr, &out.grad);
  return out;
}

std::vector<Vec3> input_gradient(const ClassifierParams& params,
                                 const PointCloud& cloud, std::size_t t) {
  return margin_loss_gradient(params, cloud, t).grad;
}

double cross_entropy(const Logits& logits, std::size_t t) {
  if (t >= logits.scores.size()) {
    throw ParameterError("cross_entropy: class index out of range");
  }
  const double m = *std::max_element(logits.scores.begin(),
                                     logits.scores.end());
  double sum = 0.0;
  for (double s : logits.scores) sum += std::exp(s - m);
  return m + std::log(sum) - logits.scores[t];
}

ParamGradients param_gradients(const ClassifierParams& params,
                               std::span<const PointCloud> batch) {
  ParamGradients grads;
  for (const auto& l : params.point_layers) {
    grads.point_layers.push_back(zero_like(l));
  }
  for (const auto& l : params.head_layers) {
    grads.head_layers.push_back(zero_like(l));
  }
  if (batch.empty()) return grads;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const PointCloud& cloud : batch) {
    if (!cloud.label || *cloud.label < 0 ||
        static_cast<std::size_t>(*cloud.label) >= params.class_count) {
      throw ParameterError("param_gradients: sample without a valid label");
    }
    const auto t = static_cast<std::size_t>(*cloud.label);
    const ForwardState st = forward_state(params, cloud);
    grads.loss += scale * cross_entropy(st.head.logits, t);
    std::vector<double> dscores = st.head.logits.probs;
    dscores[t] -= 1.0;
    backward(params, cloud, st, std::move(dscores), scale, &grads, nullptr);
  }
  return grads;
}

IncrementalForward::IncrementalForward(const ClassifierParams& params)
    : params_(&params) {}

void IncrementalForward::refresh(const PointCloud& cloud) {
  check_input(*params_, cloud);
  const std::size_t width = params_->feature_width();
  std::vector<std::size_t> changed;
  if (cached_points_.size() != cloud.size()) {
    cached_points_.assign(cloud.points.begin(), cloud.points.end());
    features_.assign(cloud.size() * width, 0.0);
    changed = all_rows(cloud.size());
  } else {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (cloud[i] != cached_points_[i]) {
        changed.push_back(i);
        cached_points_[i] = cloud[i];
      }
    }
  }
  if (changed.empty()) return;
  std::vector<double> rows(changed.size() * width);
  point_mlp(*params_, cached_points_, changed, rows.data());
  for (std::size_t r = 0; r < changed.size(); ++r) {
    std::copy_n(rows.data() + r * width, width,
                features_.data() + changed[r] * width);
  }
  rows_recomputed_ += changed.size();
}

Logits IncrementalForward::evaluate(const PointCloud& cloud) {
  refresh(cloud);
  const auto rows = all_rows(cloud.size());
  const Pooled pooled = max_pool(features_.data(), params_->feature_width(),
                                 rows);
  return run_head(*params_, pooled.values).logits;
}

Logits IncrementalForward::evaluate_subset(const PointCloud& cloud,
                                           std::span<const std::size_t> keep) {
  if (keep.empty()) throw ParameterError("evaluate_subset: no rows kept");
  refresh(cloud);
  for (std::size_t i : keep) {
    if (i >= cloud.size()) throw ParameterError("evaluate_subset: bad index");
  }
  const Pooled pooled = max_pool(features_.data(), params_->feature_width(),
                                 keep);
  return run_head(*params_, pooled.values).logits;
}

}  // namespace siadv
