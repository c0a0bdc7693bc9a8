#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eatcl/errors.hpp"
#include "eatcl/matrix.hpp"
#include "eatcl/rng.hpp"

namespace eatcl {

/// Feed-forward classifier: affine layers with rectifier activations between
/// them and raw logits at the output.
struct MLPModel {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., classes
  std::vector<Matrix> weights;           // weights[l] is sizes[l] x sizes[l+1]
  std::vector<std::vector<double>> biases;

  std::size_t num_layers() const noexcept { return weights.size(); }
  std::size_t input_dim() const noexcept { return layer_sizes.front(); }
  std::size_t num_classes() const noexcept { return layer_sizes.back(); }

  std::size_t parameter_count() const noexcept {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  friend bool operator==(const MLPModel&, const MLPModel&) = default;
};

/// Gradients of a scalar loss with respect to every parameter and the input batch.
struct GradBundle {
  std::vector<Matrix> weight_grads;
  std::vector<std::vector<double>> bias_grads;
  Matrix input_grads;

  static GradBundle zeros_like(const MLPModel& m, std::size_t batch = 0) {
    GradBundle g;
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
      g.weight_grads.emplace_back(m.weights[l].rows(), m.weights[l].cols());
      g.bias_grads.emplace_back(m.biases[l].size(), 0.0);
    }
    g.input_grads = Matrix(batch, m.input_dim());
    return g;
  }

  /// Accumulates parameter gradients scaled by `scale`; input gradients are
  /// batch-specific and left alone.
  void add_params(const GradBundle& o, double scale = 1.0) {
    if (o.weight_grads.size() != weight_grads.size())
      throw DimensionError("GradBundle::add_params: layer count mismatch");
    for (std::size_t l = 0; l < weight_grads.size(); ++l) {
      require_same_shape(weight_grads[l], o.weight_grads[l], "GradBundle::add_params");
      auto dst = weight_grads[l].values();
      auto src = o.weight_grads[l].values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
      for (std::size_t i = 0; i < bias_grads[l].size(); ++i)
        bias_grads[l][i] += scale * o.bias_grads[l][i];
    }
  }
};

struct SGDConfig {
  double learning_rate = 0.1;
};

inline void validate_layer_sizes(std::span<const std::size_t> sizes) {
  if (sizes.size() < 2) throw ArgumentError("init_model: need at least input and output sizes");
  for (std::size_t s : sizes)
    if (s == 0) throw ArgumentError("init_model: layer sizes must be positive");
}

/// Weights ~ U(-√(6/fan_in), +√(6/fan_in)), biases zero.
inline MLPModel init_model(std::span<const std::size_t> layer_sizes, std::uint64_t seed) {
  validate_layer_sizes(layer_sizes);
  MLPModel m;
  m.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const std::size_t fan_in = layer_sizes[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    Matrix w(fan_in, layer_sizes[l + 1]);
    for (double& v : w.values()) v = rng.uniform(-limit, limit);
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(layer_sizes[l + 1], 0.0);
  }
  return m;
}

inline MLPModel init_model(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
  return init_model(std::span<const std::size_t>(layer_sizes), seed);
}

/// Activations recorded by a forward pass. inputs[l] is what layer l consumed
/// (post-activation of layer l-1); pre[l] is layer l's affine output.
struct ForwardTape {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
  const Matrix& logits() const { return pre.back(); }
};

inline ForwardTape forward_tape(const MLPModel& model, const Matrix& x) {
  if (x.cols() != model.input_dim())
    throw DimensionError("forward: input has " + std::to_string(x.cols()) +
                         " features, model expects " + std::to_string(model.input_dim()));
  ForwardTape tape;
  tape.inputs.reserve(model.num_layers());
  tape.pre.reserve(model.num_layers());
  tape.inputs.push_back(x);
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    Matrix z = matmul(tape.inputs[l], model.weights[l]);
    const auto& b = model.biases[l];
    for (std::size_t i = 0; i < z.rows(); ++i) {
      auto r = z.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
    }
    if (l + 1 < model.num_layers()) {
      Matrix h = z;
      for (double& v : h.values()) v = v > 0.0 ? v : 0.0;
      tape.inputs.push_back(std::move(h));
    }
    tape.pre.push_back(std::move(z));
  }
  return tape;
}

inline Matrix forward(const MLPModel& model, const Matrix& x) {
  return std::move(forward_tape(model, x).pre.back());
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto in = logits.row(i);
    auto out = p.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) s += (out[j] = std::exp(in[j] - mx));
    for (double& v : out) v /= s;
  }
  return p;
}

struct LossAndGrad {
  double loss = 0.0;
  Matrix dlogits;
};

inline void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows)
    throw DimensionError("labels: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw ArgumentError("label " + std::to_string(y) + " outside [0, " +
                          std::to_string(classes) + ")");
}

/// Mean softmax cross-entropy and its gradient (softmax - onehot) / batch.
inline LossAndGrad softmax_ce(const Matrix& logits, std::span<const int> labels) {
  check_labels(labels, logits.rows(), logits.cols());
  LossAndGrad out;
  out.dlogits = Matrix(logits.rows(), logits.cols());
  if (logits.rows() == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto in = logits.row(i);
    auto d = out.dlogits.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) s += (d[j] = std::exp(in[j] - mx));
    const auto y = static_cast<std::size_t>(labels[i]);
    out.loss += (std::log(s) - (in[y] - mx)) * inv_n;
    for (double& v : d) v = v / s * inv_n;
    d[y] -= inv_n;
  }
  return out;
}

enum class GradTargets { all, inputs_only };

/// Reverse pass over a recorded tape.
inline GradBundle backward(const MLPModel& model, const ForwardTape& tape, const Matrix& dlogits,
                           GradTargets targets = GradTargets::all) {
  if (!dlogits.same_shape(tape.logits()))
    throw DimensionError("backward: cotangent " + dlogits.shape_string() + " vs logits " +
                         tape.logits().shape_string());
  GradBundle g;
  const std::size_t L = model.num_layers();
  const bool params = targets == GradTargets::all;
  if (params) {
    g.weight_grads.resize(L);
    g.bias_grads.resize(L);
  }
  Matrix delta = dlogits;
  for (std::size_t l = L; l-- > 0;) {
    if (params) {
      g.weight_grads[l] = matmul_tn(tape.inputs[l], delta);
      auto& bg = g.bias_grads[l];
      bg.assign(delta.cols(), 0.0);
      for (std::size_t i = 0; i < delta.rows(); ++i) {
        auto r = delta.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) bg[j] += r[j];
      }
    }
    Matrix dh = matmul_nt(delta, model.weights[l]);
    if (l == 0) {
      g.input_grads = std::move(dh);
    } else {
      const Matrix& z = tape.pre[l - 1];
      for (std::size_t i = 0; i < dh.size(); ++i)
        if (!(z.values()[i] > 0.0)) dh.values()[i] = 0.0;
      delta = std::move(dh);
    }
  }
  return g;
}

inline GradBundle backward(const MLPModel& model, const Matrix& x, const Matrix& dlogits) {
  return backward(model, forward_tape(model, x), dlogits);
}

/// Cross-entropy loss, gradients for parameters and inputs in one pass.
struct LossGrads {
  double loss = 0.0;
  GradBundle grads;
};

inline LossGrads ce_loss_grads(const MLPModel& model, const Matrix& x, std::span<const int> y,
                               GradTargets targets = GradTargets::all) {
  ForwardTape tape = forward_tape(model, x);
  LossAndGrad lg = softmax_ce(tape.logits(), y);
  return {lg.loss, backward(model, tape, lg.dlogits, targets)};
}

/// θ ← θ − lr·∇θ
inline void sgd_step(MLPModel& model, const GradBundle& grads, const SGDConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ArgumentError("sgd_step: learning rate must be positive");
  if (grads.weight_grads.size() != model.num_layers() ||
      grads.bias_grads.size() != model.num_layers())
    throw DimensionError("sgd_step: gradient layer count mismatch");
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    require_same_shape(model.weights[l], grads.weight_grads[l], "sgd_step");
    if (model.biases[l].size() != grads.bias_grads[l].size())
      throw DimensionError("sgd_step: bias gradient size mismatch");
    auto w = model.weights[l].values();
    auto gw = grads.weight_grads[l].values();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.learning_rate * gw[i];
    for (std::size_t i = 0; i < model.biases[l].size(); ++i)
      model.biases[l][i] -= cfg.learning_rate * grads.bias_grads[l][i];
    if (!model.weights[l].all_finite())
      throw NumericError("sgd_step: non-finite weights after update (diverged)");
  }
}

/// Row-wise argmax; ties resolve to the lowest class id.
inline std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.size(); ++j)
      if (r[j] > r[best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

inline std::vector<int> predict(const MLPModel& model, const Matrix& x) {
  return argmax_rows(forward(model, x));
}

}  // namespace eatcl
