#pragma once

#include "spkdnn/balance.hpp"
#include "spkdnn/core.hpp"
#include "spkdnn/udbn.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace spkdnn {

template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weights;  // n_in x n_out
  Vector<Scalar> bias;

  bool operator==(const DenseLayer& o) const { return weights == o.weights && bias == o.bias; }
};

/// Two-class speaker model: sigmoid hidden layers and a 2-unit softmax output.
/// Output unit 0 is the target class, unit 1 the impostor class.
template <typename Scalar>
struct DnnModel {
  std::vector<DenseLayer<Scalar>> hidden;
  DenseLayer<Scalar> output;

  Index input_dim() const { return hidden.empty() ? output.weights.rows() : hidden.front().weights.rows(); }

  /// [input, hidden_1, ..., hidden_L, 2]
  std::vector<Index> layer_sizes() const {
    std::vector<Index> s{input_dim()};
    for (const auto& l : hidden) s.push_back(l.weights.cols());
    s.push_back(output.weights.cols());
    return s;
  }

  std::size_t num_layers() const { return hidden.size() + 1; }
  DenseLayer<Scalar>& layer(std::size_t i) { return i < hidden.size() ? hidden[i] : output; }
  const DenseLayer<Scalar>& layer(std::size_t i) const { return i < hidden.size() ? hidden[i] : output; }

  bool operator==(const DnnModel& o) const { return hidden == o.hidden && output == o.output; }

  /// Same shapes, all zeros. Used for gradients and momentum buffers.
  DnnModel zeros_like() const {
    DnnModel z = *this;
    for (std::size_t i = 0; i < z.num_layers(); ++i) {
      z.layer(i).weights.setZero();
      z.layer(i).bias.setZero();
    }
    return z;
  }

  bool all_finite() const {
    for (std::size_t i = 0; i < num_layers(); ++i)
      if (!layer(i).weights.allFinite() || !layer(i).bias.allFinite()) return false;
    return true;
  }
};

struct FineTuneConfig {
  double learning_rate = 0.001;
  int epochs = 30;
  double momentum = 0.9;
  double weight_decay = 0.0012;
  std::uint64_t seed = 0;  // seeds the output-layer initialization
};

inline void validate(const FineTuneConfig& cfg) {
  if (!(cfg.learning_rate >= 0)) throw InvalidArgument("fine-tuning learning rate must be non-negative");
  if (cfg.epochs < 0) throw InvalidArgument("fine-tuning epochs must be >= 0");
  if (!(cfg.momentum >= 0 && cfg.momentum < 1)) throw InvalidArgument("fine-tuning momentum must be in [0, 1)");
  if (!(cfg.weight_decay >= 0)) throw InvalidArgument("fine-tuning weight decay must be non-negative");
}

namespace detail {

template <typename Scalar>
DenseLayer<Scalar> uniform_layer(Index n_in, Index n_out, Rng& rng) {
  DenseLayer<Scalar> l{Matrix<Scalar>(n_in, n_out), Vector<Scalar>::Zero(n_out)};
  fill_uniform<Scalar>(l.weights, Scalar(0), Scalar(0.01), rng);
  return l;
}

/// Row-wise log-softmax.
template <typename Scalar>
Matrix<Scalar> log_softmax(const Matrix<Scalar>& z) {
  const Vector<Scalar> m = z.rowwise().maxCoeff();
  const Matrix<Scalar> shifted = z.colwise() - m;
  const Vector<Scalar> lse = shifted.array().exp().rowwise().sum().log().matrix();
  return shifted.colwise() - lse;
}

template <typename Scalar>
Matrix<Scalar> one_hot(std::span<const Label> labels) {
  Matrix<Scalar> y = Matrix<Scalar>::Zero(static_cast<Index>(labels.size()), 2);
  for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Index>(i), labels[i] == Label::target ? 0 : 1) = 1;
  return y;
}

}  // namespace detail

/// Hidden weights i.i.d. U[0, 0.01), zero biases. layer_sizes = [input, hidden..., 2].
template <typename Scalar>
DnnModel<Scalar> init_random(const std::vector<Index>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 3) throw InvalidArgument("init_random: need input, at least one hidden layer and output");
  if (layer_sizes.back() != 2) throw InvalidArgument("init_random: output layer must have 2 units");
  for (auto s : layer_sizes)
    if (s < 1) throw InvalidArgument("init_random: layer sizes must be >= 1");
  Rng rng(seed);
  DnnModel<Scalar> m;
  for (std::size_t i = 0; i + 2 < layer_sizes.size(); ++i)
    m.hidden.push_back(detail::uniform_layer<Scalar>(layer_sizes[i], layer_sizes[i + 1], rng));
  m.output = detail::uniform_layer<Scalar>(layer_sizes[layer_sizes.size() - 2], 2, rng);
  return m;
}

/// Hidden layers copy the DBN weights and hidden biases; the output layer is
/// drawn like init_random.
template <typename Scalar>
DnnModel<Scalar> init_from_dbn(const DbnParams<Scalar>& adapted, std::uint64_t seed) {
  if (adapted.layers.empty()) throw InvalidArgument("init_from_dbn: empty DBN");
  check_chain(adapted);
  DnnModel<Scalar> m;
  for (const auto& l : adapted.layers) m.hidden.push_back({l.weights, l.hidden_bias});
  Rng rng(seed);
  m.output = detail::uniform_layer<Scalar>(adapted.layers.back().n_hidden(), 2, rng);
  return m;
}

/// Activations for a batch of rows. activations[0] is the input, activations[l]
/// the l-th hidden layer.
template <typename Scalar>
struct ForwardPass {
  std::vector<Matrix<Scalar>> activations;
  Matrix<Scalar> logits;       // n x 2 output pre-activations
  Matrix<Scalar> log_outputs;  // n x 2 log-softmax
  Matrix<Scalar> outputs() const { return log_outputs.array().exp().matrix(); }
};

template <typename Scalar, typename Derived>
ForwardPass<Scalar> forward_batch(const DnnModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  if (x.cols() != model.input_dim())
    throw DimensionError("forward: expected input dimension " + std::to_string(model.input_dim()) + ", got " +
                         std::to_string(x.cols()));
  ForwardPass<Scalar> fp;
  fp.activations.push_back(x.template cast<Scalar>());
  for (const auto& l : model.hidden)
    fp.activations.push_back(sigmoid((fp.activations.back() * l.weights).rowwise() + l.bias.transpose()));
  fp.logits = (fp.activations.back() * model.output.weights).rowwise() + model.output.bias.transpose();
  fp.log_outputs = detail::log_softmax(fp.logits);
  return fp;
}

template <typename Scalar>
struct ForwardResult {
  std::vector<Vector<Scalar>> activations;  // hidden layers only
  Vector<Scalar> outputs;                   // (o_1, o_2)
};

template <typename Scalar, typename Derived>
ForwardResult<Scalar> forward(const DnnModel<Scalar>& model, const Eigen::MatrixBase<Derived>& v) {
  static_assert(Derived::ColsAtCompileTime == 1, "forward: expects a column vector");
  const auto fp = forward_batch(model, v.transpose());
  ForwardResult<Scalar> r;
  for (std::size_t l = 1; l < fp.activations.size(); ++l) r.activations.push_back(fp.activations[l].transpose());
  r.outputs = fp.outputs().transpose();
  return r;
}

/// log(o_1) - log(o_2) for given softmax outputs.
template <typename Scalar>
Scalar llr_from_outputs(Scalar o1, Scalar o2) {
  return std::log(o1) - std::log(o2);
}

/// LLR score of one test vector, taken from the log-softmax so that saturated
/// outputs still give a finite value.
template <typename Scalar, typename Derived>
Scalar score_llr(const DnnModel<Scalar>& model, const Eigen::MatrixBase<Derived>& test) {
  static_assert(Derived::ColsAtCompileTime == 1, "score_llr: expects a column vector");
  const auto fp = forward_batch(model, test.transpose());
  return fp.log_outputs(0, 0) - fp.log_outputs(0, 1);
}

/// Mean cross-entropy of the batch.
template <typename Scalar, typename Derived>
Scalar cross_entropy(const DnnModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x, std::span<const Label> labels) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw DimensionError("cross_entropy: label count mismatch");
  const auto fp = forward_batch(model, x);
  const Matrix<Scalar> y = detail::one_hot<Scalar>(labels);
  return -(y.array() * fp.log_outputs.array()).sum() / static_cast<Scalar>(x.rows());
}

/// Gradient of the mean cross-entropy with respect to every weight and bias.
template <typename Scalar, typename Derived>
DnnModel<Scalar> gradients(const DnnModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x,
                           std::span<const Label> labels) {
  if (x.rows() == 0) throw InvalidArgument("gradients: empty minibatch");
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw DimensionError("gradients: label count mismatch");
  const auto fp = forward_batch(model, x);
  DnnModel<Scalar> g = model.zeros_like();
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(x.rows());

  Matrix<Scalar> delta = (fp.outputs() - detail::one_hot<Scalar>(labels)) * inv_n;
  for (std::size_t l = model.num_layers(); l-- > 0;) {
    const Matrix<Scalar>& input = fp.activations[l];
    g.layer(l).weights = input.transpose() * delta;
    g.layer(l).bias = delta.colwise().sum().transpose();
    if (l == 0) break;
    delta = ((delta * model.layer(l).weights.transpose()).array() * input.array() * (Scalar(1) - input.array())).matrix();
  }
  return g;
}

/// One momentum SGD step on a labelled minibatch. Weight decay applies to
/// weights only.
template <typename Scalar, typename Derived>
void backprop_minibatch(DnnModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x, std::span<const Label> labels,
                        const FineTuneConfig& cfg, DnnModel<Scalar>& velocity) {
  const DnnModel<Scalar> g = gradients(model, x, labels);
  if (!g.all_finite()) throw NumericalError("backprop: non-finite gradient");
  const auto lr = static_cast<Scalar>(cfg.learning_rate);
  const auto mom = static_cast<Scalar>(cfg.momentum);
  const auto decay = static_cast<Scalar>(cfg.weight_decay);
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    auto& p = model.layer(l);
    auto& v = velocity.layer(l);
    v.weights = mom * v.weights - lr * (g.layer(l).weights + decay * p.weights);
    v.bias = mom * v.bias - lr * g.layer(l).bias;
    p.weights += v.weights;
    p.bias += v.bias;
  }
  if (!model.all_finite()) throw NumericalError("backprop: non-finite parameters after update");
}

/// Mean cross-entropy over every example of the plan.
template <typename Scalar>
Scalar plan_cross_entropy(const DnnModel<Scalar>& model, const MinibatchPlan& plan) {
  Scalar total = 0;
  Index count = 0;
  for (const auto& mb : plan.minibatches) {
    const auto labels = mb.labels();
    total += cross_entropy(model, mb.stacked().template cast<Scalar>(), labels) * static_cast<Scalar>(mb.size());
    count += mb.size();
  }
  return total / static_cast<Scalar>(count);
}

/// cfg.epochs passes over the plan's minibatches in their fixed order.
template <typename Scalar>
DnnModel<Scalar> train_speaker_dnn(DnnModel<Scalar> model, const MinibatchPlan& plan, const FineTuneConfig& cfg,
                                   std::vector<Scalar>* loss_trace = nullptr) {
  validate(cfg);
  if (plan.empty()) throw InvalidArgument("train_speaker_dnn: empty minibatch plan");
  std::vector<Matrix<Scalar>> batches;
  std::vector<std::vector<Label>> labels;
  for (const auto& mb : plan.minibatches) {
    if (mb.targets.cols() != model.input_dim()) throw DimensionError("train_speaker_dnn: plan dimension mismatch");
    batches.push_back(mb.stacked().template cast<Scalar>());
    labels.push_back(mb.labels());
  }
  DnnModel<Scalar> velocity = model.zeros_like();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t b = 0; b < batches.size(); ++b) {
      try {
        backprop_minibatch(model, batches[b], labels[b], cfg, velocity);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
      }
    }
    if (loss_trace) loss_trace->push_back(plan_cross_entropy(model, plan));
  }
  return model;
}

}  // namespace spkdnn
