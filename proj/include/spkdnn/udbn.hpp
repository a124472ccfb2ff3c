#pragma once

#include "spkdnn/rbm.hpp"

#include <cstdint>
#include <vector>

namespace spkdnn {

/// Stack of RBMs: layer 0 has gaussian visibles, the rest bernoulli.
template <typename Scalar>
struct DbnParams {
  std::vector<RbmParams<Scalar>> layers;
  // Set once normalize_udbn has been applied; bias scaling must not repeat.
  bool normalized = false;

  std::size_t depth() const { return layers.size(); }

  /// [n_visible, n_hidden_1, ..., n_hidden_depth]
  std::vector<Index> layer_sizes() const {
    std::vector<Index> sizes;
    if (layers.empty()) return sizes;
    sizes.push_back(layers.front().n_visible());
    for (const auto& l : layers) sizes.push_back(l.n_hidden());
    return sizes;
  }

  bool operator==(const DbnParams& o) const { return normalized == o.normalized && layers == o.layers; }
};

template <typename Scalar>
void check_chain(const DbnParams<Scalar>& dbn) {
  for (std::size_t k = 0; k < dbn.layers.size(); ++k) {
    const auto& l = dbn.layers[k];
    const VisibleKind expected = k == 0 ? VisibleKind::gaussian : VisibleKind::bernoulli;
    if (l.visible_kind != expected) throw InvalidArgument("DBN layer " + std::to_string(k + 1) + " has wrong visible kind");
    if (k > 0 && dbn.layers[k - 1].n_hidden() != l.n_visible())
      throw DimensionError("DBN layers " + std::to_string(k) + " and " + std::to_string(k + 1) + " do not chain");
  }
}

struct AdaptConfig {
  int layers_to_adapt = 1;
  std::vector<double> learning_rates{0.001};
  std::vector<int> epochs{10};
  double momentum = 0.9;
  double weight_decay = 0.0002;
  int minibatch_size = 8;  // flat-row overload only
  std::uint64_t seed = 0;
};

/// Hidden probabilities after the first `num_layers` layers of the stack.
template <typename Scalar, typename Derived>
Matrix<Scalar> propagate(const DbnParams<Scalar>& dbn, const Eigen::MatrixBase<Derived>& data, std::size_t num_layers) {
  Matrix<Scalar> x = data.template cast<Scalar>();
  for (std::size_t k = 0; k < num_layers && k < dbn.layers.size(); ++k) x = hidden_probs(dbn.layers[k], x);
  return x;
}

/// Greedy layer-wise training: layer 1 as a GRBM on the raw rows, each later
/// layer as a bernoulli RBM on the hidden probabilities of the frozen stack.
template <typename Scalar, typename Derived>
DbnParams<Scalar> train_udbn(const Eigen::MatrixBase<Derived>& background, const std::vector<Index>& hidden_sizes,
                             const std::vector<RbmTrainConfig>& cfgs,
                             std::vector<std::vector<Scalar>>* traces = nullptr) {
  if (background.rows() == 0) throw InvalidArgument("train_udbn: empty background set");
  if (hidden_sizes.empty()) throw InvalidArgument("train_udbn: no hidden layers requested");
  if (cfgs.size() != hidden_sizes.size())
    throw InvalidArgument("train_udbn: need one RBM config per hidden layer");
  DbnParams<Scalar> dbn;
  Matrix<Scalar> input = background.template cast<Scalar>();
  for (std::size_t k = 0; k < hidden_sizes.size(); ++k) {
    const VisibleKind kind = k == 0 ? VisibleKind::gaussian : VisibleKind::bernoulli;
    auto trained = train_rbm<Scalar>(input, cfgs[k], kind, hidden_sizes[k]);
    if (traces) traces->push_back(trained.reconstruction_error);
    dbn.layers.push_back(std::move(trained.params));
    if (k + 1 < hidden_sizes.size()) input = hidden_probs(dbn.layers.back(), input);
  }
  return dbn;
}

/// Scales each layer so its largest |w| is exactly 0.01 and multiplies every
/// bias by 0.01. All-zero weight matrices are left as is. Applying it to an
/// already normalized stack returns the stack unchanged.
template <typename Scalar>
DbnParams<Scalar> normalize_udbn(DbnParams<Scalar> dbn) {
  if (dbn.normalized) return dbn;
  const Scalar target(0.01);
  for (auto& layer : dbn.layers) {
    const Scalar max_abs = layer.weights.size() ? layer.weights.cwiseAbs().maxCoeff() : Scalar(0);
    // Dividing first makes the extreme entry exactly +-1 before scaling.
    if (max_abs > 0) layer.weights = (layer.weights / max_abs) * target;
    layer.visible_bias *= target;
    layer.hidden_bias *= target;
  }
  dbn.normalized = true;
  return dbn;
}

/// Speaker adaptation: a few CD-1 epochs on layers 1..layers_to_adapt, starting
/// from the normalized UDBN, with inputs propagated through the (already
/// adapted) layers below. Higher layers are copied unchanged.
template <typename Scalar>
DbnParams<Scalar> adapt_udbn(const DbnParams<Scalar>& udbn_norm, const std::vector<Matrix<Scalar>>& minibatches,
                             const AdaptConfig& cfg) {
  if (!udbn_norm.normalized) throw InvalidArgument("adapt_udbn: UDBN must be normalized first");
  if (cfg.layers_to_adapt < 0 || static_cast<std::size_t>(cfg.layers_to_adapt) > udbn_norm.depth())
    throw InvalidArgument("adapt_udbn: layers_to_adapt=" + std::to_string(cfg.layers_to_adapt) +
                          " exceeds DBN depth " + std::to_string(udbn_norm.depth()));
  const auto n = static_cast<std::size_t>(cfg.layers_to_adapt);
  if (cfg.learning_rates.size() < n || cfg.epochs.size() < n)
    throw InvalidArgument("adapt_udbn: need a learning rate and epoch count per adapted layer");
  DbnParams<Scalar> out = udbn_norm;
  if (n == 0) return out;
  if (minibatches.empty()) throw InvalidArgument("adapt_udbn: no balanced data");
  for (const auto& mb : minibatches)
    if (mb.cols() != udbn_norm.layers.front().n_visible())
      throw DimensionError("adapt_udbn: balanced data dimension does not match the first layer");

  std::vector<Matrix<Scalar>> inputs = minibatches;
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0)
      for (auto& x : inputs) x = hidden_probs(out.layers[k - 1], x);
    RbmTrainConfig rc;
    rc.learning_rate = cfg.learning_rates[k];
    rc.epochs = cfg.epochs[k];
    rc.momentum = cfg.momentum;
    rc.weight_decay = cfg.weight_decay;
    Rng rng(mix_seed(cfg.seed, k));
    run_cd1_epochs(out.layers[k], inputs, rc, rng);
  }
  return out;
}

/// Adaptation on a flat set of balanced rows, split into fixed-order chunks of
/// cfg.minibatch_size.
template <typename Scalar, typename Derived>
DbnParams<Scalar> adapt_udbn(const DbnParams<Scalar>& udbn_norm, const Eigen::MatrixBase<Derived>& balanced_rows,
                             const AdaptConfig& cfg) {
  if (cfg.minibatch_size < 1) throw InvalidArgument("adapt_udbn: minibatch size must be >= 1");
  const Matrix<Scalar> rows = balanced_rows.template cast<Scalar>();
  return adapt_udbn(udbn_norm, split_minibatches(rows, cfg.minibatch_size), cfg);
}

}  // namespace spkdnn
