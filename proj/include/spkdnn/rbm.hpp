#pragma once

#include "spkdnn/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace spkdnn {

enum class VisibleKind { gaussian, bernoulli };

inline const char* to_string(VisibleKind k) { return k == VisibleKind::gaussian ? "gaussian" : "bernoulli"; }

/// Restricted Boltzmann machine with Bernoulli hidden units. Gaussian visibles
/// have fixed unit variance.
template <typename Scalar>
struct RbmParams {
  VisibleKind visible_kind = VisibleKind::bernoulli;
  Matrix<Scalar> weights;  // n_visible x n_hidden
  Vector<Scalar> visible_bias;
  Vector<Scalar> hidden_bias;

  Index n_visible() const { return weights.rows(); }
  Index n_hidden() const { return weights.cols(); }

  bool operator==(const RbmParams& o) const {
    return visible_kind == o.visible_kind && weights == o.weights && visible_bias == o.visible_bias &&
           hidden_bias == o.hidden_bias;
  }
};

/// Momentum buffer with the same shapes as RbmParams.
template <typename Scalar>
struct RbmVelocity {
  Matrix<Scalar> weights;
  Vector<Scalar> visible_bias;
  Vector<Scalar> hidden_bias;

  static RbmVelocity zeros_like(const RbmParams<Scalar>& p) {
    return {Matrix<Scalar>::Zero(p.n_visible(), p.n_hidden()), Vector<Scalar>::Zero(p.n_visible()),
            Vector<Scalar>::Zero(p.n_hidden())};
  }
};

struct RbmTrainConfig {
  double learning_rate = 0.06;
  int epochs = 120;
  double momentum = 0.9;
  double weight_decay = 0.0002;
  int minibatch_size = 100;
  std::uint64_t seed = 0;

  static RbmTrainConfig gaussian_defaults() { return {0.014, 200, 0.9, 0.0002, 100, 0}; }
  static RbmTrainConfig bernoulli_defaults() { return {0.06, 120, 0.9, 0.0002, 100, 0}; }
};

template <typename Scalar>
struct RbmTrainResult {
  RbmParams<Scalar> params;
  std::vector<Scalar> reconstruction_error;  // mean squared error per sample, one entry per epoch
};

inline void validate(const RbmTrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0)) throw InvalidArgument("RBM learning rate must be non-negative");
  if (cfg.epochs < 1) throw InvalidArgument("RBM epochs must be >= 1");
  if (!(cfg.momentum >= 0 && cfg.momentum < 1)) throw InvalidArgument("RBM momentum must be in [0, 1)");
  if (!(cfg.weight_decay >= 0)) throw InvalidArgument("RBM weight decay must be non-negative");
  if (cfg.minibatch_size < 1) throw InvalidArgument("RBM minibatch size must be >= 1");
}

/// Weights i.i.d. U[0, 0.01), zero biases.
template <typename Scalar>
RbmParams<Scalar> init_rbm(Index n_visible, Index n_hidden, VisibleKind kind, std::uint64_t seed) {
  if (n_visible < 1 || n_hidden < 1) throw InvalidArgument("RBM dimensions must be >= 1");
  RbmParams<Scalar> p;
  p.visible_kind = kind;
  p.weights.resize(n_visible, n_hidden);
  Rng rng(seed);
  fill_uniform<Scalar>(p.weights, Scalar(0), Scalar(0.01), rng);
  p.visible_bias = Vector<Scalar>::Zero(n_visible);
  p.hidden_bias = Vector<Scalar>::Zero(n_hidden);
  return p;
}

/// Hidden activation probabilities for a batch of visible rows.
namespace detail {

template <typename Scalar, typename Derived>
Matrix<Scalar> hidden_rows(const RbmParams<Scalar>& rbm, const Eigen::MatrixBase<Derived>& visible) {
  if (visible.cols() != rbm.n_visible())
    throw DimensionError("hidden_probs: expected " + std::to_string(rbm.n_visible()) + " visible units, got " +
                         std::to_string(visible.cols()));
  return sigmoid((visible * rbm.weights).rowwise() + rbm.hidden_bias.transpose());
}

template <typename Scalar, typename Derived>
Matrix<Scalar> visible_rows(const RbmParams<Scalar>& rbm, const Eigen::MatrixBase<Derived>& hidden) {
  if (hidden.cols() != rbm.n_hidden())
    throw DimensionError("reconstruct_visible: expected " + std::to_string(rbm.n_hidden()) + " hidden units, got " +
                         std::to_string(hidden.cols()));
  Matrix<Scalar> pre = (hidden * rbm.weights.transpose()).rowwise() + rbm.visible_bias.transpose();
  if (rbm.visible_kind == VisibleKind::bernoulli) return sigmoid(pre);
  return pre;
}

}  // namespace detail

/// Hidden probabilities. A matrix holds one visible vector per row and gives a
/// matrix back; a column vector gives a column vector.
template <typename Scalar, typename Derived>
auto hidden_probs(const RbmParams<Scalar>& rbm, const Eigen::MatrixBase<Derived>& visible) {
  if constexpr (Derived::ColsAtCompileTime == 1)
    return Vector<Scalar>(detail::hidden_rows(rbm, visible.transpose()).transpose());
  else
    return detail::hidden_rows(rbm, visible);
}

/// Visible reconstruction from hidden units: mean-field for gaussian units,
/// probabilities for bernoulli units. Same row/vector convention as hidden_probs.
template <typename Scalar, typename Derived>
auto reconstruct_visible(const RbmParams<Scalar>& rbm, const Eigen::MatrixBase<Derived>& hidden) {
  if constexpr (Derived::ColsAtCompileTime == 1)
    return Vector<Scalar>(detail::visible_rows(rbm, hidden.transpose()).transpose());
  else
    return detail::visible_rows(rbm, hidden);
}

/// Independent Bernoulli draws. Entry (i, j) is 1 iff u < probs(i, j), where u
/// is the next U[0,1) draw from `rng`, visiting entries row by row.
template <typename Derived>
Matrix<typename Derived::Scalar> sample_bernoulli(const Eigen::MatrixBase<Derived>& probs, Rng& rng) {
  using Scalar = typename Derived::Scalar;
  std::uniform_real_distribution<Scalar> unif(Scalar(0), Scalar(1));
  Matrix<Scalar> out(probs.rows(), probs.cols());
  for (Index i = 0; i < probs.rows(); ++i)
    for (Index j = 0; j < probs.cols(); ++j) out(i, j) = unif(rng) < probs(i, j) ? Scalar(1) : Scalar(0);
  return out;
}

/// One CD-1 update on a minibatch (rows are samples). Positive phase and
/// reconstruction statistics both use probabilities; only the hidden states that
/// drive the reconstruction are sampled. Returns the summed squared
/// reconstruction error of the minibatch.
template <typename Scalar, typename Derived>
Scalar cd1_step(RbmParams<Scalar>& rbm, const Eigen::MatrixBase<Derived>& batch, const RbmTrainConfig& cfg,
                RbmVelocity<Scalar>& velocity, Rng& rng) {
  if (batch.rows() == 0) throw InvalidArgument("cd1_step: empty minibatch");
  const Matrix<Scalar> data = batch.template cast<Scalar>();
  const Matrix<Scalar> h_data = hidden_probs(rbm, data);
  const Matrix<Scalar> h_sample = sample_bernoulli(h_data, rng);
  const Matrix<Scalar> v_recon = reconstruct_visible(rbm, h_sample);
  const Matrix<Scalar> h_recon = hidden_probs(rbm, v_recon);

  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(data.rows());
  const auto lr = static_cast<Scalar>(cfg.learning_rate);
  const auto mom = static_cast<Scalar>(cfg.momentum);
  const auto decay = static_cast<Scalar>(cfg.weight_decay);

  const Matrix<Scalar> grad_w = (data.transpose() * h_data - v_recon.transpose() * h_recon) * inv_n;
  const Vector<Scalar> grad_vb = (data - v_recon).colwise().sum().transpose() * inv_n;
  const Vector<Scalar> grad_hb = (h_data - h_recon).colwise().sum().transpose() * inv_n;

  velocity.weights = mom * velocity.weights + lr * (grad_w - decay * rbm.weights);
  velocity.visible_bias = mom * velocity.visible_bias + lr * grad_vb;
  velocity.hidden_bias = mom * velocity.hidden_bias + lr * grad_hb;
  if (!velocity.weights.allFinite() || !velocity.visible_bias.allFinite() || !velocity.hidden_bias.allFinite())
    throw NumericalError("CD-1 produced a non-finite update");

  rbm.weights += velocity.weights;
  rbm.visible_bias += velocity.visible_bias;
  rbm.hidden_bias += velocity.hidden_bias;
  return (data - v_recon).squaredNorm();
}

/// Runs `cfg.epochs` epochs of CD-1 over the given minibatches in order,
/// starting from `rbm`. Appends the per-sample mean reconstruction error of
/// each epoch to `trace` when non-null.
template <typename Scalar>
void run_cd1_epochs(RbmParams<Scalar>& rbm, const std::vector<Matrix<Scalar>>& minibatches, const RbmTrainConfig& cfg,
                    Rng& rng, std::vector<Scalar>* trace = nullptr) {
  validate(cfg);
  if (minibatches.empty()) throw InvalidArgument("CD-1 training needs at least one minibatch");
  Index total = 0;
  for (const auto& mb : minibatches) total += mb.rows();
  auto velocity = RbmVelocity<Scalar>::zeros_like(rbm);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Scalar err = 0;
    for (const auto& mb : minibatches) {
      try {
        err += cd1_step(rbm, mb, cfg, velocity, rng);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
      }
    }
    if (trace) trace->push_back(err / static_cast<Scalar>(total));
  }
}

/// Consecutive fixed-order chunks of `minibatch_size` rows; the last may be smaller.
template <typename Derived>
std::vector<Matrix<typename Derived::Scalar>> split_minibatches(const Eigen::MatrixBase<Derived>& data,
                                                                Index minibatch_size) {
  std::vector<Matrix<typename Derived::Scalar>> out;
  for (Index start = 0; start < data.rows(); start += minibatch_size)
    out.emplace_back(data.middleRows(start, std::min(minibatch_size, data.rows() - start)));
  return out;
}

/// Trains a fresh RBM on the rows of `data`. Initialization uses cfg.seed;
/// hidden sampling uses an independent stream derived from it.
template <typename Scalar, typename Derived>
RbmTrainResult<Scalar> train_rbm(const Eigen::MatrixBase<Derived>& data, const RbmTrainConfig& cfg, VisibleKind kind,
                                 Index n_hidden) {
  validate(cfg);
  if (data.rows() == 0) throw InvalidArgument("train_rbm: empty data");
  RbmTrainResult<Scalar> result{init_rbm<Scalar>(data.cols(), n_hidden, kind, cfg.seed), {}};
  Rng rng(mix_seed(cfg.seed, 1));
  const Matrix<Scalar> cast = data.template cast<Scalar>();
  run_cd1_epochs(result.params, split_minibatches(cast, cfg.minibatch_size), cfg, rng, &result.reconstruction_error);
  return result;
}

}  // namespace spkdnn
