#pragma once

#include "spkdnn/core.hpp"

#include <cstdint>
#include <vector>

namespace spkdnn {

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_score(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw DimensionError("cosine_score: dimension mismatch");
  const auto na = a.norm();
  const auto nb = b.norm();
  if (!(na > 0) || !(nb > 0)) throw DegenerateInputError("cosine_score: zero vector");
  return a.dot(b) / (na * nb);
}

struct ImpostorSelectionConfig {
  int N = 10;         // nearest impostors counted per target
  int kappa = 2000;   // impostors kept overall
};

struct ImpostorSelection {
  std::vector<Index> indices;     // kappa impostor rows, most frequent first
  std::vector<int> frequencies;   // one count per impostor row
};

/// Frequency-based impostor selection. Every target votes for its N
/// highest-cosine impostors; the kappa impostors with the most votes are kept.
/// Ties are broken by ascending impostor index, both when picking the top N and
/// when ranking by frequency. Rows of `targets` and `impostors` are vectors.
ImpostorSelection select_impostors(const Eigen::Ref<const Eigen::MatrixXd>& targets,
                                   const Eigen::Ref<const Eigen::MatrixXd>& impostors,
                                   const ImpostorSelectionConfig& cfg);

struct KMeansResult {
  Eigen::MatrixXd centroids;       // k x d, arithmetic mean of each cluster's raw rows
  std::vector<Index> assignment;   // cluster per input row
  std::vector<double> objective;   // sum of (1 - cos) after each centroid update
  int iterations = 0;
};

/// k-means under cosine distance. Seeding is greedy farthest-point from a
/// start row chosen by `seed`. Iterates until the assignment stops changing or
/// max_iter is reached; an empty cluster takes the row farthest from its own
/// centroid.
KMeansResult kmeans_cosine(const Eigen::Ref<const Eigen::MatrixXd>& vectors, Index k, std::uint64_t seed,
                           int max_iter = 100);

Eigen::MatrixXd replicate_targets(const Eigen::Ref<const Eigen::VectorXd>& target, Index count);

/// Averages each consecutive group of n rows; the last group may be smaller.
Eigen::MatrixXd combine_targets(const Eigen::Ref<const Eigen::MatrixXd>& targets, Index n);

enum class Label { target, impostor };

enum class EnrollMode { single, multi };

struct Minibatch {
  Eigen::MatrixXd targets;
  Eigen::MatrixXd impostors;

  /// Targets first, then impostors.
  Eigen::MatrixXd stacked() const;
  std::vector<Label> labels() const;
  Index size() const { return targets.rows() + impostors.rows(); }
};

struct MinibatchPlan {
  std::vector<Minibatch> minibatches;

  std::vector<Eigen::MatrixXd> stacked() const;
  bool empty() const { return minibatches.empty(); }
};

/// Splits the centroids into num_minibatches consecutive groups and pairs each
/// group with the same target rows. Single mode replicates the one target to
/// the group size; multi mode repeats the whole target set until it matches
/// the group size, which must be a multiple of the target count.
MinibatchPlan build_minibatch_plan(const Eigen::Ref<const Eigen::MatrixXd>& targets,
                                   const Eigen::Ref<const Eigen::MatrixXd>& centroids, Index num_minibatches,
                                   EnrollMode mode);

}  // namespace spkdnn
