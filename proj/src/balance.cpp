#include "spkdnn/balance.hpp"

#include <algorithm>
#include <numeric>

namespace spkdnn {

namespace {

Eigen::MatrixXd unit_rows(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* who) {
  Eigen::MatrixXd out = m;
  for (Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (!(n > 0)) throw DegenerateInputError(std::string(who) + ": zero vector at row " + std::to_string(i));
    out.row(i) /= n;
  }
  return out;
}

}  // namespace

ImpostorSelection select_impostors(const Eigen::Ref<const Eigen::MatrixXd>& targets,
                                   const Eigen::Ref<const Eigen::MatrixXd>& impostors,
                                   const ImpostorSelectionConfig& cfg) {
  const Index T = targets.rows();
  const Index M = impostors.rows();
  if (T < 1) throw InvalidArgument("select_impostors: no targets");
  if (targets.cols() != impostors.cols()) throw DimensionError("select_impostors: dimension mismatch");
  if (cfg.N < 1 || cfg.N > M) throw InvalidArgument("select_impostors: N must be in [1, M]");
  if (cfg.kappa < 1 || cfg.kappa > M) throw InvalidArgument("select_impostors: kappa must be in [1, M]");

  const Eigen::MatrixXd scores = unit_rows(targets, "select_impostors") *
                                 unit_rows(impostors, "select_impostors").transpose();

  ImpostorSelection out;
  out.frequencies.assign(static_cast<std::size_t>(M), 0);
  std::vector<Index> order(static_cast<std::size_t>(M));
  for (Index t = 0; t < T; ++t) {
    std::iota(order.begin(), order.end(), Index(0));
    auto row = scores.row(t);
    std::partial_sort(order.begin(), order.begin() + cfg.N, order.end(), [&](Index a, Index b) {
      return row(a) > row(b) || (row(a) == row(b) && a < b);
    });
    for (int j = 0; j < cfg.N; ++j) ++out.frequencies[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])];
  }

  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return out.frequencies[static_cast<std::size_t>(a)] > out.frequencies[static_cast<std::size_t>(b)];
  });
  out.indices.assign(order.begin(), order.begin() + cfg.kappa);
  return out;
}

KMeansResult kmeans_cosine(const Eigen::Ref<const Eigen::MatrixXd>& vectors, Index k, std::uint64_t seed,
                           int max_iter) {
  const Index n = vectors.rows();
  if (n == 0) throw InvalidArgument("kmeans_cosine: empty input");
  if (k < 1 || k > n) throw InvalidArgument("kmeans_cosine: k must be in [1, n]");
  if (max_iter < 1) throw InvalidArgument("kmeans_cosine: max_iter must be >= 1");
  const Eigen::MatrixXd unit = unit_rows(vectors, "kmeans_cosine");

  // Farthest-point seeding.
  Rng rng(seed);
  std::uniform_int_distribution<Index> pick(0, n - 1);
  std::vector<Index> seeds{pick(rng)};
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  chosen[static_cast<std::size_t>(seeds[0])] = true;
  Eigen::VectorXd nearest = (1.0 - (unit * unit.row(seeds[0]).transpose()).array()).matrix();
  while (static_cast<Index>(seeds.size()) < k) {
    Index best = -1;
    for (Index i = 0; i < n; ++i)
      if (!chosen[static_cast<std::size_t>(i)] && (best < 0 || nearest(i) > nearest(best))) best = i;
    seeds.push_back(best);
    chosen[static_cast<std::size_t>(best)] = true;
    nearest = nearest.cwiseMin((1.0 - (unit * unit.row(best).transpose()).array()).matrix());
  }

  // Directions only matter for cosine distance; the mean of unit rows is the
  // direction that minimizes a cluster's summed distance.
  Eigen::MatrixXd dirs(k, vectors.cols());
  for (Index c = 0; c < k; ++c) dirs.row(c) = unit.row(seeds[static_cast<std::size_t>(c)]);

  auto unit_dirs = [&]() {
    Eigen::MatrixXd u = dirs;
    for (Index c = 0; c < k; ++c) {
      const double nrm = u.row(c).norm();
      if (nrm > 0) u.row(c) /= nrm;
    }
    return u;
  };

  KMeansResult res;
  res.assignment.assign(static_cast<std::size_t>(n), -1);
  std::vector<Index> prev;
  Eigen::VectorXd dist(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::MatrixXd cos = unit * unit_dirs().transpose();
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      for (Index c = 1; c < k; ++c)
        if (cos(i, c) > cos(i, best)) best = c;
      res.assignment[static_cast<std::size_t>(i)] = best;
      dist(i) = 1.0 - cos(i, best);
      ++counts[static_cast<std::size_t>(best)];
    }
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Index far = -1;
      for (Index i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(res.assignment[static_cast<std::size_t>(i)])] < 2) continue;
        if (far < 0 || dist(i) > dist(far)) far = i;
      }
      --counts[static_cast<std::size_t>(res.assignment[static_cast<std::size_t>(far)])];
      res.assignment[static_cast<std::size_t>(far)] = c;
      dist(far) = 0.0;
      ++counts[static_cast<std::size_t>(c)];
    }
    if (res.assignment == prev) break;
    prev = res.assignment;
    res.iterations = iter + 1;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, vectors.cols());
    for (Index i = 0; i < n; ++i) sums.row(res.assignment[static_cast<std::size_t>(i)]) += unit.row(i);
    for (Index c = 0; c < k; ++c)
      if (sums.row(c).norm() > 0) dirs.row(c) = sums.row(c);

    const Eigen::MatrixXd ud = unit_dirs();
    double obj = 0.0;
    for (Index i = 0; i < n; ++i) obj += 1.0 - unit.row(i).dot(ud.row(res.assignment[static_cast<std::size_t>(i)]));
    res.objective.push_back(obj);
  }

  res.centroids = Eigen::MatrixXd::Zero(k, vectors.cols());
  std::vector<Index> counts(static_cast<std::size_t>(k), 0);
  for (Index i = 0; i < n; ++i) {
    const auto c = res.assignment[static_cast<std::size_t>(i)];
    res.centroids.row(c) += vectors.row(i);
    ++counts[static_cast<std::size_t>(c)];
  }
  for (Index c = 0; c < k; ++c) res.centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
  return res;
}

Eigen::MatrixXd replicate_targets(const Eigen::Ref<const Eigen::VectorXd>& target, Index count) {
  if (count < 1) throw InvalidArgument("replicate_targets: count must be >= 1");
  return target.transpose().replicate(count, 1);
}

Eigen::MatrixXd combine_targets(const Eigen::Ref<const Eigen::MatrixXd>& targets, Index n) {
  if (targets.rows() == 0) throw InvalidArgument("combine_targets: empty input");
  if (n < 1 || n > targets.rows()) throw InvalidArgument("combine_targets: n must be in [1, number of targets]");
  const Index groups = (targets.rows() + n - 1) / n;
  Eigen::MatrixXd out(groups, targets.cols());
  for (Index g = 0; g < groups; ++g) {
    const Index start = g * n;
    out.row(g) = targets.middleRows(start, std::min(n, targets.rows() - start)).colwise().mean();
  }
  return out;
}

Eigen::MatrixXd Minibatch::stacked() const {
  Eigen::MatrixXd m(size(), targets.cols());
  m << targets, impostors;
  return m;
}

std::vector<Label> Minibatch::labels() const {
  std::vector<Label> l(static_cast<std::size_t>(targets.rows()), Label::target);
  l.insert(l.end(), static_cast<std::size_t>(impostors.rows()), Label::impostor);
  return l;
}

std::vector<Eigen::MatrixXd> MinibatchPlan::stacked() const {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(minibatches.size());
  for (const auto& mb : minibatches) out.push_back(mb.stacked());
  return out;
}

MinibatchPlan build_minibatch_plan(const Eigen::Ref<const Eigen::MatrixXd>& targets,
                                   const Eigen::Ref<const Eigen::MatrixXd>& centroids, Index num_minibatches,
                                   EnrollMode mode) {
  if (targets.rows() == 0) throw InvalidArgument("build_minibatch_plan: no target vectors");
  if (centroids.rows() == 0) throw InvalidArgument("build_minibatch_plan: no centroids");
  if (targets.cols() != centroids.cols()) throw DimensionError("build_minibatch_plan: dimension mismatch");
  if (num_minibatches < 1 || centroids.rows() % num_minibatches != 0)
    throw InvalidArgument("build_minibatch_plan: " + std::to_string(centroids.rows()) +
                          " centroids are not divisible into " + std::to_string(num_minibatches) + " minibatches");
  const Index group = centroids.rows() / num_minibatches;

  Eigen::MatrixXd target_block;
  if (mode == EnrollMode::single) {
    if (targets.rows() != 1) throw InvalidArgument("build_minibatch_plan: single mode takes exactly one target");
    target_block = replicate_targets(targets.row(0).transpose(), group);
  } else {
    if (group % targets.rows() != 0)
      throw InvalidArgument("build_minibatch_plan: " + std::to_string(group) +
                            " impostors per minibatch is not a multiple of " + std::to_string(targets.rows()) +
                            " targets");
    target_block = targets.replicate(group / targets.rows(), 1);
  }

  MinibatchPlan plan;
  for (Index b = 0; b < num_minibatches; ++b)
    plan.minibatches.push_back({target_block, centroids.middleRows(b * group, group)});
  return plan;
}

}  // namespace spkdnn
