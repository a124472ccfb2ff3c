#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spkdnn/rbm.hpp"

#include <cmath>

using namespace spkdnn;

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::MatrixXd two_clusters(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  Eigen::MatrixXd x(n, 2);
  for (int i = 0; i < n; ++i) {
    const double c = i % 2 ? 2.0 : -2.0;
    x(i, 0) = c + g(rng);
    x(i, 1) = -c + g(rng);
  }
  return x;
}

}  // namespace

TEST_CASE("init_rbm shape, range and determinism") {
  const auto p = init_rbm<double>(2, 3, VisibleKind::bernoulli, 1);
  CHECK(p.weights.rows() == 2);
  CHECK(p.weights.cols() == 3);
  CHECK(p.weights.minCoeff() >= 0.0);
  CHECK(p.weights.maxCoeff() < 0.01);
  CHECK(p.visible_bias.isZero());
  CHECK(p.hidden_bias.isZero());
  CHECK(p == init_rbm<double>(2, 3, VisibleKind::bernoulli, 1));
  CHECK(p.weights != init_rbm<double>(2, 3, VisibleKind::bernoulli, 2).weights);
  CHECK_THROWS_AS(init_rbm<double>(0, 3, VisibleKind::bernoulli, 1), InvalidArgument);
}

TEST_CASE("float scalar instantiates") {
  const auto p = init_rbm<float>(3, 2, VisibleKind::gaussian, 4);
  const Eigen::VectorXf h = hidden_probs(p, Eigen::VectorXf::Ones(3).eval());
  CHECK(h.size() == 2);
}

TEST_CASE("hidden_probs") {
  auto p = init_rbm<double>(3, 4, VisibleKind::bernoulli, 1);
  p.weights.setZero();
  const Eigen::VectorXd h = hidden_probs(p, Eigen::Vector3d(5, -2, 7).eval());
  CHECK((h.array() == 0.5).all());

  RbmParams<double> one;
  one.weights = Eigen::MatrixXd::Constant(1, 1, 2.0);
  one.visible_bias = Eigen::VectorXd::Zero(1);
  one.hidden_bias = Eigen::VectorXd::Constant(1, -2.0);
  CHECK(hidden_probs(one, Eigen::VectorXd::Ones(1).eval())(0) == 0.5);

  RbmParams<double> r;
  r.weights = Eigen::MatrixXd::Random(5, 4);
  r.visible_bias = Eigen::VectorXd::Random(5);
  r.hidden_bias = Eigen::VectorXd::Random(4);
  const Eigen::VectorXd v = Eigen::VectorXd::Random(5);
  const Eigen::VectorXd got = hidden_probs(r, v);
  for (int j = 0; j < 4; ++j) {
    double a = r.hidden_bias(j);
    for (int i = 0; i < 5; ++i) a += v(i) * r.weights(i, j);
    CHECK(std::abs(got(j) - logistic(a)) < 1e-12);
  }
  CHECK_THROWS_AS(hidden_probs(r, Eigen::VectorXd::Ones(3).eval()), DimensionError);
}

TEST_CASE("reconstruct_visible") {
  RbmParams<double> g;
  g.visible_kind = VisibleKind::gaussian;
  g.weights = Eigen::MatrixXd::Zero(3, 2);
  g.visible_bias = Eigen::Vector3d(0.25, -1, 4);
  g.hidden_bias = Eigen::VectorXd::Zero(2);
  CHECK(reconstruct_visible(g, Eigen::Vector2d(1, 1).eval()) == g.visible_bias);

  RbmParams<double> b = g;
  b.visible_kind = VisibleKind::bernoulli;
  b.visible_bias.setZero();
  CHECK((reconstruct_visible(b, Eigen::Vector2d(1, 0).eval()).array() == 0.5).all());

  RbmParams<double> r;
  r.weights = Eigen::MatrixXd::Random(5, 4);
  r.visible_bias = Eigen::VectorXd::Random(5);
  r.hidden_bias = Eigen::VectorXd::Random(4);
  const Eigen::VectorXd h = Eigen::VectorXd::Random(4);
  for (auto kind : {VisibleKind::gaussian, VisibleKind::bernoulli}) {
    r.visible_kind = kind;
    const Eigen::VectorXd got = reconstruct_visible(r, h);
    for (int i = 0; i < 5; ++i) {
      double a = r.visible_bias(i);
      for (int j = 0; j < 4; ++j) a += r.weights(i, j) * h(j);
      CHECK(std::abs(got(i) - (kind == VisibleKind::gaussian ? a : logistic(a))) < 1e-12);
    }
  }
  CHECK_THROWS_AS(reconstruct_visible(r, Eigen::VectorXd::Ones(2).eval()), DimensionError);
}

TEST_CASE("sample_bernoulli") {
  Rng rng(3);
  CHECK(sample_bernoulli(Eigen::MatrixXd::Zero(4, 5), rng).isZero());
  CHECK((sample_bernoulli(Eigen::MatrixXd::Ones(4, 5), rng).array() == 1.0).all());
  const Eigen::MatrixXd s = sample_bernoulli(Eigen::MatrixXd::Constant(1, 100000, 0.5), rng);
  CHECK(std::abs(s.mean() - 0.5) < 0.01);

  Rng a(17), b(17);
  const Eigen::MatrixXd p = Eigen::MatrixXd::Constant(3, 3, 0.3);
  CHECK(sample_bernoulli(p, a) == sample_bernoulli(p, b));
}

TEST_CASE("cd1_step leaves a perfect reconstruction unchanged") {
  // Gaussian visibles with W = 0 reconstruct b_vis exactly; set b_vis to the data row.
  RbmParams<double> p;
  p.visible_kind = VisibleKind::gaussian;
  p.weights = Eigen::MatrixXd::Zero(3, 2);
  p.visible_bias = Eigen::Vector3d(0.5, -1.5, 2.0);
  p.hidden_bias = Eigen::Vector2d(0.3, -0.7);
  const RbmParams<double> before = p;
  RbmTrainConfig cfg{0.1, 1, 0.0, 0.0, 1, 0};
  auto vel = RbmVelocity<double>::zeros_like(p);
  Rng rng(1);
  const double err = cd1_step(p, p.visible_bias.transpose(), cfg, vel, rng);
  CHECK(err == 0.0);
  CHECK(p == before);
}

TEST_CASE("cd1_step scalar hand trace") {
  // One visible, one hidden unit. A large hidden bias saturates the hidden
  // probability so the sampled state is 1 whatever the random draw.
  const double x = 1.0, w = 0.5, bv = 0.1, bh = 50.0, lr = 0.05;
  RbmParams<double> p;
  p.visible_kind = VisibleKind::gaussian;
  p.weights = Eigen::MatrixXd::Constant(1, 1, w);
  p.visible_bias = Eigen::VectorXd::Constant(1, bv);
  p.hidden_bias = Eigen::VectorXd::Constant(1, bh);
  RbmTrainConfig cfg{lr, 1, 0.0, 0.0, 1, 0};
  auto vel = RbmVelocity<double>::zeros_like(p);
  Rng rng(9);

  const double h0 = logistic(bh + x * w);
  const double v1 = bv + w * 1.0;
  const double h1 = logistic(bh + v1 * w);
  const double dw = lr * (x * h0 - v1 * h1);
  const double dbv = lr * (x - v1);
  const double dbh = lr * (h0 - h1);

  const double err = cd1_step(p, Eigen::MatrixXd::Constant(1, 1, x), cfg, vel, rng);
  CHECK(std::abs(p.weights(0, 0) - (w + dw)) < 1e-12);
  CHECK(std::abs(p.visible_bias(0) - (bv + dbv)) < 1e-12);
  CHECK(std::abs(p.hidden_bias(0) - (bh + dbh)) < 1e-12);
  CHECK(std::abs(err - (x - v1) * (x - v1)) < 1e-12);
}

TEST_CASE("cd1_step hand trace with a random hidden draw") {
  // Bernoulli visibles; reproduce the single uniform draw from a copy of the generator.
  const double x = 1.0, w = 0.8, bv = -0.2, bh = 0.1, lr = 0.3, wd = 0.01;
  RbmParams<double> p;
  p.weights = Eigen::MatrixXd::Constant(1, 1, w);
  p.visible_bias = Eigen::VectorXd::Constant(1, bv);
  p.hidden_bias = Eigen::VectorXd::Constant(1, bh);
  RbmTrainConfig cfg{lr, 1, 0.0, wd, 1, 0};
  auto vel = RbmVelocity<double>::zeros_like(p);
  Rng rng(123);
  Rng copy = rng;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(copy);

  const double h0 = logistic(bh + x * w);
  const double hs = u < h0 ? 1.0 : 0.0;
  const double v1 = logistic(bv + w * hs);
  const double h1 = logistic(bh + v1 * w);
  cd1_step(p, Eigen::MatrixXd::Constant(1, 1, x), cfg, vel, rng);
  CHECK(std::abs(p.weights(0, 0) - (w + lr * (x * h0 - v1 * h1 - wd * w))) < 1e-12);
  CHECK(std::abs(p.visible_bias(0) - (bv + lr * (x - v1))) < 1e-12);
  CHECK(std::abs(p.hidden_bias(0) - (bh + lr * (h0 - h1))) < 1e-12);
}

TEST_CASE("momentum carries the previous step") {
  const Eigen::MatrixXd batch = Eigen::MatrixXd::Random(6, 3);
  auto p = init_rbm<double>(3, 4, VisibleKind::gaussian, 2);
  RbmTrainConfig cfg{0.05, 1, 0.9, 0.001, 6, 0};
  auto vel = RbmVelocity<double>::zeros_like(p);
  Rng rng(4);
  const auto p0 = p;
  cd1_step(p, batch, cfg, vel, rng);
  const Eigen::MatrixXd d1 = p.weights - p0.weights;

  // Same second step without momentum from an identical state and generator.
  auto q = p;
  auto qvel = RbmVelocity<double>::zeros_like(q);
  Rng qrng = rng;
  RbmTrainConfig no_mom = cfg;
  no_mom.momentum = 0.0;
  cd1_step(q, batch, no_mom, qvel, qrng);
  const Eigen::MatrixXd fresh = q.weights - p.weights;

  const auto p1 = p;
  cd1_step(p, batch, cfg, vel, rng);
  const Eigen::MatrixXd d2 = p.weights - p1.weights;
  CHECK((d2 - (0.9 * d1 + fresh)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("divergence raises a numerical error naming the epoch") {
  auto p = init_rbm<double>(2, 3, VisibleKind::gaussian, 1);
  std::vector<Eigen::MatrixXd> mbs{Eigen::MatrixXd::Constant(4, 2, 1e200)};
  RbmTrainConfig cfg{1e150, 5, 0.0, 0.0, 4, 0};  // the first update overflows
  Rng rng(1);
  try {
    run_cd1_epochs(p, mbs, cfg, rng);
    FAIL("expected divergence");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find(" at epoch 1") != std::string::npos);
  }
}

TEST_CASE("zero learning rate leaves initialization") {
  const Eigen::MatrixXd x = two_clusters(40, 1);
  RbmTrainConfig cfg{0.0, 1, 0.9, 0.0002, 10, 5};
  const auto r = train_rbm<double>(x, cfg, VisibleKind::gaussian, 8);
  CHECK(r.params == init_rbm<double>(2, 8, VisibleKind::gaussian, 5));
  CHECK(r.reconstruction_error.size() == 1);
}

TEST_CASE("training lowers reconstruction error on separable data") {
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RbmTrainConfig cfg{0.05, 50, 0.9, 0.0002, 20, seed};
    const auto r = train_rbm<double>(two_clusters(200, seed + 100), cfg, VisibleKind::gaussian, 8);
    REQUIRE(r.reconstruction_error.size() == 50);
    if (r.reconstruction_error.back() < r.reconstruction_error.front()) ++improved;
  }
  CHECK(improved >= 4);
}

TEST_CASE("training is deterministic") {
  const Eigen::MatrixXd x = two_clusters(60, 2);
  RbmTrainConfig cfg{0.05, 10, 0.9, 0.0002, 16, 42};
  const auto a = train_rbm<double>(x, cfg, VisibleKind::gaussian, 5);
  const auto b = train_rbm<double>(x, cfg, VisibleKind::gaussian, 5);
  CHECK(a.params == b.params);
  CHECK(a.reconstruction_error == b.reconstruction_error);
}

TEST_CASE("config validation") {
  RbmTrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(validate(cfg), InvalidArgument);
  cfg = {};
  cfg.learning_rate = -1;
  CHECK_THROWS_AS(validate(cfg), InvalidArgument);
  CHECK_THROWS_AS(train_rbm<double>(Eigen::MatrixXd(0, 2), RbmTrainConfig{}, VisibleKind::gaussian, 2),
                  InvalidArgument);
}
