#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spkdnn/embeddings.hpp"
#include "support.hpp"

#include <cmath>

using namespace spkdnn;

TEST_CASE("load a single well-formed line") {
  testing::TempDir dir("emb");
  testing::write_file(dir / "a.emb", "u1 spkA 1.0 2.0\n");
  const Dataset ds = load_embeddings(dir / "a.emb");
  CHECK(ds.dimension() == 2);
  REQUIRE(ds.size() == 1);
  CHECK(ds[0].utterance_id == "u1");
  CHECK(ds[0].speaker_id == "spkA");
  CHECK(ds[0].values(0) == 1.0);
  CHECK(ds[0].values(1) == 2.0);
}

TEST_CASE("unlabeled rows use '-'") {
  testing::TempDir dir("emb");
  testing::write_file(dir / "a.emb", "u1 - 1 2\n");
  const Dataset ds = load_embeddings(dir / "a.emb");
  CHECK_FALSE(ds[0].speaker_id.has_value());
  save_embeddings(ds, dir / "b.emb");
  CHECK(testing::read_file(dir / "b.emb") == "u1 - 1 2\n");
}

TEST_CASE("parse errors name the offending line") {
  testing::TempDir dir("emb");
  auto line_of = [&](const std::string& text) -> std::size_t {
    testing::write_file(dir / "bad.emb", text);
    try {
      load_embeddings(dir / "bad.emb");
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("u1 a 1 2\nu2 a 1 2 3\n") == 2);
  CHECK(line_of("u1 a 1 2\nu1 a 3 4\n") == 2);
  CHECK(line_of("u1 a 1 x\n") == 1);
  CHECK(line_of("u1 a\n") == 1);
  CHECK(line_of("u1 a 1 2\nu2 a 1 nan\n") == 2);
}

TEST_CASE("missing file is an I/O error") {
  CHECK_THROWS_AS(load_embeddings("/nonexistent/dir/x.emb"), IoError);
}

TEST_CASE("save then load is bitwise identical") {
  testing::TempDir dir("emb");
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1e3);
  Dataset ds(7);
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd v(7);
    for (int j = 0; j < 7; ++j) v(j) = g(rng) * std::pow(10.0, (i % 9) - 4);
    ds.add({"utt" + std::to_string(i), i % 3 ? std::optional<std::string>("s" + std::to_string(i % 5)) : std::nullopt, v});
  }
  save_embeddings(ds, dir / "r.emb");
  const Dataset back = load_embeddings(dir / "r.emb");
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (Index j = 0; j < 7; ++j) CHECK(back[i].values(j) == ds[i].values(j));
  CHECK(back == ds);
}

TEST_CASE("empty dataset round trip") {
  testing::TempDir dir("emb");
  save_embeddings(Dataset{}, dir / "e.emb");
  CHECK(testing::read_file(dir / "e.emb").empty());
  CHECK(load_embeddings(dir / "e.emb").empty());
}

TEST_CASE("one embedding saves to one line") {
  testing::TempDir dir("emb");
  Dataset ds(2);
  ds.add({"u", "s", Eigen::Vector2d(0.5, -1.0)});
  save_embeddings(ds, dir / "one.emb");
  CHECK(testing::read_file(dir / "one.emb") == "u s 0.5 -1\n");
}

TEST_CASE("dataset rejects bad rows") {
  Dataset ds(2);
  ds.add({"a", "s", Eigen::Vector2d(1, 2)});
  CHECK_THROWS_AS(ds.add({"a", "s", Eigen::Vector2d(1, 2)}), InvalidArgument);
  CHECK_THROWS_AS(ds.add({"b", "s", Eigen::Vector3d(1, 2, 3)}), InvalidArgument);
  CHECK_THROWS_AS(ds.add({"c", "s", Eigen::Vector2d(1, INFINITY)}), InvalidArgument);
}

TEST_CASE("synthetic generation counts and determinism") {
  SynthConfig c;
  c.num_speakers = 2;
  c.sessions_per_speaker = 3;
  c.dimension = 4;
  c.seed = 7;
  const Dataset a = generate_synthetic(c);
  CHECK(a.size() == 6);
  CHECK(a.speakers().size() == 2);
  CHECK(a == generate_synthetic(c));
  c.seed = 8;
  CHECK_FALSE(a == generate_synthetic(c));
  c.num_speakers = 0;
  CHECK_THROWS_AS(generate_synthetic(c), InvalidArgument);
}

TEST_CASE("synthetic speakers are tighter than the population") {
  SynthConfig c;
  c.num_speakers = 10;
  c.sessions_per_speaker = 4;
  c.dimension = 30;
  c.between_speaker_spread = 1.0;
  c.within_speaker_spread = 0.1;
  c.seed = 3;
  const Dataset ds = generate_synthetic(c);
  double within = 0, across = 0;
  int nw = 0, na = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = i + 1; j < ds.size(); ++j) {
      const double cs = ds[i].values.dot(ds[j].values) / (ds[i].values.norm() * ds[j].values.norm());
      if (ds[i].speaker_id == ds[j].speaker_id) {
        within += cs;
        ++nw;
      } else {
        across += cs;
        ++na;
      }
    }
  CHECK(within / nw > across / na);
}

TEST_CASE("length normalization") {
  const Eigen::VectorXd v = length_normalize(Eigen::Vector2d(3, 4));
  CHECK(v(0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(v(1) == doctest::Approx(0.8).epsilon(1e-15));
  const Eigen::VectorXd u = length_normalize(v);
  CHECK((u - v).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(length_normalize(Eigen::Vector2d(0, 0)), DegenerateInputError);
}

TEST_CASE("averaging") {
  Eigen::MatrixXd two(2, 2);
  two << 1, 0, 0, 1;
  CHECK(average_embeddings(two).isApprox(Eigen::Vector2d(0.5, 0.5)));
  Eigen::MatrixXd one(1, 3);
  one << 1, 2, 3;
  CHECK(average_embeddings(one) == Eigen::Vector3d(1, 2, 3));
  CHECK_THROWS(average_embeddings(Eigen::MatrixXd(0, 3)));

  const Eigen::MatrixXd r = Eigen::MatrixXd::Random(8, 5);
  const Eigen::VectorXd got = average_embeddings(r);
  for (Index j = 0; j < 5; ++j) {
    double s = 0;
    for (Index i = 0; i < 8; ++i) s += r(i, j);
    CHECK(std::abs(got(j) - s / 8) < 1e-12);
  }
}

namespace {

// Population covariance computed with explicit loops.
Eigen::MatrixXd covariance_oracle(const Eigen::MatrixXd& x) {
  const Index n = x.rows(), d = x.cols();
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += x(i, j) / static_cast<double>(n);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
  for (Index a = 0; a < d; ++a)
    for (Index b = 0; b < d; ++b) {
      double s = 0;
      for (Index i = 0; i < n; ++i)
        s += (x(i, a) - mean[static_cast<std::size_t>(a)]) * (x(i, b) - mean[static_cast<std::size_t>(b)]);
      c(a, b) = s / static_cast<double>(n);
    }
  return c;
}

Eigen::MatrixXd whiten_all(const Whitener& w, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) out.row(i) = apply_whitener(w, x.row(i).transpose()).transpose();
  return out;
}

}  // namespace

TEST_CASE("whitening an exactly white set is the identity") {
  // Rows +-sqrt(d) e_i have mean 0 and covariance exactly I.
  const int d = 6;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2 * d, d);
  for (int i = 0; i < d; ++i) {
    x(2 * i, i) = std::sqrt(double(d));
    x(2 * i + 1, i) = -std::sqrt(double(d));
  }
  const Whitener w = fit_whitener(x);
  CHECK(w.mean.cwiseAbs().maxCoeff() < 1e-6);
  CHECK((w.transform - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("whitening a large standard normal draw is near identity") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  const int d = 4, n = 200000;
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = g(rng);
  const Whitener w = fit_whitener(x);
  CHECK(w.mean.cwiseAbs().maxCoeff() < 0.02);
  CHECK((w.transform - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("whitened fitting set has identity covariance") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  const int d = 8, n = 300;
  Eigen::MatrixXd mix(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) mix(i, j) = g(rng);
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd z(d);
    for (int j = 0; j < d; ++j) z(j) = g(rng);
    x.row(i) = (mix * z).transpose().array() + 3.0;
  }
  const Whitener w = fit_whitener(x);
  CHECK(w.transform.allFinite());
  const Eigen::MatrixXd c = covariance_oracle(whiten_all(w, x));
  CHECK((c - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("whitener errors") {
  Eigen::MatrixXd same(5, 2);
  same.rowwise() = Eigen::RowVector2d(1, 2);
  CHECK_THROWS_AS(fit_whitener(same), NumericalError);
  CHECK_THROWS(fit_whitener(Eigen::MatrixXd::Random(2, 3)));
  const Whitener w = fit_whitener(Eigen::MatrixXd::Random(10, 2));
  CHECK_THROWS_AS(apply_whitener(w, Eigen::Vector3d(1, 2, 3)), DimensionError);
}

TEST_CASE("whitener file round trip") {
  testing::TempDir dir("emb");
  const Whitener w = fit_whitener(Eigen::MatrixXd::Random(20, 3));
  save_whitener(w, dir / "w.txt");
  const Whitener back = load_whitener(dir / "w.txt");
  CHECK(back.mean == w.mean);
  CHECK(back.transform == w.transform);
}
