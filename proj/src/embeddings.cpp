#include "spkdnn/embeddings.hpp"

#include "text_io.hpp"

#include <cstdio>
#include <unordered_set>

namespace spkdnn {

void Dataset::add(Embedding e) {
  if (e.values.size() == 0) throw InvalidArgument("embedding '" + e.utterance_id + "' is empty");
  if (embeddings_.empty() && dimension_ == 0) dimension_ = e.values.size();
  if (e.values.size() != dimension_)
    throw InvalidArgument("embedding '" + e.utterance_id + "' has dimension " +
                          std::to_string(e.values.size()) + ", expected " + std::to_string(dimension_));
  if (!e.values.allFinite()) throw InvalidArgument("embedding '" + e.utterance_id + "' has non-finite values");
  if (!index_.emplace(e.utterance_id, embeddings_.size()).second)
    throw InvalidArgument("duplicate utterance id '" + e.utterance_id + "'");
  embeddings_.push_back(std::move(e));
}

Eigen::MatrixXd Dataset::matrix() const {
  Eigen::MatrixXd m(static_cast<Index>(embeddings_.size()), dimension_);
  for (std::size_t i = 0; i < embeddings_.size(); ++i) m.row(static_cast<Index>(i)) = embeddings_[i].values.transpose();
  return m;
}

Eigen::MatrixXd Dataset::speaker_matrix(const std::string& speaker_id) const {
  std::vector<const Embedding*> rows;
  for (const auto& e : embeddings_)
    if (e.speaker_id && *e.speaker_id == speaker_id) rows.push_back(&e);
  Eigen::MatrixXd m(static_cast<Index>(rows.size()), dimension_);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Index>(i)) = rows[i]->values.transpose();
  return m;
}

std::vector<std::string> Dataset::speakers() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& e : embeddings_)
    if (e.speaker_id && seen.insert(*e.speaker_id).second) out.push_back(*e.speaker_id);
  return out;
}

std::optional<std::size_t> Dataset::find(const std::string& utterance_id) const {
  auto it = index_.find(utterance_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.dimension_ != b.dimension_ || a.embeddings_.size() != b.embeddings_.size()) return false;
  for (std::size_t i = 0; i < a.embeddings_.size(); ++i) {
    const auto& x = a.embeddings_[i];
    const auto& y = b.embeddings_[i];
    if (x.utterance_id != y.utterance_id || x.speaker_id != y.speaker_id || x.values != y.values) return false;
  }
  return true;
}

Dataset load_embeddings(const std::filesystem::path& path) {
  auto is = text::open_in(path);
  text::LineReader reader(is, path.string());
  Dataset ds;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    if (f.size() < 3) reader.fail("expected '<utterance_id> <speaker_id|-> <v_1> ... <v_d>'");
    Embedding e;
    e.utterance_id = std::string(f[0]);
    if (f[1] != "-") e.speaker_id = std::string(f[1]);
    const auto d = static_cast<Index>(f.size() - 2);
    if (!ds.empty() && d != ds.dimension())
      reader.fail("dimension mismatch: " + std::to_string(d) + " values, expected " + std::to_string(ds.dimension()));
    e.values.resize(d);
    for (Index i = 0; i < d; ++i) {
      double v;
      if (!text::parse_double(f[static_cast<std::size_t>(i) + 2], v))
        reader.fail("malformed value '" + std::string(f[static_cast<std::size_t>(i) + 2]) + "'");
      if (!std::isfinite(v)) reader.fail("non-finite value");
      e.values(i) = v;
    }
    if (ds.find(e.utterance_id)) reader.fail("duplicate utterance id '" + e.utterance_id + "'");
    ds.add(std::move(e));
  }
  return ds;
}

void save_embeddings(const Dataset& dataset, const std::filesystem::path& path) {
  auto os = text::open_out(path);
  for (const auto& e : dataset.embeddings()) {
    os << e.utterance_id << ' ' << (e.speaker_id ? *e.speaker_id : std::string("-"));
    for (Index i = 0; i < e.values.size(); ++i) os << ' ' << text::format_double(e.values(i));
    os << '\n';
  }
  text::finish(os, path);
}

Dataset generate_synthetic(const SynthConfig& c) {
  if (c.num_speakers < 1 || c.sessions_per_speaker < 1 || c.dimension < 1)
    throw InvalidArgument("synthetic config counts must be >= 1");
  if (!(c.between_speaker_spread > 0) || !(c.within_speaker_spread > 0))
    throw InvalidArgument("synthetic config spreads must be > 0");

  Rng rng(c.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset ds(c.dimension);
  for (int s = 0; s < c.num_speakers; ++s) {
    Eigen::VectorXd mean(c.dimension);
    for (int i = 0; i < c.dimension; ++i) mean(i) = c.between_speaker_spread * gauss(rng);
    char spk[32];
    std::snprintf(spk, sizeof(spk), "spk%04d", s);
    const std::string speaker = c.id_prefix + spk;
    for (int j = 0; j < c.sessions_per_speaker; ++j) {
      Embedding e;
      char sess[16];
      std::snprintf(sess, sizeof(sess), "_s%02d", j);
      e.utterance_id = speaker + sess;
      e.speaker_id = speaker;
      e.values.resize(c.dimension);
      for (int i = 0; i < c.dimension; ++i) e.values(i) = mean(i) + c.within_speaker_spread * gauss(rng);
      ds.add(std::move(e));
    }
  }
  return ds;
}

Eigen::VectorXd length_normalize(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double n = v.norm();
  if (!(n > 0)) throw DegenerateInputError("cannot length-normalize a zero vector");
  return v / n;
}

Eigen::VectorXd average_embeddings(const Eigen::Ref<const Eigen::MatrixXd>& vectors) {
  if (vectors.rows() == 0) throw InvalidArgument("cannot average an empty set of vectors");
  return vectors.colwise().mean().transpose();
}

Whitener fit_whitener(const Eigen::Ref<const Eigen::MatrixXd>& background) {
  const Index n = background.rows();
  const Index d = background.cols();
  if (d == 0 || n < d + 1)
    throw DegenerateInputError("whitener needs at least d+1 = " + std::to_string(d + 1) + " vectors, got " +
                               std::to_string(n));
  Whitener w;
  w.mean = background.colwise().mean().transpose();
  const Eigen::MatrixXd centered = background.rowwise() - w.mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
  const double trace = cov.trace();
  if (!(trace > 0) || !std::isfinite(trace)) throw NumericalError("whitener: covariance is singular");

  // Regularization only kicks in when the plain covariance is not safely positive definite.
  const double floor = 1e-12 * trace / static_cast<double>(d);
  auto factor_ok = [&](const Eigen::LLT<Eigen::MatrixXd>& llt) {
    if (llt.info() != Eigen::Success) return false;
    const Eigen::VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
    return diag.allFinite() && diag.minCoeff() * diag.minCoeff() > floor;
  };
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (!factor_ok(llt)) {
    cov.diagonal().array() += 1e-6 * trace / static_cast<double>(d);
    llt.compute(cov);
    if (!factor_ok(llt)) throw NumericalError("whitener: covariance is singular after regularization");
  }
  w.transform = llt.matrixL().solve(Eigen::MatrixXd::Identity(d, d));
  if (!w.transform.allFinite()) throw NumericalError("whitener: non-finite transform");
  return w;
}

Eigen::VectorXd apply_whitener(const Whitener& w, const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != w.dimension())
    throw DimensionError("whitener expects dimension " + std::to_string(w.dimension()) + ", got " +
                         std::to_string(v.size()));
  return w.transform * (v - w.mean);
}

void save_whitener(const Whitener& w, const std::filesystem::path& path) {
  auto os = text::open_out(path);
  os << w.dimension() << '\n';
  text::write_row(os, w.mean);
  for (Index i = 0; i < w.transform.rows(); ++i) text::write_row(os, w.transform.row(i));
  text::finish(os, path);
}

Whitener load_whitener(const std::filesystem::path& path) {
  auto is = text::open_in(path);
  text::LineReader reader(is, path.string());
  auto f = reader.expect();
  Index d = 0;
  if (f.size() != 1 || !text::parse_int(f[0], d) || d <= 0) reader.fail("expected dimension");
  Whitener w;
  w.mean = reader.expect_vector(d);
  w.transform = reader.expect_matrix(d, d);
  return w;
}

}  // namespace spkdnn
