#include "spkdnn/eval.hpp"

#include "text_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace spkdnn {

double score_baseline(const Eigen::Ref<const Eigen::MatrixXd>& enrolled, const Eigen::Ref<const Eigen::VectorXd>& test,
                      const Whitener& whitener) {
  if (enrolled.rows() == 0) throw InvalidArgument("score_baseline: no enrolled vectors");
  Eigen::VectorXd model = Eigen::VectorXd::Zero(whitener.dimension());
  for (Index i = 0; i < enrolled.rows(); ++i) model += apply_whitener(whitener, enrolled.row(i).transpose());
  model /= static_cast<double>(enrolled.rows());
  return length_normalize(model).dot(length_normalize(apply_whitener(whitener, test)));
}

std::vector<double> mean_var_normalize(std::span<const double> scores) {
  if (scores.size() < 2) throw InvalidArgument("mean_var_normalize: need at least 2 scores");
  const double n = static_cast<double>(scores.size());
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= n;
  if (!(var > 0)) throw DegenerateInputError("mean_var_normalize: scores have zero variance");
  const double sd = std::sqrt(var);
  std::vector<double> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back((s - mean) / sd);
  return out;
}

TrialScores fuse(const TrialScores& a, const TrialScores& b) {
  if (a.size() != b.size()) throw InvalidArgument("fuse: systems cover different trial sets");
  std::map<std::pair<std::string, std::string>, std::size_t> index_b;
  for (std::size_t i = 0; i < b.size(); ++i)
    if (!index_b.emplace(std::pair{b[i].model_id, b[i].test_utterance_id}, i).second)
      throw InvalidArgument("fuse: duplicate trial " + b[i].model_id + " " + b[i].test_utterance_id);

  std::vector<double> sa, sb;
  for (const auto& t : a) sa.push_back(t.score);
  for (const auto& t : b) sb.push_back(t.score);
  const auto na = mean_var_normalize(sa);
  const auto nb = mean_var_normalize(sb);

  TrialScores out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto it = index_b.find({a[i].model_id, a[i].test_utterance_id});
    if (it == index_b.end())
      throw InvalidArgument("fuse: trial " + a[i].model_id + " " + a[i].test_utterance_id + " missing from second system");
    out.push_back({a[i].model_id, a[i].test_utterance_id, na[i] + nb[it->second]});
    index_b.erase(it);
  }
  return out;
}

namespace {

// Operating points of the threshold sweep, thresholds ascending.
struct Sweep {
  std::vector<double> thresholds;
  std::vector<double> p_miss;
  std::vector<double> p_fa;
  double min_score = 0.0;
  double max_score = 0.0;
};

Sweep sweep(std::span<const double> scores, std::span<const TrialKey> keys) {
  if (scores.size() != keys.size()) throw DimensionError("evaluation: score and key counts differ");
  std::vector<std::size_t> order;
  std::size_t n_target = 0;
  std::size_t n_non = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (keys[i] == TrialKey::unknown) continue;
    if (!std::isfinite(scores[i])) throw InvalidArgument("evaluation: non-finite score");
    (keys[i] == TrialKey::target ? n_target : n_non) += 1;
    order.push_back(i);
  }
  if (n_target == 0 || n_non == 0) throw InvalidArgument("evaluation needs at least one target and one nontarget trial");
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return scores[x] < scores[y]; });

  Sweep sw;
  sw.min_score = scores[order.front()];
  sw.max_score = scores[order.back()];
  std::size_t misses = 0;
  std::size_t rejected_non = 0;
  const double inf = std::numeric_limits<double>::infinity();
  sw.thresholds.push_back(-inf);
  sw.p_miss.push_back(0.0);
  sw.p_fa.push_back(1.0);
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (keys[order[i]] == TrialKey::target ? misses : rejected_non) += 1;
    sw.thresholds.push_back(i < order.size() ? 0.5 * (s + scores[order[i]]) : inf);
    sw.p_miss.push_back(static_cast<double>(misses) / static_cast<double>(n_target));
    sw.p_fa.push_back(static_cast<double>(n_non - rejected_non) / static_cast<double>(n_non));
  }
  return sw;
}

double reportable(double t, const Sweep& sw) {
  if (t == -std::numeric_limits<double>::infinity()) return sw.min_score;
  if (t == std::numeric_limits<double>::infinity()) return sw.max_score;
  return t;
}

}  // namespace

ThresholdValue compute_eer(std::span<const double> scores, std::span<const TrialKey> keys) {
  const Sweep sw = sweep(scores, keys);
  for (std::size_t j = 1; j < sw.thresholds.size(); ++j) {
    const double d = sw.p_miss[j] - sw.p_fa[j];
    if (d < 0) continue;
    if (d == 0) return {sw.p_miss[j], reportable(sw.thresholds[j], sw)};
    const double d_prev = sw.p_miss[j - 1] - sw.p_fa[j - 1];
    const double alpha = -d_prev / (d - d_prev);
    const double eer = sw.p_miss[j - 1] + alpha * (sw.p_miss[j] - sw.p_miss[j - 1]);
    const double t0 = reportable(sw.thresholds[j - 1], sw);
    const double t1 = reportable(sw.thresholds[j], sw);
    return {eer, t0 + alpha * (t1 - t0)};
  }
  // The last operating point always has p_miss = 1, p_fa = 0.
  return {1.0, sw.max_score};
}

ThresholdValue compute_min_dcf(std::span<const double> scores, std::span<const TrialKey> keys, const DcfParams& dcf) {
  const Sweep sw = sweep(scores, keys);
  ThresholdValue best{std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t j = 0; j < sw.thresholds.size(); ++j) {
    const double cost = dcf.c_miss * dcf.p_target * sw.p_miss[j] + dcf.c_fa * (1.0 - dcf.p_target) * sw.p_fa[j];
    if (cost < best.value) best = {cost, sw.thresholds[j]};
  }
  return best;
}

std::vector<DetPoint> det_points(std::span<const double> scores, std::span<const TrialKey> keys) {
  const Sweep sw = sweep(scores, keys);
  std::vector<DetPoint> out;
  out.reserve(sw.thresholds.size());
  for (std::size_t j = 0; j < sw.thresholds.size(); ++j) out.push_back({sw.p_fa[j], sw.p_miss[j]});
  return out;
}

EvalReport evaluate(std::span<const double> scores, std::span<const TrialKey> keys, const DcfParams& dcf) {
  EvalReport r;
  const auto eer = compute_eer(scores, keys);
  const auto dcf_min = compute_min_dcf(scores, keys, dcf);
  r.eer = eer.value;
  r.threshold_at_eer = eer.threshold;
  r.min_dcf = dcf_min.value;
  r.threshold_at_min_dcf = dcf_min.threshold;
  r.det_points = det_points(scores, keys);
  return r;
}

EvalReport evaluate(const TrialScores& scores, const std::vector<Trial>& trials, const DcfParams& dcf) {
  std::map<std::pair<std::string, std::string>, double> lookup;
  for (const auto& s : scores) lookup[{s.model_id, s.test_utterance_id}] = s.score;
  std::vector<double> values;
  std::vector<TrialKey> keys;
  for (const auto& t : trials) {
    if (t.key == TrialKey::unknown) continue;
    auto it = lookup.find({t.model_id, t.test_utterance_id});
    if (it == lookup.end()) throw InvalidArgument("no score for trial " + t.model_id + " " + t.test_utterance_id);
    values.push_back(it->second);
    keys.push_back(t.key);
  }
  return evaluate(std::span<const double>(values), std::span<const TrialKey>(keys), dcf);
}

std::vector<Trial> load_trials(const std::filesystem::path& path) {
  auto is = text::open_in(path);
  text::LineReader reader(is, path.string());
  std::vector<Trial> out;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    if (f.size() != 3) reader.fail("expected '<model_id> <test_utterance_id> <target|nontarget|unknown>'");
    Trial t{std::string(f[0]), std::string(f[1]), TrialKey::unknown};
    if (f[2] == "target")
      t.key = TrialKey::target;
    else if (f[2] == "nontarget")
      t.key = TrialKey::nontarget;
    else if (f[2] != "unknown")
      reader.fail("unknown trial key '" + std::string(f[2]) + "'");
    out.push_back(std::move(t));
  }
  return out;
}

void save_trials(const std::vector<Trial>& trials, const std::filesystem::path& path) {
  auto os = text::open_out(path);
  for (const auto& t : trials) {
    const char* key = t.key == TrialKey::target ? "target" : t.key == TrialKey::nontarget ? "nontarget" : "unknown";
    os << t.model_id << ' ' << t.test_utterance_id << ' ' << key << '\n';
  }
  text::finish(os, path);
}

TrialScores load_scores(const std::filesystem::path& path) {
  auto is = text::open_in(path);
  text::LineReader reader(is, path.string());
  TrialScores out;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    if (f.size() != 3) reader.fail("expected '<model_id> <test_utterance_id> <score>'");
    double v;
    if (!text::parse_double(f[2], v)) reader.fail("malformed score '" + std::string(f[2]) + "'");
    out.push_back({std::string(f[0]), std::string(f[1]), v});
  }
  return out;
}

void save_scores(const TrialScores& scores, const std::filesystem::path& path) {
  auto os = text::open_out(path);
  for (const auto& s : scores) os << s.model_id << ' ' << s.test_utterance_id << ' ' << text::format_double(s.score) << '\n';
  text::finish(os, path);
}

void save_report(const EvalReport& r, const std::filesystem::path& report_path, const std::filesystem::path& det_path) {
  {
    auto os = text::open_out(report_path);
    os << "eer=" << text::format_double(r.eer) << " min_dcf=" << text::format_double(r.min_dcf) << '\n';
    os << "eer_percent=" << text::format_shortest(100.0 * r.eer)
       << " min_dcf_x1e4=" << text::format_shortest(1e4 * r.min_dcf) << '\n';
    os << "threshold_at_eer=" << text::format_double(r.threshold_at_eer)
       << " threshold_at_min_dcf=" << text::format_double(r.threshold_at_min_dcf) << '\n';
    text::finish(os, report_path);
  }
  auto os = text::open_out(det_path);
  os << "p_fa,p_miss\n";
  for (const auto& p : r.det_points) os << text::format_double(p.p_fa) << ',' << text::format_double(p.p_miss) << '\n';
  text::finish(os, det_path);
}

}  // namespace spkdnn
