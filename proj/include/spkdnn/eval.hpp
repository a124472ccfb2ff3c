#pragma once

#include "spkdnn/core.hpp"
#include "spkdnn/embeddings.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace spkdnn {

enum class TrialKey { target, nontarget, unknown };

struct Trial {
  std::string model_id;
  std::string test_utterance_id;
  TrialKey key = TrialKey::unknown;
};

struct ScoredTrial {
  std::string model_id;
  std::string test_utterance_id;
  double score = 0.0;
};

using TrialScores = std::vector<ScoredTrial>;

struct DetPoint {
  double p_fa;
  double p_miss;
};

struct EvalReport {
  double eer = 0.0;
  double threshold_at_eer = 0.0;
  double min_dcf = 0.0;
  double threshold_at_min_dcf = 0.0;
  std::vector<DetPoint> det_points;
};

struct DcfParams {
  double c_miss = 10.0;
  double c_fa = 1.0;
  double p_target = 0.01;
};

struct ThresholdValue {
  double value;
  double threshold;
};

/// Cosine similarity of whitened, length-normalized vectors. With several
/// enrolled rows, each is whitened, the results averaged and then
/// length-normalized.
double score_baseline(const Eigen::Ref<const Eigen::MatrixXd>& enrolled, const Eigen::Ref<const Eigen::VectorXd>& test,
                      const Whitener& whitener);

/// Zero mean, unit population variance.
std::vector<double> mean_var_normalize(std::span<const double> scores);

/// Normalizes each system over all its trials and sums per trial. Both lists
/// must cover the same (model, test) pairs; the result follows the order of `a`.
TrialScores fuse(const TrialScores& a, const TrialScores& b);

// Scores are similarity-oriented: a trial is accepted when score > threshold.
// Thresholds sweep -inf, midpoints between consecutive distinct scores, +inf.
// keys[i] labels scores[i]; unknown keys are ignored.

ThresholdValue compute_eer(std::span<const double> scores, std::span<const TrialKey> keys);
ThresholdValue compute_min_dcf(std::span<const double> scores, std::span<const TrialKey> keys,
                               const DcfParams& dcf = {});
/// One (p_fa, p_miss) pair per swept threshold, thresholds ascending.
std::vector<DetPoint> det_points(std::span<const double> scores, std::span<const TrialKey> keys);

EvalReport evaluate(std::span<const double> scores, std::span<const TrialKey> keys, const DcfParams& dcf = {});

/// Joins scores with keyed trials; unknown-key trials are skipped. Throws when a
/// keyed trial has no score.
EvalReport evaluate(const TrialScores& scores, const std::vector<Trial>& trials, const DcfParams& dcf = {});

std::vector<Trial> load_trials(const std::filesystem::path& path);
void save_trials(const std::vector<Trial>& trials, const std::filesystem::path& path);
TrialScores load_scores(const std::filesystem::path& path);
void save_scores(const TrialScores& scores, const std::filesystem::path& path);

/// Writes "eer=<v> min_dcf=<v>" plus threshold details to `report_path` and the
/// DET points as "p_fa,p_miss" CSV to `det_path`.
void save_report(const EvalReport& report, const std::filesystem::path& report_path,
                 const std::filesystem::path& det_path);

}  // namespace spkdnn
