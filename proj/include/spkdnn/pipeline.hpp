#pragma once

#include "spkdnn/config.hpp"
#include "spkdnn/eval.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>

namespace spkdnn {

/// A stage failure; what() is "<stage>: <cause>".
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause) : Error(stage + ": " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct RunOptions {
  int jobs = 1;
  bool force = false;            // rerun stages even when stamped outputs exist
  std::ostream* log = nullptr;   // progress messages
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Rethrows the exception
/// of the lowest failing index.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// The end-to-end experiment. Every stage reads and writes the documented
/// file formats under output_dir and stamps each artifact with the config
/// hash (<artifact>.cfghash). A stage whose outputs exist with a matching
/// stamp is skipped; a mismatching stamp is an error unless forced.
class Pipeline {
 public:
  Pipeline(ExperimentConfig cfg, RunOptions opts = {});

  const ExperimentConfig& config() const { return cfg_; }
  const std::string& hash() const { return hash_; }

  void gen_synth();
  void train_udbn();
  void select_impostors();
  void cluster();
  void train_speakers();
  void score();
  void score_baseline();
  void fuse();
  std::map<std::string, EvalReport> evaluate();

  /// All stages in order. Returns one report per scored system
  /// ("dnn", "baseline", and "fused" when fusion is enabled).
  std::map<std::string, EvalReport> run();

  std::filesystem::path artifact(const std::string& name) const { return cfg_.output_dir / name; }
  std::filesystem::path model_path(const std::string& speaker) const;

 private:
  bool up_to_date(const std::string& stage, const std::vector<std::filesystem::path>& outputs) const;
  void stamp(const std::vector<std::filesystem::path>& outputs) const;
  void check_inputs() const;
  void log(const std::string& msg) const;
  template <typename F>
  void stage(const std::string& name, const std::vector<std::filesystem::path>& outputs, F&& body);

  ExperimentConfig cfg_;
  RunOptions opts_;
  std::string hash_;
};

}  // namespace spkdnn
