// Command-line front end: one subcommand per pipeline stage, plus `run`.
#include "spkdnn/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  int jobs = 1;
  bool force = false;
  bool quiet = false;
};

spkdnn::Pipeline make_pipeline(const Common& c) {
  std::filesystem::path base;
  spkdnn::ConfigMap map;
  if (!c.config.empty()) {
    map = spkdnn::load_config_file(c.config);
    base = std::filesystem::path(c.config).parent_path();
  }
  spkdnn::apply_overrides(map, c.overrides);
  spkdnn::RunOptions opts;
  opts.jobs = c.jobs;
  opts.force = c.force;
  opts.log = c.quiet ? nullptr : &std::cerr;
  return spkdnn::Pipeline(spkdnn::resolve_config(map, base), opts);
}

void print_reports(const std::map<std::string, spkdnn::EvalReport>& reports) {
  for (const auto& [sys, r] : reports)
    std::cout << sys << ": EER=" << r.eer * 100.0 << "% minDCF=" << r.min_dcf << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speaker-specific DNN verification pipeline"};
  app.require_subcommand(1);
  Common common;
  bool print_config = false;

  const std::vector<std::pair<std::string, std::string>> stages{
      {"gen-synth", "generate synthetic embeddings and trials"},
      {"train-udbn", "train the universal DBN on the background set"},
      {"select-impostors", "select the impostor subset"},
      {"cluster", "cluster impostors into centroids"},
      {"train-speakers", "adapt and fine-tune one DNN per target speaker"},
      {"score", "score trials with the speaker DNNs"},
      {"score-baseline", "score trials with the whitened cosine baseline"},
      {"fuse", "fuse DNN and baseline scores"},
      {"evaluate", "compute EER, minDCF and DET points"},
      {"run", "run every stage in order"},
  };
  for (const auto& [name, help] : stages) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config,-c", common.config, "key=value config file");
    sub->add_option("--override,-o", common.overrides, "key=value override (repeatable)");
    sub->add_option("--jobs,-j", common.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--force", common.force, "rerun stages whose outputs are stamped with another config");
    sub->add_flag("--quiet,-q", common.quiet, "no progress messages");
    sub->add_flag("--print-config", print_config, "print the resolved config and exit");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    auto pipeline = make_pipeline(common);
    if (print_config) {
      std::cout << spkdnn::to_text(pipeline.config()) << "# hash " << pipeline.hash() << '\n';
      return 0;
    }
    if (cmd == "gen-synth") pipeline.gen_synth();
    else if (cmd == "train-udbn") pipeline.train_udbn();
    else if (cmd == "select-impostors") pipeline.select_impostors();
    else if (cmd == "cluster") pipeline.cluster();
    else if (cmd == "train-speakers") pipeline.train_speakers();
    else if (cmd == "score") pipeline.score();
    else if (cmd == "score-baseline") pipeline.score_baseline();
    else if (cmd == "fuse") pipeline.fuse();
    else if (cmd == "evaluate") print_reports(pipeline.evaluate());
    else print_reports(pipeline.run());
  } catch (const spkdnn::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
