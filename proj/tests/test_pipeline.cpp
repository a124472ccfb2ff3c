#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spkdnn/pipeline.hpp"
#include "support.hpp"

#include <atomic>

using namespace spkdnn;
namespace fs = std::filesystem;

namespace {

ConfigMap small_config(const fs::path& out) {
  return {{"preset", "single-1L"},
          {"output_dir", out.string()},
          {"synth.enabled", "true"},
          {"synth.speakers", "6"},
          {"synth.background_speakers", "30"},
          {"synth.dimension", "10"},
          {"udbn.hidden_sizes", "16"},
          {"rbm.gaussian.epochs", "5"},
          {"rbm.gaussian.minibatch_size", "20"},
          {"select.kappa", "20"},
          {"dnn.learning_rate", "0.2"},
          {"dnn.epochs", "10"},
          {"master_seed", "3"}};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = testing::read_file(e.path());
  return files;
}

std::map<std::string, EvalReport> run(const ConfigMap& m, int jobs, bool force = false) {
  return Pipeline(resolve_config(m), {jobs, force, nullptr}).run();
}

}  // namespace

TEST_CASE("parallel_for covers every index and reports the lowest failure") {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 8, [&](std::size_t i) { ++hits[i]; });
  for (auto& h : hits) CHECK(h == 1);
  try {
    parallel_for(50, 4, [](std::size_t i) {
      if (i == 7 || i == 30) throw std::runtime_error("fail " + std::to_string(i));
    });
    FAIL("expected failure");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "fail 7");
  }
}

TEST_CASE("full run produces every artifact") {
  testing::TempDir dir("pipe");
  const auto reports = run(small_config(dir.path()), 2);
  CHECK(reports.count("dnn") == 1);
  CHECK(reports.count("baseline") == 1);
  CHECK(reports.count("fused") == 1);
  for (const char* f : {"background.emb", "enroll.emb", "test.emb", "trials.txt", "udbn.dbn", "udbn_norm.dbn",
                        "impostors.txt", "centroids.emb", "scores_dnn.txt", "scores_baseline.txt", "whitener.txt",
                        "scores_fused.txt", "report_dnn.txt", "det_dnn.csv", "report_fused.txt"}) {
    CHECK_MESSAGE(fs::exists(dir / f), f);
    CHECK_MESSAGE(fs::exists(dir / (std::string(f) + ".cfghash")), f);
  }
  int models = 0;
  for (const auto& e : fs::directory_iterator(dir / "models")) models += e.path().extension() == ".dnn";
  CHECK(models == 6);
  CHECK(load_scores(dir / "scores_dnn.txt").size() == 6 * 12);
  for (const auto& [sys, r] : reports) CHECK(r.eer < 0.5);
}

TEST_CASE("outputs do not depend on the number of jobs") {
  testing::TempDir a("pipe"), b("pipe");
  run(small_config(a.path()), 1);
  run(small_config(b.path()), 8);
  CHECK(snapshot(a.path()) == snapshot(b.path()));
}

TEST_CASE("rerun skips stages and leaves outputs untouched") {
  testing::TempDir dir("pipe");
  const auto m = small_config(dir.path());
  run(m, 2);
  const auto first = snapshot(dir.path());
  std::ostringstream log;
  Pipeline(resolve_config(m), {2, false, &log}).run();
  CHECK(log.str().find("train-speakers: up to date") != std::string::npos);
  CHECK(snapshot(dir.path()) == first);

  // Resuming after deleting later artifacts regenerates identical bytes.
  fs::remove_all(dir / "models");
  fs::remove(dir / "scores_dnn.txt");
  fs::remove(dir / "centroids.emb");
  run(m, 3);
  CHECK(snapshot(dir.path()) == first);
}

TEST_CASE("individual stages compose to the full run") {
  testing::TempDir a("pipe"), b("pipe");
  const auto full = run(small_config(a.path()), 1);
  Pipeline p(resolve_config(small_config(b.path())), {1, false, nullptr});
  p.gen_synth();
  p.train_udbn();
  p.select_impostors();
  p.cluster();
  p.train_speakers();
  p.score();
  p.score_baseline();
  p.fuse();
  const auto staged = p.evaluate();
  CHECK(staged.at("dnn").eer == full.at("dnn").eer);
  CHECK(snapshot(a.path()) == snapshot(b.path()));
}

TEST_CASE("changing the config on resume is an error unless forced") {
  testing::TempDir dir("pipe");
  auto m = small_config(dir.path());
  run(m, 2);
  m["dnn.epochs"] = "11";
  try {
    run(m, 2);
    FAIL("expected a hash mismatch");
  } catch (const StageError& e) {
    CHECK(std::string(e.what()).find("config-hash mismatch") != std::string::npos);
  }
  CHECK_NOTHROW(run(m, 2, true));
  CHECK_NOTHROW(run(m, 2));
}

TEST_CASE("a missing trial list fails at startup without writing anything") {
  testing::TempDir src("pipe");
  run(small_config(src / "gen"), 2);
  const fs::path out = src / "run";
  ConfigMap m{{"preset", "single-1L"},
              {"output_dir", out.string()},
              {"background", (src / "gen" / "background.emb").string()},
              {"enroll", (src / "gen" / "enroll.emb").string()},
              {"test", (src / "gen" / "test.emb").string()},
              {"trials", (src / "gen" / "nope.txt").string()}};
  try {
    Pipeline p(resolve_config(m));
    p.run();
    FAIL("expected a startup error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "config");
    CHECK(std::string(e.what()).find("nope.txt") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("stage failures are tagged with the stage name") {
  testing::TempDir dir("pipe");
  auto m = small_config(dir.path());
  m["select.kappa"] = "1000";  // more than the background set holds
  try {
    run(m, 1);
    FAIL("expected failure");
  } catch (const StageError& e) {
    CHECK(e.stage() == "select-impostors");
  }
}

TEST_CASE("trials naming an unknown model fail in scoring") {
  testing::TempDir dir("pipe");
  const auto m = small_config(dir.path());
  run(m, 2);
  auto trials = load_trials(dir / "trials.txt");
  trials.push_back({"ghost", trials.front().test_utterance_id, TrialKey::nontarget});
  save_trials(trials, dir / "trials.txt");
  Pipeline p(resolve_config(m), {1, true, nullptr});
  CHECK_THROWS_WITH_AS(p.score(), doctest::Contains("score: "), StageError);
}

TEST_CASE("random initialization skips the UDBN") {
  testing::TempDir dir("pipe");
  auto m = small_config(dir.path());
  m["adapt.enabled"] = "false";
  m["select.enabled"] = "false";
  const auto r = run(m, 2);
  CHECK_FALSE(fs::exists(dir / "udbn.dbn"));
  CHECK_FALSE(fs::exists(dir / "impostors.txt"));
  CHECK(r.at("dnn").eer < 0.5);
}

TEST_CASE("multi-session task") {
  testing::TempDir dir("pipe");
  auto m = small_config(dir.path());
  m["preset"] = "multi-1L";
  m["synth.enroll_sessions"] = "4";
  m["balance.num_centroids"] = "24";
  m["select.kappa"] = "40";
  const auto r = run(m, 4);
  CHECK(r.at("baseline").eer < 0.5);
  CHECK(load_scores(dir / "scores_baseline.txt").size() == 6 * 12);
}
