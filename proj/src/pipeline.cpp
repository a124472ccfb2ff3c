#include "spkdnn/pipeline.hpp"

#include "spkdnn/model_io.hpp"
#include "text_io.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace spkdnn {

namespace fs = std::filesystem;

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_index = n;
  std::exception_ptr failure;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

fs::path stamp_path(const fs::path& artifact) { return fs::path(artifact.string() + ".cfghash"); }

std::string read_stamp(const fs::path& artifact) {
  std::ifstream is(stamp_path(artifact));
  std::string s;
  if (is) is >> s;
  return s;
}

// Speaker ids become file names.
void check_file_name(const std::string& id) {
  if (id.empty() || id == "." || id == ".." || id.find('/') != std::string::npos || id.find('\\') != std::string::npos)
    throw InvalidArgument("speaker id '" + id + "' cannot be used as a model file name");
}

Dataset load_checked(const fs::path& path, Index dimension, const char* what) {
  Dataset ds = load_embeddings(path);
  if (ds.empty()) throw InvalidArgument(std::string(what) + " set '" + path.string() + "' is empty");
  if (dimension > 0 && ds.dimension() != dimension)
    throw DimensionError(std::string(what) + " set has dimension " + std::to_string(ds.dimension()) + ", expected " +
                         std::to_string(dimension));
  return ds;
}

// Target vectors used for impostor selection: every enrollment row in the
// single-session task, per-speaker averages in the multi-session task.
Eigen::MatrixXd selection_targets(const Dataset& enroll, EnrollMode task) {
  if (task == EnrollMode::single) return enroll.matrix();
  const auto speakers = enroll.speakers();
  Eigen::MatrixXd out(static_cast<Index>(speakers.size()), enroll.dimension());
  for (std::size_t s = 0; s < speakers.size(); ++s)
    out.row(static_cast<Index>(s)) = average_embeddings(enroll.speaker_matrix(speakers[s])).transpose();
  return out;
}

void sort_scores(TrialScores& scores) {
  std::sort(scores.begin(), scores.end(), [](const ScoredTrial& a, const ScoredTrial& b) {
    return std::tie(a.model_id, a.test_utterance_id) < std::tie(b.model_id, b.test_utterance_id);
  });
}

// Trials grouped per model, in first-appearance order of the model id.
std::vector<std::pair<std::string, std::vector<std::string>>> group_trials(const std::vector<Trial>& trials) {
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
  std::map<std::string, std::size_t> index;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& t : trials) {
    if (!seen.insert({t.model_id, t.test_utterance_id}).second)
      throw InvalidArgument("duplicate trial " + t.model_id + " " + t.test_utterance_id);
    auto [it, added] = index.emplace(t.model_id, groups.size());
    if (added) groups.push_back({t.model_id, {}});
    groups[it->second].second.push_back(t.test_utterance_id);
  }
  return groups;
}

}  // namespace

Pipeline::Pipeline(ExperimentConfig cfg, RunOptions opts) : cfg_(std::move(cfg)), opts_(opts) {
  hash_ = config_hash(cfg_);
  check_inputs();
}

void Pipeline::check_inputs() const {
  if (cfg_.synth.enabled) return;
  for (const auto* p : {&cfg_.background, &cfg_.enroll, &cfg_.test, &cfg_.trials})
    if (!fs::is_regular_file(*p)) throw StageError("config", "input file '" + p->string() + "' does not exist");
}

fs::path Pipeline::model_path(const std::string& speaker) const {
  check_file_name(speaker);
  return cfg_.output_dir / "models" / (speaker + ".dnn");
}

void Pipeline::log(const std::string& msg) const {
  if (opts_.log) *opts_.log << msg << '\n';
}

bool Pipeline::up_to_date(const std::string& stage, const std::vector<fs::path>& outputs) const {
  if (opts_.force) return false;
  for (const auto& p : outputs)
    if (!fs::exists(p)) return false;
  for (const auto& p : outputs) {
    const std::string s = read_stamp(p);
    if (s.empty()) return false;
    if (s != hash_)
      throw StageError(stage, "config-hash mismatch on resume: '" + p.string() + "' was produced with config " + s +
                                  ", current config is " + hash_ + " (rerun with --force to overwrite)");
  }
  return true;
}

void Pipeline::stamp(const std::vector<fs::path>& outputs) const {
  for (const auto& p : outputs) {
    auto os = text::open_out(stamp_path(p));
    os << hash_ << '\n';
    text::finish(os, stamp_path(p));
  }
}

template <typename F>
void Pipeline::stage(const std::string& name, const std::vector<fs::path>& outputs, F&& body) {
  try {
    if (up_to_date(name, outputs)) {
      log(name + ": up to date, skipped");
      return;
    }
    fs::create_directories(cfg_.output_dir);
    log(name + ": running");
    body();
    stamp(outputs);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void Pipeline::gen_synth() {
  if (!cfg_.synth.enabled) return;
  stage("gen-synth", {cfg_.background, cfg_.enroll, cfg_.test, cfg_.trials}, [&] {
    const auto& s = cfg_.synth;
    SynthConfig targets{s.speakers, s.enroll_sessions + s.test_sessions, s.dimension, s.between_spread,
                        s.within_spread, seed_for(cfg_.master_seed, "synth-targets"), ""};
    SynthConfig background{s.background_speakers, s.background_sessions, s.dimension, s.between_spread,
                           s.within_spread, seed_for(cfg_.master_seed, "synth-background"), "bg_"};
    const Dataset all = generate_synthetic(targets);
    Dataset enroll(s.dimension), test(s.dimension), bg(s.dimension);
    for (std::size_t i = 0; i < all.size(); ++i) {
      const auto session = static_cast<int>(i) % targets.sessions_per_speaker;
      (session < s.enroll_sessions ? enroll : test).add(all[i]);
    }
    const Dataset bg_all = generate_synthetic(background);
    for (auto e : bg_all.embeddings()) {
      e.speaker_id.reset();
      bg.add(std::move(e));
    }
    std::vector<Trial> trials;
    for (const auto& model : enroll.speakers())
      for (const auto& t : test.embeddings())
        trials.push_back({model, t.utterance_id, *t.speaker_id == model ? TrialKey::target : TrialKey::nontarget});
    for (const auto* p : {&cfg_.background, &cfg_.enroll, &cfg_.test, &cfg_.trials})
      if (p->has_parent_path()) fs::create_directories(p->parent_path());
    save_embeddings(bg, cfg_.background);
    save_embeddings(enroll, cfg_.enroll);
    save_embeddings(test, cfg_.test);
    save_trials(trials, cfg_.trials);
  });
}

void Pipeline::train_udbn() {
  if (!cfg_.adapt_enabled) return;
  const auto raw = artifact("udbn.dbn");
  const auto norm = artifact("udbn_norm.dbn");
  stage("train-udbn", {raw, norm}, [&] {
    const Dataset bg = load_checked(cfg_.background, 0, "background");
    std::vector<RbmTrainConfig> cfgs;
    for (int k = 0; k < cfg_.depth; ++k) {
      RbmTrainConfig c = k == 0 ? cfg_.grbm : cfg_.brbm;
      c.seed = seed_for(cfg_.master_seed, "udbn-layer-" + std::to_string(k + 1));
      cfgs.push_back(c);
    }
    const auto dbn = spkdnn::train_udbn<double>(bg.matrix(), cfg_.hidden_sizes, cfgs);
    save_dbn(dbn, raw);
    save_dbn(normalize_udbn(dbn), norm);
  });
}

void Pipeline::select_impostors() {
  if (!cfg_.select_enabled) return;
  const auto out = artifact("impostors.txt");
  stage("select-impostors", {out}, [&] {
    const Dataset bg = load_checked(cfg_.background, 0, "background");
    const Dataset enroll = load_checked(cfg_.enroll, bg.dimension(), "enrollment");
    const auto sel = spkdnn::select_impostors(selection_targets(enroll, cfg_.task), bg.matrix(), cfg_.selection);
    auto os = text::open_out(out);
    for (auto idx : sel.indices)
      os << bg[static_cast<std::size_t>(idx)].utterance_id << ' ' << sel.frequencies[static_cast<std::size_t>(idx)]
         << '\n';
    text::finish(os, out);
  });
}

void Pipeline::cluster() {
  const auto out = artifact("centroids.emb");
  stage("cluster", {out}, [&] {
    const Dataset bg = load_checked(cfg_.background, 0, "background");
    Eigen::MatrixXd pool;
    if (cfg_.select_enabled) {
      const auto list = artifact("impostors.txt");
      auto is = text::open_in(list);
      text::LineReader reader(is, list.string());
      std::vector<Index> rows;
      std::vector<std::string_view> f;
      while (reader.next(f)) {
        if (f.size() != 2) reader.fail("expected '<utterance_id> <frequency>'");
        auto idx = bg.find(std::string(f[0]));
        if (!idx) reader.fail("unknown background utterance '" + std::string(f[0]) + "'");
        rows.push_back(static_cast<Index>(*idx));
      }
      const Eigen::MatrixXd all = bg.matrix();
      pool.resize(static_cast<Index>(rows.size()), bg.dimension());
      for (std::size_t i = 0; i < rows.size(); ++i) pool.row(static_cast<Index>(i)) = all.row(rows[i]);
    } else {
      pool = bg.matrix();
    }
    const auto km = kmeans_cosine(pool, cfg_.num_centroids, seed_for(cfg_.master_seed, "kmeans"), cfg_.kmeans_max_iter);
    Dataset centroids(bg.dimension());
    for (Index j = 0; j < km.centroids.rows(); ++j)
      centroids.add({"centroid_" + std::to_string(j), std::nullopt, km.centroids.row(j).transpose()});
    save_embeddings(centroids, out);
  });
}

void Pipeline::train_speakers() {
  Dataset enroll;
  std::vector<std::string> speakers;
  std::vector<fs::path> outputs;
  try {
    enroll = load_checked(cfg_.enroll, 0, "enrollment");
    speakers = enroll.speakers();
    if (speakers.empty()) throw InvalidArgument("enrollment set has no speaker labels");
    for (const auto& s : speakers) outputs.push_back(model_path(s));
  } catch (const std::exception& e) {
    throw StageError("train-speakers", e.what());
  }
  stage("train-speakers", outputs, [&] {
    const Eigen::MatrixXd centroids = load_checked(artifact("centroids.emb"), enroll.dimension(), "centroid").matrix();
    DbnParams<double> udbn;
    if (cfg_.adapt_enabled) {
      udbn = load_dbn(artifact("udbn_norm.dbn"));
      if (!udbn.normalized) throw InvalidArgument("udbn_norm.dbn is not normalized");
      if (udbn.layers.front().n_visible() != enroll.dimension())
        throw DimensionError("UDBN input size does not match the enrollment dimension");
    }
    std::vector<Index> sizes{enroll.dimension()};
    sizes.insert(sizes.end(), cfg_.hidden_sizes.begin(), cfg_.hidden_sizes.end());
    sizes.push_back(2);

    fs::create_directories(cfg_.output_dir / "models");
    parallel_for(speakers.size(), opts_.jobs, [&](std::size_t i) {
      const std::string& spk = speakers[i];
      const Eigen::MatrixXd targets = enroll.speaker_matrix(spk);
      if (cfg_.task == EnrollMode::single && targets.rows() != 1)
        throw InvalidArgument("speaker '" + spk + "' has " + std::to_string(targets.rows()) +
                              " enrollment vectors; the single-session task needs exactly one");
      const auto plan = build_minibatch_plan(targets, centroids, cfg_.num_minibatches, cfg_.task);
      const std::uint64_t seed = seed_for(cfg_.master_seed, spk);
      DnnModel<double> init;
      if (cfg_.adapt_enabled) {
        AdaptConfig ac = cfg_.adapt;
        ac.seed = mix_seed(seed, 1);
        init = init_from_dbn(adapt_udbn(udbn, plan.stacked(), ac), mix_seed(seed, 2));
      } else {
        init = init_random<double>(sizes, mix_seed(seed, 2));
      }
      FineTuneConfig fc = cfg_.finetune;
      fc.seed = mix_seed(seed, 2);
      save_dnn(train_speaker_dnn(std::move(init), plan, fc), model_path(spk));
    });
  });
}

void Pipeline::score() {
  const auto out = artifact("scores_dnn.txt");
  stage("score", {out}, [&] {
    const auto trials = load_trials(cfg_.trials);
    const Dataset test = load_checked(cfg_.test, 0, "test");
    const auto groups = group_trials(trials);
    std::vector<TrialScores> per_model(groups.size());
    parallel_for(groups.size(), opts_.jobs, [&](std::size_t g) {
      const auto& [model_id, tests] = groups[g];
      const auto path = model_path(model_id);
      if (!fs::exists(path)) throw InvalidArgument("no model for trial model id '" + model_id + "'");
      const auto model = load_dnn(path);
      for (const auto& t : tests) {
        auto idx = test.find(t);
        if (!idx) throw InvalidArgument("trial test utterance '" + t + "' is not in the test set");
        per_model[g].push_back({model_id, t, score_llr(model, test[*idx].values)});
      }
    });
    TrialScores all;
    for (auto& s : per_model) all.insert(all.end(), s.begin(), s.end());
    sort_scores(all);
    save_scores(all, out);
  });
}

void Pipeline::score_baseline() {
  const auto wpath = artifact("whitener.txt");
  const auto out = artifact("scores_baseline.txt");
  stage("score-baseline", {wpath, out}, [&] {
    const Dataset bg = load_checked(cfg_.background, 0, "background");
    const Dataset enroll = load_checked(cfg_.enroll, bg.dimension(), "enrollment");
    const Dataset test = load_checked(cfg_.test, bg.dimension(), "test");
    const Whitener w = fit_whitener(bg);
    save_whitener(w, wpath);
    const auto groups = group_trials(load_trials(cfg_.trials));
    std::vector<TrialScores> per_model(groups.size());
    parallel_for(groups.size(), opts_.jobs, [&](std::size_t g) {
      const auto& [model_id, tests] = groups[g];
      const Eigen::MatrixXd enrolled = enroll.speaker_matrix(model_id);
      if (enrolled.rows() == 0) throw InvalidArgument("no enrollment vectors for model id '" + model_id + "'");
      for (const auto& t : tests) {
        auto idx = test.find(t);
        if (!idx) throw InvalidArgument("trial test utterance '" + t + "' is not in the test set");
        per_model[g].push_back({model_id, t, spkdnn::score_baseline(enrolled, test[*idx].values, w)});
      }
    });
    TrialScores all;
    for (auto& s : per_model) all.insert(all.end(), s.begin(), s.end());
    sort_scores(all);
    save_scores(all, out);
  });
}

void Pipeline::fuse() {
  if (!cfg_.fusion_enabled) return;
  const auto out = artifact("scores_fused.txt");
  stage("fuse", {out}, [&] {
    save_scores(spkdnn::fuse(load_scores(artifact("scores_dnn.txt")), load_scores(artifact("scores_baseline.txt"))),
                out);
  });
}

std::map<std::string, EvalReport> Pipeline::evaluate() {
  std::map<std::string, EvalReport> reports;
  std::vector<std::string> systems{"dnn", "baseline"};
  if (cfg_.fusion_enabled) systems.push_back("fused");
  try {
    const auto trials = load_trials(cfg_.trials);
    for (const auto& sys : systems) {
      const auto path = artifact("scores_" + sys + ".txt");
      if (fs::exists(path)) reports[sys] = spkdnn::evaluate(load_scores(path), trials);
    }
    if (reports.empty()) throw InvalidArgument("no score files to evaluate");
  } catch (const std::exception& e) {
    throw StageError("evaluate", e.what());
  }
  std::vector<fs::path> outputs;
  for (const auto& [sys, r] : reports) {
    outputs.push_back(artifact("report_" + sys + ".txt"));
    outputs.push_back(artifact("det_" + sys + ".csv"));
  }
  stage("evaluate", outputs, [&] {
    for (const auto& [sys, r] : reports) {
      save_report(r, artifact("report_" + sys + ".txt"), artifact("det_" + sys + ".csv"));
      std::ostringstream msg;
      msg << "  " << sys << ": eer=" << text::format_shortest(r.eer) << " min_dcf=" << text::format_shortest(r.min_dcf);
      log(msg.str());
    }
  });
  return reports;
}

std::map<std::string, EvalReport> Pipeline::run() {
  gen_synth();
  train_udbn();
  select_impostors();
  cluster();
  train_speakers();
  score();
  score_baseline();
  fuse();
  return evaluate();
}

}  // namespace spkdnn
