#include "spkdnn/config.hpp"

#include "text_io.hpp"

#include <array>
#include <cstdio>
#include <functional>
#include <sstream>

namespace spkdnn {

std::string preset_name(EnrollMode task, int depth) {
  return std::string(task == EnrollMode::single ? "single" : "multi") + "-" + std::to_string(depth) + "L";
}

ExperimentConfig preset(const std::string& name) {
  EnrollMode task;
  int depth = 0;
  if (name == "single-1L" || name == "single-2L" || name == "single-3L")
    task = EnrollMode::single;
  else if (name == "multi-1L" || name == "multi-2L" || name == "multi-3L")
    task = EnrollMode::multi;
  else
    throw InvalidArgument("unknown preset '" + name + "'");
  depth = name[name.size() - 2] - '0';
  const auto d = static_cast<std::size_t>(depth - 1);

  ExperimentConfig c;
  c.task = task;
  c.depth = depth;
  c.hidden_sizes.assign(static_cast<std::size_t>(depth), 512);
  c.grbm = RbmTrainConfig::gaussian_defaults();
  c.brbm = RbmTrainConfig::bernoulli_defaults();
  c.selection.N = 10;
  c.selection.kappa = std::array{2000, 300, 500}[d];
  c.num_minibatches = 3;
  c.finetune.momentum = 0.9;
  c.finetune.weight_decay = 0.0012;
  c.adapt.momentum = 0.9;
  c.adapt.weight_decay = 0.0002;
  c.finetune.epochs = std::array{30, 100, 500}[d];
  if (task == EnrollMode::single) {
    c.num_centroids = 12;
    c.finetune.learning_rate = std::array{0.001, 0.005, 0.08}[d];
    if (depth == 1) {
      c.adapt.layers_to_adapt = 1;
      c.adapt.learning_rates = {0.001};
      c.adapt.epochs = {10};
    } else {
      c.adapt.layers_to_adapt = 2;
      c.adapt.learning_rates = {0.001, 0.0001};
      c.adapt.epochs = depth == 2 ? std::vector<int>{20, 15} : std::vector<int>{15, 20};
    }
  } else {
    c.num_centroids = 24;
    c.finetune.learning_rate = std::array{0.001, 0.01, 0.08}[d];
    c.adapt.layers_to_adapt = 1;
    c.adapt.learning_rates = {0.001};
    c.adapt.epochs = {std::array{10, 10, 25}[d]};
  }
  return c;
}

ConfigMap parse_config_text(const std::string& text, const std::string& source) {
  ConfigMap map;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    map[key] = trim(line.substr(eq + 1));
  }
  return map;
}

ConfigMap load_config_file(const std::filesystem::path& path) {
  auto is = text::open_in(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

void apply_overrides(ConfigMap& base, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    auto parsed = parse_config_text(o, "--override");
    if (parsed.size() != 1) throw InvalidArgument("override must be a single key=value, got '" + o + "'");
    base[parsed.begin()->first] = parsed.begin()->second;
  }
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw InvalidArgument("config key '" + key + "': expected " + want + ", got '" + value + "'");
}

bool to_bool(const std::string& k, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(k, v, "a boolean");
}

int to_int(const std::string& k, const std::string& v) {
  int out;
  if (!text::parse_int(v, out)) bad_value(k, v, "an integer");
  return out;
}

std::uint64_t to_u64(const std::string& k, const std::string& v) {
  std::uint64_t out;
  if (!text::parse_int(v, out)) bad_value(k, v, "an unsigned integer");
  return out;
}

double to_double(const std::string& k, const std::string& v) {
  double out;
  if (!text::parse_double(v, out)) bad_value(k, v, "a number");
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto end = comma == std::string::npos ? v.size() : comma;
    if (end > start) out.push_back(v.substr(start, end - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& k, const std::string& v, F conv) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(conv(k, item));
  if (out.empty()) bad_value(k, v, "a comma-separated list");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_floating_point_v<T>)
      s += text::format_shortest(xs[i]);
    else
      s += std::to_string(xs[i]);
  }
  return s;
}

std::string fmt(double v) { return text::format_shortest(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

// Schema: key, setter, getter. Order here is the canonical rendering order.
struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::filesystem::path as_path(const std::string& v) { return std::filesystem::path(v); }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    auto path_field = [&](const char* key, std::filesystem::path ExperimentConfig::*member) {
      v.push_back({key, [member](ExperimentConfig& c, const std::string&, const std::string& s) { c.*member = as_path(s); },
                   [member](const ExperimentConfig& c) { return (c.*member).string(); }});
    };
    path_field("background", &ExperimentConfig::background);
    path_field("enroll", &ExperimentConfig::enroll);
    path_field("test", &ExperimentConfig::test);
    path_field("trials", &ExperimentConfig::trials);
    v.push_back({"master_seed", [](auto& c, auto& k, auto& s) { c.master_seed = to_u64(k, s); },
                 [](auto& c) { return std::to_string(c.master_seed); }});

    v.push_back({"synth.enabled", [](auto& c, auto& k, auto& s) { c.synth.enabled = to_bool(k, s); },
                 [](auto& c) { return fmt(c.synth.enabled); }});
    auto synth_int = [&](const char* key, int SynthSetup::*m) {
      v.push_back({key, [m](ExperimentConfig& c, const std::string& k, const std::string& s) { c.synth.*m = to_int(k, s); },
                   [m](const ExperimentConfig& c) { return std::to_string(c.synth.*m); }});
    };
    synth_int("synth.speakers", &SynthSetup::speakers);
    synth_int("synth.enroll_sessions", &SynthSetup::enroll_sessions);
    synth_int("synth.test_sessions", &SynthSetup::test_sessions);
    synth_int("synth.background_speakers", &SynthSetup::background_speakers);
    synth_int("synth.background_sessions", &SynthSetup::background_sessions);
    synth_int("synth.dimension", &SynthSetup::dimension);
    v.push_back({"synth.between_spread", [](auto& c, auto& k, auto& s) { c.synth.between_spread = to_double(k, s); },
                 [](auto& c) { return fmt(c.synth.between_spread); }});
    v.push_back({"synth.within_spread", [](auto& c, auto& k, auto& s) { c.synth.within_spread = to_double(k, s); },
                 [](auto& c) { return fmt(c.synth.within_spread); }});

    v.push_back({"udbn.hidden_sizes",
                 [](auto& c, auto& k, auto& s) {
                   c.hidden_sizes = to_list<Index>(k, s, [](auto& kk, auto& x) { return Index(to_int(kk, x)); });
                 },
                 [](auto& c) { return join(c.hidden_sizes); }});
    auto rbm_fields = [&](const std::string& prefix, RbmTrainConfig ExperimentConfig::*m) {
      v.push_back({prefix + ".learning_rate",
                   [m](ExperimentConfig& c, const std::string& k, const std::string& s) { (c.*m).learning_rate = to_double(k, s); },
                   [m](const ExperimentConfig& c) { return fmt((c.*m).learning_rate); }});
      v.push_back({prefix + ".epochs",
                   [m](ExperimentConfig& c, const std::string& k, const std::string& s) { (c.*m).epochs = to_int(k, s); },
                   [m](const ExperimentConfig& c) { return std::to_string((c.*m).epochs); }});
      v.push_back({prefix + ".momentum",
                   [m](ExperimentConfig& c, const std::string& k, const std::string& s) { (c.*m).momentum = to_double(k, s); },
                   [m](const ExperimentConfig& c) { return fmt((c.*m).momentum); }});
      v.push_back({prefix + ".weight_decay",
                   [m](ExperimentConfig& c, const std::string& k, const std::string& s) { (c.*m).weight_decay = to_double(k, s); },
                   [m](const ExperimentConfig& c) { return fmt((c.*m).weight_decay); }});
      v.push_back({prefix + ".minibatch_size",
                   [m](ExperimentConfig& c, const std::string& k, const std::string& s) { (c.*m).minibatch_size = to_int(k, s); },
                   [m](const ExperimentConfig& c) { return std::to_string((c.*m).minibatch_size); }});
    };
    rbm_fields("rbm.gaussian", &ExperimentConfig::grbm);
    rbm_fields("rbm.bernoulli", &ExperimentConfig::brbm);

    v.push_back({"adapt.enabled", [](auto& c, auto& k, auto& s) { c.adapt_enabled = to_bool(k, s); },
                 [](auto& c) { return fmt(c.adapt_enabled); }});
    v.push_back({"adapt.layers", [](auto& c, auto& k, auto& s) { c.adapt.layers_to_adapt = to_int(k, s); },
                 [](auto& c) { return std::to_string(c.adapt.layers_to_adapt); }});
    v.push_back({"adapt.learning_rates",
                 [](auto& c, auto& k, auto& s) { c.adapt.learning_rates = to_list<double>(k, s, to_double); },
                 [](auto& c) { return join(c.adapt.learning_rates); }});
    v.push_back({"adapt.epochs", [](auto& c, auto& k, auto& s) { c.adapt.epochs = to_list<int>(k, s, to_int); },
                 [](auto& c) { return join(c.adapt.epochs); }});
    v.push_back({"adapt.momentum", [](auto& c, auto& k, auto& s) { c.adapt.momentum = to_double(k, s); },
                 [](auto& c) { return fmt(c.adapt.momentum); }});
    v.push_back({"adapt.weight_decay", [](auto& c, auto& k, auto& s) { c.adapt.weight_decay = to_double(k, s); },
                 [](auto& c) { return fmt(c.adapt.weight_decay); }});

    v.push_back({"dnn.learning_rate", [](auto& c, auto& k, auto& s) { c.finetune.learning_rate = to_double(k, s); },
                 [](auto& c) { return fmt(c.finetune.learning_rate); }});
    v.push_back({"dnn.epochs", [](auto& c, auto& k, auto& s) { c.finetune.epochs = to_int(k, s); },
                 [](auto& c) { return std::to_string(c.finetune.epochs); }});
    v.push_back({"dnn.momentum", [](auto& c, auto& k, auto& s) { c.finetune.momentum = to_double(k, s); },
                 [](auto& c) { return fmt(c.finetune.momentum); }});
    v.push_back({"dnn.weight_decay", [](auto& c, auto& k, auto& s) { c.finetune.weight_decay = to_double(k, s); },
                 [](auto& c) { return fmt(c.finetune.weight_decay); }});

    v.push_back({"select.enabled", [](auto& c, auto& k, auto& s) { c.select_enabled = to_bool(k, s); },
                 [](auto& c) { return fmt(c.select_enabled); }});
    v.push_back({"select.N", [](auto& c, auto& k, auto& s) { c.selection.N = to_int(k, s); },
                 [](auto& c) { return std::to_string(c.selection.N); }});
    v.push_back({"select.kappa", [](auto& c, auto& k, auto& s) { c.selection.kappa = to_int(k, s); },
                 [](auto& c) { return std::to_string(c.selection.kappa); }});
    v.push_back({"balance.num_minibatches", [](auto& c, auto& k, auto& s) { c.num_minibatches = to_int(k, s); },
                 [](auto& c) { return std::to_string(c.num_minibatches); }});
    v.push_back({"balance.num_centroids", [](auto& c, auto& k, auto& s) { c.num_centroids = to_int(k, s); },
                 [](auto& c) { return std::to_string(c.num_centroids); }});
    v.push_back({"kmeans.max_iter", [](auto& c, auto& k, auto& s) { c.kmeans_max_iter = to_int(k, s); },
                 [](auto& c) { return std::to_string(c.kmeans_max_iter); }});
    v.push_back({"fusion.enabled", [](auto& c, auto& k, auto& s) { c.fusion_enabled = to_bool(k, s); },
                 [](auto& c) { return fmt(c.fusion_enabled); }});
    return v;
  }();
  return f;
}

void validate(const ExperimentConfig& c) {
  if (c.output_dir.empty()) throw InvalidArgument("config: output_dir is required");
  for (const auto* p : {&c.background, &c.enroll, &c.test, &c.trials})
    if (p->empty()) throw InvalidArgument("config: background, enroll, test and trials paths are required");
  if (c.depth < 1 || c.depth > 3) throw InvalidArgument("config: depth must be 1, 2 or 3");
  if (c.hidden_sizes.size() != static_cast<std::size_t>(c.depth))
    throw InvalidArgument("config: udbn.hidden_sizes must list one size per hidden layer (depth " +
                          std::to_string(c.depth) + ")");
  for (auto h : c.hidden_sizes)
    if (h < 1) throw InvalidArgument("config: hidden sizes must be >= 1");
  if (c.adapt.layers_to_adapt < 0 || c.adapt.layers_to_adapt > c.depth)
    throw InvalidArgument("config: adapt.layers must be in [0, depth]");
  if (c.adapt.learning_rates.size() < static_cast<std::size_t>(c.adapt.layers_to_adapt) ||
      c.adapt.epochs.size() < static_cast<std::size_t>(c.adapt.layers_to_adapt))
    throw InvalidArgument("config: adapt.learning_rates and adapt.epochs need an entry per adapted layer");
  spkdnn::validate(c.grbm);
  spkdnn::validate(c.brbm);
  spkdnn::validate(c.finetune);
  if (c.selection.N < 1 || c.selection.kappa < 1) throw InvalidArgument("config: select.N and select.kappa must be >= 1");
  if (c.num_minibatches < 1 || c.num_centroids < 1 || c.num_centroids % c.num_minibatches != 0)
    throw InvalidArgument("config: balance.num_centroids must be a positive multiple of balance.num_minibatches");
  if (c.kmeans_max_iter < 1) throw InvalidArgument("config: kmeans.max_iter must be >= 1");
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k{"preset", "task", "depth", "output_dir"};
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

ExperimentConfig resolve_config(const ConfigMap& map, const std::filesystem::path& base_dir) {
  auto get = [&](const char* key) -> const std::string* {
    auto it = map.find(key);
    return it == map.end() ? nullptr : &it->second;
  };
  std::string name;
  if (const auto* p = get("preset")) {
    name = *p;
  } else {
    EnrollMode task = EnrollMode::single;
    int depth = 1;
    if (const auto* t = get("task")) {
      if (*t == "single")
        task = EnrollMode::single;
      else if (*t == "multi")
        task = EnrollMode::multi;
      else
        bad_value("task", *t, "'single' or 'multi'");
    }
    if (const auto* d = get("depth")) depth = to_int("depth", *d);
    if (depth < 1 || depth > 3) throw InvalidArgument("config: depth must be 1, 2 or 3");
    name = preset_name(task, depth);
  }
  ExperimentConfig c = preset(name);
  if (get("preset") && (get("task") || get("depth"))) {
    const auto* t = get("task");
    const auto* d = get("depth");
    if ((t && *t != (c.task == EnrollMode::single ? "single" : "multi")) ||
        (d && to_int("depth", *d) != c.depth))
      throw InvalidArgument("config: 'preset' conflicts with 'task'/'depth'");
  }

  auto resolve_path = [&](const std::filesystem::path& p) {
    return p.empty() || p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  if (const auto* o = get("output_dir")) c.output_dir = resolve_path(*o);

  for (const auto& [key, value] : map) {
    if (key == "preset" || key == "task" || key == "depth" || key == "output_dir") continue;
    const Field* field = nullptr;
    for (const auto& f : fields())
      if (f.key == key) field = &f;
    if (!field) throw InvalidArgument("config: unknown key '" + key + "'");
    field->set(c, key, value);
  }
  // A single hidden size applies to every layer.
  if (c.hidden_sizes.size() == 1 && c.depth > 1) c.hidden_sizes.assign(static_cast<std::size_t>(c.depth), c.hidden_sizes[0]);

  for (auto* p : {&c.background, &c.enroll, &c.test, &c.trials}) *p = resolve_path(*p);
  if (c.synth.enabled && !c.output_dir.empty()) {
    if (c.background.empty()) c.background = c.output_dir / "background.emb";
    if (c.enroll.empty()) c.enroll = c.output_dir / "enroll.emb";
    if (c.test.empty()) c.test = c.output_dir / "test.emb";
    if (c.trials.empty()) c.trials = c.output_dir / "trials.txt";
  }
  validate(c);
  return c;
}

std::string to_text(const ExperimentConfig& c) {
  std::string s;
  s += "task=" + std::string(c.task == EnrollMode::single ? "single" : "multi") + "\n";
  s += "depth=" + std::to_string(c.depth) + "\n";
  for (const auto& f : fields()) s += f.key + "=" + f.get(c) + "\n";
  return s;
}

std::string config_hash(const ExperimentConfig& c) {
  // Input paths under the output directory are rendered relative to it so that
  // relocating an experiment does not change its hash.
  ExperimentConfig rel = c;
  for (auto* p : {&rel.background, &rel.enroll, &rel.test, &rel.trials}) {
    auto r = p->lexically_relative(c.output_dir);
    if (!r.empty() && *r.begin() != "..") *p = std::filesystem::path("$OUT") / r;
  }
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : to_text(rel)) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace spkdnn
