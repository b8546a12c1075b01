#include "ipinf/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ipinf/errors.hpp"

namespace ipinf {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  const std::string last = trim(cur);
  if (!last.empty() || !out.empty()) out.push_back(last);
  out.erase(std::remove(out.begin(), out.end(), std::string{}), out.end());
  return out;
}

[[noreturn]] void bad_field(const std::string& section, const std::string& key,
                            const std::string& value, const char* expected) {
  throw UsageError("invalid config field '" + section + "." + key + "': expected " + expected +
                   ", found '" + value + "'");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

void ConfigMap::set(const std::string& section, const std::string& key,
                    const std::string& value) {
  sections_[section][key] = value;
}

bool ConfigMap::has(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

std::string ConfigMap::get_string(const std::string& section, const std::string& key,
                                  const std::string& fallback) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return fallback;
  const auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

double ConfigMap::get_real(const std::string& section, const std::string& key,
                           double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_string(section, key, "");
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) bad_field(section, key, v, "a real");
  return out;
}

int ConfigMap::get_int(const std::string& section, const std::string& key,
                       int fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_string(section, key, "");
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) bad_field(section, key, v, "an integer");
  return out;
}

bool ConfigMap::get_bool(const std::string& section, const std::string& key,
                         bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_string(section, key, "");
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_field(section, key, v, "a boolean");
}

std::vector<double> ConfigMap::get_real_list(const std::string& section,
                                             const std::string& key,
                                             const std::vector<double>& fallback) const {
  if (!has(section, key)) return fallback;
  std::vector<double> out;
  for (const std::string& item : split_list(get_string(section, key, ""))) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || ptr != item.data() + item.size())
      bad_field(section, key, item, "a comma-separated real list");
    out.push_back(v);
  }
  if (out.empty()) bad_field(section, key, "", "a non-empty list");
  return out;
}

std::vector<std::string> ConfigMap::get_string_list(
    const std::string& section, const std::string& key,
    const std::vector<std::string>& fallback) const {
  if (!has(section, key)) return fallback;
  std::vector<std::string> out = split_list(get_string(section, key, ""));
  if (out.empty()) bad_field(section, key, "", "a non-empty list");
  return out;
}

std::string ConfigMap::echo() const {
  std::string out;
  for (const auto& [section, kv] : sections_) {
    out += "[" + section + "]\n";
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    out += "\n";
  }
  return out;
}

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap cfg;
  std::istringstream in(text);
  std::string line, section;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw UsageError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw UsageError("config line " + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw UsageError("config line " + std::to_string(lineno) + ": empty key");
    cfg.set(section, key, trim(line.substr(eq + 1)));
  }
  return cfg;
}

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

SplitData build_dataset(const DataConfig& cfg, std::uint64_t seed) {
  if (cfg.n_train <= 0 || cfg.n_val <= 0 || cfg.n_test <= 0)
    throw UsageError("invalid config field 'data.n_*': sample counts must be positive");

  SplitData out;
  const int n_eval = cfg.n_val + cfg.n_test;
  if (cfg.dataset == "blobs") {
    auto [tr, rest] = make_blobs(cfg.n_train, n_eval, cfg.separation, seed);
    out.train = std::move(tr);
    auto [val, test] = rest.split(cfg.n_val);
    out.val = std::move(val);
    out.test = std::move(test);
  } else if (cfg.dataset == "moons") {
    auto [tr, rest] = make_half_moons(cfg.n_train, n_eval, cfg.noise_std, seed);
    out.train = std::move(tr);
    auto [val, test] = rest.split(cfg.n_val);
    out.val = std::move(val);
    out.test = std::move(test);
  } else if (cfg.dataset == "gauss2") {
    auto sample = [&](int n, std::uint64_t s, SampleId offset) {
      GaussianPairSpec spec;
      spec.center0 = {cfg.center0_x, cfg.center0_y};
      spec.center1 = {cfg.center1_x, cfg.center1_y};
      spec.sigma0 = cfg.sigma0;
      spec.sigma1 = cfg.sigma1;
      spec.n1 = static_cast<int>(std::lround(n * cfg.class1_share));
      spec.n1 = std::clamp(spec.n1, 1, n - 1);
      spec.n0 = n - spec.n1;
      return make_gaussian_pair(spec, s, offset);
    };
    out.train = sample(cfg.n_train, seed, 0);
    Dataset rest = sample(n_eval, mix_seed(seed, 1), cfg.n_train);
    auto [val, test] = rest.split(cfg.n_val);
    out.val = std::move(val);
    out.test = std::move(test);
  } else {
    throw UsageError("invalid config field 'data.dataset': unknown kind '" + cfg.dataset + "'");
  }

  if (cfg.with_groups) {
    out.train = assign_groups(out.train, cfg.group_p1, cfg.group_p0, mix_seed(seed, 2));
    out.val = assign_groups(out.val, cfg.group_p1, cfg.group_p0, mix_seed(seed, 3));
    out.test = assign_groups(out.test, cfg.group_p1, cfg.group_p0, mix_seed(seed, 4));
  }
  if (cfg.flips > 0) {
    auto [noisy, record] =
        flip_labels(out.train, cfg.flips, cfg.flips_per_class, mix_seed(seed, 5));
    out.train = std::move(noisy);
    out.noise = std::move(record);
  }
  return out;
}

Arch ModelConfig::make_arch(int input_dim) const {
  if (arch == "linear") return Arch::linear(input_dim);
  if (arch == "mlp") return Arch::mlp(input_dim, hidden);
  throw UsageError("invalid config field 'model.arch': unknown kind '" + arch + "'");
}

namespace {

DataConfig read_data_config(const ConfigMap& cfg, const DataConfig& defaults) {
  DataConfig d = defaults;
  d.dataset = cfg.get_string("data", "dataset", d.dataset);
  d.n_train = cfg.get_int("data", "n_train", d.n_train);
  d.n_val = cfg.get_int("data", "n_val", d.n_val);
  d.n_test = cfg.get_int("data", "n_test", d.n_test);
  d.separation = cfg.get_real("data", "separation", d.separation);
  d.noise_std = cfg.get_real("data", "noise_std", d.noise_std);
  d.center0_x = cfg.get_real("data", "center0_x", d.center0_x);
  d.center0_y = cfg.get_real("data", "center0_y", d.center0_y);
  d.center1_x = cfg.get_real("data", "center1_x", d.center1_x);
  d.center1_y = cfg.get_real("data", "center1_y", d.center1_y);
  d.sigma0 = cfg.get_real("data", "sigma0", d.sigma0);
  d.sigma1 = cfg.get_real("data", "sigma1", d.sigma1);
  d.class1_share = cfg.get_real("data", "class1_share", d.class1_share);
  d.flips = cfg.get_int("data", "flips", d.flips);
  d.flips_per_class = cfg.get_bool("data", "flips_per_class", d.flips_per_class);
  d.with_groups = cfg.get_bool("data", "with_groups", d.with_groups);
  d.group_p1 = cfg.get_real("data", "group_p1", d.group_p1);
  d.group_p0 = cfg.get_real("data", "group_p0", d.group_p0);
  return d;
}

ModelConfig read_model_config(const ConfigMap& cfg, const ModelConfig& defaults) {
  ModelConfig m = defaults;
  m.arch = cfg.get_string("model", "arch", m.arch);
  if (cfg.has("model", "hidden")) {
    m.hidden.clear();
    for (const std::string& h : cfg.get_string_list("model", "hidden", {})) {
      int v = 0;
      const auto [ptr, ec] = std::from_chars(h.data(), h.data() + h.size(), v);
      if (ec != std::errc{} || ptr != h.data() + h.size() || v <= 0)
        throw UsageError("invalid config field 'model.hidden': expected positive widths");
      m.hidden.push_back(v);
    }
  }
  return m;
}

TrainConfig read_train_config(const ConfigMap& cfg, const TrainConfig& defaults) {
  TrainConfig t = defaults;
  t.learning_rate = cfg.get_real("train", "learning_rate", t.learning_rate);
  t.epochs = cfg.get_int("train", "epochs", t.epochs);
  t.batch_size = cfg.get_int("train", "batch_size", t.batch_size);
  t.weight_decay = cfg.get_real("train", "weight_decay", t.weight_decay);
  t.checkpoint_stride = cfg.get_int("train", "checkpoint_stride", t.checkpoint_stride);
  return t;
}

EnsembleSpec read_ensemble_spec(const ConfigMap& cfg, const CliOverrides& cli,
                                const EnsembleSpec& defaults) {
  EnsembleSpec e = defaults;
  const std::string strategy = cfg.get_string("ensemble", "strategy", "dropout");
  if (strategy == "checkpoint")
    e.strategy = EnsembleStrategy::kCheckpoint;
  else if (strategy == "extra_sgd")
    e.strategy = EnsembleStrategy::kExtraSgd;
  else if (strategy == "dropout")
    e.strategy = EnsembleStrategy::kDropout;
  else
    throw UsageError("invalid config field 'ensemble.strategy': unknown kind '" + strategy +
                     "'");
  e.size = cfg.get_int("ensemble", "size", e.size);
  e.dropout_lo = cfg.get_real("ensemble", "dropout_lo", e.dropout_lo);
  e.dropout_hi = cfg.get_real("ensemble", "dropout_hi", e.dropout_hi);
  e.extra_sgd_steps = cfg.get_int("ensemble", "extra_sgd_steps", e.extra_sgd_steps);
  if (cli.ensemble_size) e.size = *cli.ensemble_size;
  if (cli.dropout) {
    e.dropout_lo = cli.dropout->first;
    e.dropout_hi = cli.dropout->second;
  }
  return e;
}

LissaConfig read_lissa_config(const ConfigMap& cfg, double lambda,
                              const LissaConfig& defaults) {
  LissaConfig l = defaults;
  l.depth = cfg.get_int("lissa", "depth", l.depth);
  l.repeats = cfg.get_int("lissa", "repeats", l.repeats);
  l.scale = cfg.get_real("lissa", "scale", l.scale);
  l.damping = cfg.get_real("lissa", "damping", lambda);
  return l;
}

std::vector<Method> read_methods(const ConfigMap& cfg, const CliOverrides& cli,
                                 const std::string& section,
                                 const std::vector<Method>& defaults) {
  if (cli.method) return {parse_method(*cli.method)};
  if (!cfg.has(section, "methods")) return defaults;
  std::vector<Method> out;
  for (const std::string& name : cfg.get_string_list(section, "methods", {}))
    out.push_back(parse_method(name));
  return out;
}

std::vector<CurationAction> read_actions(const ConfigMap& cfg, const std::string& section,
                                         const std::vector<CurationAction>& defaults) {
  if (!cfg.has(section, "actions")) return defaults;
  std::vector<CurationAction> out;
  for (const std::string& name : cfg.get_string_list(section, "actions", {}))
    out.push_back(parse_action(name));
  return out;
}

}  // namespace

void apply_overrides(ConfigMap& cfg, const CliOverrides& cli) {
  auto real_text = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  if (!cli.seeds.empty()) {
    std::string joined;
    for (std::uint64_t s : cli.seeds) {
      if (!joined.empty()) joined += ",";
      joined += std::to_string(s);
    }
    cfg.set("run", "seeds", joined);
  }
  if (cli.method) {
    cfg.set("curate", "methods", *cli.method);
    cfg.set("defend", "methods", *cli.method);
  }
  if (cli.fraction) {
    cfg.set("curate", "fractions", real_text(*cli.fraction));
    cfg.set("defend", "fraction", real_text(*cli.fraction));
  }
  if (cli.gamma) cfg.set("attack", "gamma", real_text(*cli.gamma));
  if (cli.attack_frac) cfg.set("attack", "fractions", real_text(*cli.attack_frac));
  if (cli.ensemble_size) cfg.set("ensemble", "size", std::to_string(*cli.ensemble_size));
  if (cli.dropout) {
    cfg.set("ensemble", "dropout_lo", real_text(cli.dropout->first));
    cfg.set("ensemble", "dropout_hi", real_text(cli.dropout->second));
  }
}

std::vector<std::uint64_t> run_seeds(const ConfigMap& cfg, const CliOverrides& cli) {
  if (!cli.seeds.empty()) return cli.seeds;
  std::vector<std::uint64_t> seeds;
  for (double s : cfg.get_real_list("run", "seeds", {1.0})) {
    if (s < 0.0 || s != std::floor(s))
      throw UsageError("invalid config field 'run.seeds': expected non-negative integers");
    seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (seeds.empty()) throw UsageError("invalid config field 'run.seeds': list is empty");
  return seeds;
}

VerifyConfig make_verify_config(const ConfigMap& cfg, const CliOverrides& cli) {
  VerifyConfig v;
  DataConfig data_defaults;
  data_defaults.dataset = "blobs";
  data_defaults.n_train = 150;
  data_defaults.n_val = 100;
  data_defaults.n_test = 100;
  data_defaults.flips = 10;
  v.data = read_data_config(cfg, data_defaults);

  ModelConfig model_defaults;
  model_defaults.arch = v.data.dataset == "moons" ? "mlp" : "linear";
  v.model = read_model_config(cfg, model_defaults);

  TrainConfig train_defaults;
  train_defaults.learning_rate = v.model.arch == "mlp" ? 0.1 : 0.3;
  train_defaults.epochs = v.model.arch == "mlp" ? 400 : 250;
  train_defaults.batch_size = 32;
  train_defaults.weight_decay = 1e-3;
  train_defaults.checkpoint_stride = 50;
  v.train = read_train_config(cfg, train_defaults);

  v.lambda = cfg.get_real("influence", "lambda", 1e-2);
  v.modes = cfg.get_string_list("influence", "modes", {"utility"});
  for (const std::string& mode : v.modes)
    if (mode != "utility" && mode != "fairness" && mode != "robustness")
      throw UsageError("invalid config field 'influence.modes': unknown mode '" + mode + "'");
  v.gamma = cli.gamma ? *cli.gamma : cfg.get_real("attack", "gamma", 2.0);
  v.lissa = read_lissa_config(cfg, v.lambda, {});
  v.run_lissa = cfg.get_bool("influence", "lissa", false);
  v.save_checkpoints = cfg.get_bool("output", "save_checkpoints", false);

  const bool needs_fairness =
      std::find(v.modes.begin(), v.modes.end(), "fairness") != v.modes.end();
  if (needs_fairness) v.data.with_groups = true;
  return v;
}

CurateConfig make_curate_config(const ConfigMap& cfg, const CliOverrides& cli) {
  CurateConfig c;
  DataConfig data_defaults;
  data_defaults.dataset = "moons";
  data_defaults.n_train = 200;
  data_defaults.n_val = 100;
  data_defaults.n_test = 100;
  data_defaults.noise_std = 0.1;
  data_defaults.flips = 20;
  c.data = read_data_config(cfg, data_defaults);

  ModelConfig model_defaults;
  model_defaults.arch = c.data.dataset == "moons" ? "mlp" : "linear";
  c.model = read_model_config(cfg, model_defaults);

  TrainConfig train_defaults;
  train_defaults.learning_rate = c.model.arch == "mlp" ? 0.1 : 0.3;
  train_defaults.epochs = c.model.arch == "mlp" ? 400 : 250;
  train_defaults.batch_size = 32;
  train_defaults.weight_decay = 1e-3;
  train_defaults.checkpoint_stride = 50;
  c.train = read_train_config(cfg, train_defaults);

  c.methods = read_methods(cfg, cli, "curate", {Method::kIp});
  c.actions = read_actions(cfg, "curate", {CurationAction::kTrim});
  c.fractions = cli.fraction ? std::vector<double>{*cli.fraction}
                             : cfg.get_real_list("curate", "fractions", {0.05});
  c.temperature = cfg.get_real("curate", "temperature", 1.0);
  c.lambda = cfg.get_real("influence", "lambda", 1e-2);
  c.ensemble = read_ensemble_spec(cfg, cli, {});
  c.lissa = read_lissa_config(cfg, c.lambda, {});
  return c;
}

DefendConfig make_defend_config(const ConfigMap& cfg, const CliOverrides& cli) {
  DefendConfig d;
  DataConfig data_defaults;
  data_defaults.dataset = "gauss2";
  data_defaults.n_train = 200;
  data_defaults.n_val = 150;
  data_defaults.n_test = 200;
  d.data = read_data_config(cfg, data_defaults);

  ModelConfig model_defaults;
  model_defaults.arch = "linear";
  d.model = read_model_config(cfg, model_defaults);
  if (d.model.arch != "linear")
    throw UsageError("invalid config field 'model.arch': attack evaluation is linear-only");

  TrainConfig train_defaults;
  train_defaults.learning_rate = 0.3;
  train_defaults.epochs = 1000;
  train_defaults.batch_size = 32;
  // No decay: the boundary must be free to follow the reweighted data.
  train_defaults.weight_decay = 0.0;
  train_defaults.checkpoint_stride = 250;
  d.train = read_train_config(cfg, train_defaults);

  d.gamma = cli.gamma ? *cli.gamma : cfg.get_real("attack", "gamma", 2.0);
  d.attack_fractions = cli.attack_frac
                           ? std::vector<double>{*cli.attack_frac}
                           : cfg.get_real_list("attack", "fractions",
                                               {0.05, 0.10, 0.15, 0.20, 0.25});
  d.draws = cfg.get_int("attack", "draws", 10);
  if (d.draws <= 0) throw UsageError("invalid config field 'attack.draws': must be positive");

  d.methods = read_methods(cfg, cli, "defend", {Method::kIp});
  d.actions = read_actions(cfg, "defend",
                           {CurationAction::kTrim, CurationAction::kRelabel,
                            CurationAction::kReweight});
  d.trim_fraction = cli.fraction ? *cli.fraction : cfg.get_real("defend", "fraction", 0.05);
  d.temperature = cfg.get_real("defend", "temperature", 1.0);
  d.lambda = cfg.get_real("influence", "lambda", 1e-2);
  d.ensemble = read_ensemble_spec(cfg, cli, {});
  d.lissa = read_lissa_config(cfg, d.lambda, {});
  return d;
}

}  // namespace ipinf
