#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ipinf/curation.hpp"
#include "ipinf/dataset.hpp"
#include "ipinf/influence.hpp"
#include "ipinf/train.hpp"

namespace ipinf {

/// Flat key-value configuration grouped into [sections]. Lines hold
/// `key = value`; `#` and `;` start comments. Lookups that fail to parse
/// raise UsageError naming `section.key`.
class ConfigMap {
 public:
  void set(const std::string& section, const std::string& key, const std::string& value);
  bool has(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_real(const std::string& section, const std::string& key, double fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> get_real_list(const std::string& section, const std::string& key,
                                    const std::vector<double>& fallback) const;
  std::vector<std::string> get_string_list(const std::string& section, const std::string& key,
                                           const std::vector<std::string>& fallback) const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return sections_;
  }

  /// Normalized text form with sorted sections and keys.
  std::string echo() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);

/// Synthetic data recipe shared by the experiment pipelines.
struct DataConfig {
  std::string dataset = "blobs";  // blobs | moons | gauss2
  int n_train = 150;
  int n_val = 100;
  int n_test = 100;
  double separation = 6.0;  // blobs
  double noise_std = 0.1;   // moons
  // gauss2: free cluster geometry. Defaults place a wide sparse cluster
  // against a tight dominant one, a regime where trimming by influence
  // visibly moves the decision boundary.
  double center0_x = -3.0, center0_y = 0.0;
  double center1_x = 0.0, center1_y = 0.0;
  double sigma0 = 1.6, sigma1 = 0.25;
  double class1_share = 0.85;
  int flips = 0;
  bool flips_per_class = false;
  bool with_groups = false;
  double group_p1 = 0.8;  // P(g=1 | y=1)
  double group_p0 = 0.2;  // P(g=1 | y=0)
};

struct SplitData {
  Dataset train;
  Dataset val;
  Dataset test;
  NoiseRecord noise;
};

/// Deterministic (train, val, test) triple with optional groups and train
/// label flips, derived from the recipe and seed.
SplitData build_dataset(const DataConfig& cfg, std::uint64_t seed);

struct ModelConfig {
  std::string arch = "linear";  // linear | mlp
  std::vector<int> hidden{32, 32};
  Arch make_arch(int input_dim) const;
};

struct VerifyConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  double lambda = 1e-2;
  std::vector<std::string> modes{"utility"};  // utility | fairness | robustness
  double gamma = 2.0;                         // robustness-mode crafting strength
  LissaConfig lissa;
  bool run_lissa = false;
  bool save_checkpoints = false;
};

struct CurateConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  std::vector<Method> methods{Method::kIp};
  std::vector<CurationAction> actions{CurationAction::kTrim};
  std::vector<double> fractions{0.05};
  double temperature = 1.0;
  EnsembleSpec ensemble;
  LissaConfig lissa;
  double lambda = 1e-2;
};

struct DefendConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  double gamma = 2.0;
  std::vector<double> attack_fractions{0.05, 0.10, 0.15, 0.20, 0.25};
  int draws = 10;
  std::vector<Method> methods{Method::kIp};
  std::vector<CurationAction> actions{CurationAction::kTrim, CurationAction::kRelabel,
                                      CurationAction::kReweight};
  double trim_fraction = 0.05;
  double temperature = 1.0;
  EnsembleSpec ensemble;
  LissaConfig lissa;
  double lambda = 1e-2;
};

/// Command-line overrides applied on top of the config file.
struct CliOverrides {
  std::vector<std::uint64_t> seeds;
  std::optional<std::string> method;
  std::optional<double> fraction;
  std::optional<double> gamma;
  std::optional<double> attack_frac;
  std::optional<int> ensemble_size;
  std::optional<std::pair<double, double>> dropout;
};

/// Folds the flag overrides into their canonical config keys so the echoed
/// config fully describes the run.
void apply_overrides(ConfigMap& cfg, const CliOverrides& cli);

std::vector<std::uint64_t> run_seeds(const ConfigMap& cfg, const CliOverrides& cli);
VerifyConfig make_verify_config(const ConfigMap& cfg, const CliOverrides& cli);
CurateConfig make_curate_config(const ConfigMap& cfg, const CliOverrides& cli);
DefendConfig make_defend_config(const ConfigMap& cfg, const CliOverrides& cli);

}  // namespace ipinf
