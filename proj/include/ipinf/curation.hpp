#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ipinf/dataset.hpp"
#include "ipinf/influence.hpp"
#include "ipinf/train.hpp"

namespace ipinf {

enum class CurationAction { kTrim, kRelabel, kReweight };

std::string action_name(CurationAction a);
CurationAction parse_action(const std::string& name);

/// The floor(fraction * n) most suspect ids, most suspect first: lowest
/// scores for alignment-style methods, highest for self-influence. Ties
/// break by ascending id.
std::vector<SampleId> rank_bottom(const InfluenceReport& report, double fraction);

/// Joint selection across two reports: each report ranks ids from most
/// detrimental (rank 0) upward, ranks are summed, and the floor(fraction * n)
/// smallest sums win; ties break by ascending id.
std::vector<SampleId> joint_rank(const InfluenceReport& a, const InfluenceReport& b,
                                 double fraction);

/// Removes the listed ids; every id must be present.
Dataset apply_trim(const Dataset& ds, const std::vector<SampleId>& ids);

/// Flips the binary label of the listed ids; applying twice restores the
/// original labels.
Dataset apply_relabel(const Dataset& ds, const std::vector<SampleId>& ids);

/// Per-sample weights w_i = n * softmax(z_i / temperature) over z-normalized
/// scores, oriented so cleaner-looking samples weigh more. Constant scores
/// give uniform weights of one. The dataset itself is returned unchanged.
std::pair<Dataset, Eigen::VectorXd> apply_reweight(const Dataset& ds,
                                                   const InfluenceReport& report,
                                                   double temperature);

/// How to score training samples inside the curation loop.
struct ScoringSpec {
  Method method = Method::kIp;
  Objective objective = Objective::kUtility;
  EnsembleSpec ensemble;
  LissaConfig lissa;
  double lambda = 1e-2;      // damping for the exact method
  double weight_decay = 0.0; // carried into Hessian-based methods
};

/// Dispatches to the estimator selected by spec.method. Ensemble methods
/// derive their parameter sets from the training result and `cfg`.
InfluenceReport score_training_set(const TrainResult& tr, const Dataset& train,
                                   const Dataset& val, const ScoringSpec& spec,
                                   const TrainConfig& cfg);

/// One curation experiment cell. Optional fields stay unset where they do
/// not apply (fairness columns without groups, detection without noise).
struct EvalRecord {
  std::string dataset;
  std::string method;
  std::string objective;
  std::string action;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  double acc_pre = 0.0;
  double acc_post = 0.0;
  std::optional<double> fair_pre;
  std::optional<double> fair_post;
  std::optional<double> recall_at_k;
  std::optional<int> k;
  double runtime_ms = 0.0;
  // Attack-evaluation extras.
  std::optional<double> gamma;
  std::optional<double> attack_fraction;
  std::optional<int> draw;
  std::optional<double> acc_attacked;
};

/// Train, score, curate floor(fraction * n) samples (or reweight all),
/// retrain under the same seed, and report accuracy and fairness before and
/// after. When `noise` is given, detection recall of the curated selection
/// is recorded.
EvalRecord curate_retrain_eval(const Dataset& train_set, const Dataset& val,
                               const Dataset& test, const Arch& arch,
                               const ScoringSpec& spec, CurationAction action,
                               double fraction, double temperature, const TrainConfig& cfg,
                               const NoiseRecord* noise = nullptr);

}  // namespace ipinf
