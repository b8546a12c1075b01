#include "ipinf/curation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "ipinf/errors.hpp"
#include "ipinf/metrics.hpp"

namespace ipinf {

namespace {

int bottom_count(double fraction, int n) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("curation fraction must lie in [0, 1]");
  return static_cast<int>(std::floor(fraction * n + 1e-9));
}

// (key, id) pairs sorted so the most detrimental sample comes first.
std::vector<std::pair<double, SampleId>> detriment_order(const InfluenceReport& report) {
  const double polarity = higher_score_is_detrimental(report.method) ? -1.0 : 1.0;
  std::vector<std::pair<double, SampleId>> keyed;
  keyed.reserve(report.scores.size());
  for (const auto& [id, s] : report.scores) keyed.emplace_back(polarity * s, id);
  std::sort(keyed.begin(), keyed.end());
  return keyed;
}

}  // namespace

std::string action_name(CurationAction a) {
  switch (a) {
    case CurationAction::kTrim: return "trim";
    case CurationAction::kRelabel: return "relabel";
    case CurationAction::kReweight: return "reweight";
  }
  return "unknown";
}

CurationAction parse_action(const std::string& name) {
  if (name == "trim") return CurationAction::kTrim;
  if (name == "relabel") return CurationAction::kRelabel;
  if (name == "reweight") return CurationAction::kReweight;
  throw UsageError("unknown curation action '" + name + "'");
}

std::vector<SampleId> rank_bottom(const InfluenceReport& report, double fraction) {
  const auto keyed = detriment_order(report);
  const int m = bottom_count(fraction, static_cast<int>(keyed.size()));
  std::vector<SampleId> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) out.push_back(keyed[static_cast<std::size_t>(i)].second);
  return out;
}

std::vector<SampleId> joint_rank(const InfluenceReport& a, const InfluenceReport& b,
                                 double fraction) {
  if (a.scores.size() != b.scores.size())
    throw std::invalid_argument("joint ranking needs reports over the same samples");
  std::map<SampleId, long> combined;
  for (const InfluenceReport* rep : {&a, &b}) {
    const auto keyed = detriment_order(*rep);
    for (std::size_t r = 0; r < keyed.size(); ++r) {
      if (rep == &a && b.scores.find(keyed[r].second) == b.scores.end())
        throw std::invalid_argument("joint ranking needs reports over the same samples");
      combined[keyed[r].second] += static_cast<long>(r);
    }
  }
  std::vector<std::pair<long, SampleId>> keyed;
  keyed.reserve(combined.size());
  for (const auto& [id, rank_sum] : combined) keyed.emplace_back(rank_sum, id);
  std::sort(keyed.begin(), keyed.end());

  const int m = bottom_count(fraction, static_cast<int>(keyed.size()));
  std::vector<SampleId> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) out.push_back(keyed[static_cast<std::size_t>(i)].second);
  return out;
}

Dataset apply_trim(const Dataset& ds, const std::vector<SampleId>& ids) {
  validate_dataset(ds);
  std::unordered_set<SampleId> drop(ids.begin(), ids.end());
  if (drop.size() != ids.size()) throw std::invalid_argument("duplicate ids in trim list");
  for (SampleId id : ids) ds.position_of(id);  // throws on unknown id
  std::vector<int> keep;
  keep.reserve(static_cast<std::size_t>(ds.n()));
  for (int i = 0; i < ds.n(); ++i)
    if (!drop.count(ds.ids[static_cast<std::size_t>(i)])) keep.push_back(i);
  return ds.rows(keep);
}

Dataset apply_relabel(const Dataset& ds, const std::vector<SampleId>& ids) {
  validate_dataset(ds);
  Dataset out = ds;
  std::unordered_set<SampleId> flip(ids.begin(), ids.end());
  if (flip.size() != ids.size()) throw std::invalid_argument("duplicate ids in relabel list");
  for (SampleId id : ids) {
    const int pos = ds.position_of(id);
    out.labels(pos) = 1 - out.labels(pos);
  }
  return out;
}

std::pair<Dataset, Eigen::VectorXd> apply_reweight(const Dataset& ds,
                                                   const InfluenceReport& report,
                                                   double temperature) {
  validate_dataset(ds);
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  if (report.scores.size() != static_cast<std::size_t>(ds.n()))
    throw std::invalid_argument("score report does not cover the dataset");

  const int n = ds.n();
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) {
    const auto it = report.scores.find(ds.ids[static_cast<std::size_t>(i)]);
    if (it == report.scores.end())
      throw std::invalid_argument("score report does not cover the dataset");
    z(i) = it->second;
  }
  if (higher_score_is_detrimental(report.method)) z = -z;

  const double mean = z.mean();
  const double sd = std::sqrt((z.array() - mean).square().sum() / n);
  Eigen::VectorXd weights;
  if (sd == 0.0) {
    weights = Eigen::VectorXd::Ones(n);
  } else {
    z = (z.array() - mean) / sd;
    const Eigen::ArrayXd shifted = (z.array() / temperature) - (z.maxCoeff() / temperature);
    const Eigen::ArrayXd ex = shifted.exp();
    weights = (static_cast<double>(n) * ex / ex.sum()).matrix();
  }
  return {ds, std::move(weights)};
}

InfluenceReport score_training_set(const TrainResult& tr, const Dataset& train,
                                   const Dataset& val, const ScoringSpec& spec,
                                   const TrainConfig& cfg) {
  const ParamVector& theta = tr.final_params;
  switch (spec.method) {
    case Method::kIp:
      switch (spec.objective) {
        case Objective::kUtility: return ip_utility(theta, train, val);
        case Objective::kFairness: return ip_fairness(theta, train, val);
        case Objective::kRobustness: return ip_robustness(theta, train, val);
      }
      break;
    case Method::kIpFair:
      return ip_fairness(theta, train, val);
    case Method::kIpRobust:
      return ip_robustness(theta, train, val);
    case Method::kExact:
      switch (spec.objective) {
        case Objective::kUtility:
          return exact_influence(theta, train, val, spec.lambda, spec.weight_decay);
        case Objective::kFairness:
          return exact_fairness_influence(theta, train, val, spec.lambda, spec.weight_decay);
        case Objective::kRobustness:
          return exact_robustness_influence(theta, train, val, spec.lambda, spec.weight_decay);
      }
      break;
    case Method::kSelfIp:
      return self_influence(theta, train);
    case Method::kLissa:
      return lissa_influence(theta, train, val, spec.lissa);
    case Method::kIpEnsemble: {
      const std::vector<ParamVector> members =
          generate_param_sets(theta, tr.checkpoints, train, spec.ensemble, cfg);
      InfluenceReport report = ensemble_influence(members, train, val, spec.objective);
      report.ensemble = spec.ensemble;
      return report;
    }
  }
  throw std::invalid_argument("unknown scoring method");
}

EvalRecord curate_retrain_eval(const Dataset& train_set, const Dataset& val,
                               const Dataset& test, const Arch& arch,
                               const ScoringSpec& spec, CurationAction action,
                               double fraction, double temperature, const TrainConfig& cfg,
                               const NoiseRecord* noise) {
  const auto started = std::chrono::steady_clock::now();

  const TrainResult tr = train(train_set, arch, cfg);
  EvalRecord rec;
  rec.method = method_name(spec.method);
  rec.objective = objective_name(spec.objective);
  rec.action = action_name(action);
  rec.fraction = fraction;
  rec.seed = cfg.seed;
  rec.acc_pre = accuracy(tr.final_params, test);
  const bool track_fairness = test.group.has_value() &&
                              (test.group->array() == 1).count() > 0 &&
                              (test.group->array() == 0).count() > 0;
  if (track_fairness) rec.fair_pre = dp_gap(tr.final_params, test);

  const InfluenceReport report = score_training_set(tr, train_set, val, spec, cfg);

  Dataset curated = train_set;
  Eigen::VectorXd weights;
  const Eigen::VectorXd* weights_ptr = nullptr;
  std::vector<SampleId> selected;
  switch (action) {
    case CurationAction::kTrim:
      selected = rank_bottom(report, fraction);
      curated = apply_trim(train_set, selected);
      break;
    case CurationAction::kRelabel:
      selected = rank_bottom(report, fraction);
      curated = apply_relabel(train_set, selected);
      break;
    case CurationAction::kReweight: {
      auto [ds, w] = apply_reweight(train_set, report, temperature);
      curated = std::move(ds);
      weights = std::move(w);
      weights_ptr = &weights;
      break;
    }
  }
  if (noise && !selected.empty()) {
    const DetectionMetrics dm =
        detection_metrics(selected, *noise, static_cast<int>(selected.size()));
    rec.recall_at_k = dm.recall;
    rec.k = dm.k;
  }

  const TrainResult retrained = train(curated, arch, cfg, weights_ptr);
  rec.acc_post = accuracy(retrained.final_params, test);
  if (track_fairness) rec.fair_post = dp_gap(retrained.final_params, test);

  rec.runtime_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - started)
                       .count();
  return rec;
}

}  // namespace ipinf
