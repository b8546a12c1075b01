#include "ipinf/influence.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "ipinf/errors.hpp"

namespace ipinf {

namespace {

constexpr double kDivergenceLimit = 1e8;

void check_pair(const ParamVector& theta, const Dataset& ds) {
  validate_dataset(ds);
  if (ds.n() == 0) throw std::invalid_argument("influence scoring over an empty dataset");
  if (ds.dim() != theta.arch.input_dim)
    throw std::invalid_argument("sample dimension does not match architecture input");
}

std::map<SampleId, double> dot_scores(const Eigen::VectorXd& v, const ParamVector& theta,
                                      const Dataset& train) {
  std::map<SampleId, double> scores;
  for (int i = 0; i < train.n(); ++i) {
    Eigen::VectorXd x = train.features.row(i);
    scores[train.ids[static_cast<std::size_t>(i)]] =
        v.dot(per_sample_grad(theta, x, train.labels(i)).values);
  }
  return scores;
}

InfluenceReport make_report(Method method, Objective objective,
                            std::map<SampleId, double> scores, const ParamVector& theta) {
  InfluenceReport report;
  report.method = method;
  report.objective = objective;
  report.scores = std::move(scores);
  report.model_fingerprint = fingerprint(theta);
  return report;
}

Eigen::VectorXd damped_solve(const ParamVector& theta, const Dataset& train,
                             const Eigen::VectorXd& v, double lambda, double weight_decay) {
  if (lambda <= 0.0) throw std::invalid_argument("damping must be positive for the inverse");
  const HessianMatrix H = hessian(theta, train.features, train.labels, lambda, weight_decay);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H.values);
  if (ldlt.info() != Eigen::Success)
    throw NumericError("damped Hessian factorization failed");
  Eigen::VectorXd u = ldlt.solve(v);
  if (!u.allFinite()) throw NumericError("damped Hessian solve produced non-finite values");
  return u;
}

double gershgorin_bound(const Eigen::Ref<const Eigen::MatrixXd>& A) {
  double bound = 0.0;
  for (long i = 0; i < A.rows(); ++i) {
    const double radius = A.row(i).cwiseAbs().sum() - std::abs(A(i, i));
    bound = std::max(bound, A(i, i) + radius);
  }
  return bound;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::kExact: return "exact";
    case Method::kIp: return "ip";
    case Method::kIpFair: return "ip_fair";
    case Method::kIpRobust: return "ip_robust";
    case Method::kSelfIp: return "self_ip";
    case Method::kLissa: return "lissa";
    case Method::kIpEnsemble: return "ip_ensemble";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "exact") return Method::kExact;
  if (name == "ip") return Method::kIp;
  if (name == "ip_fair") return Method::kIpFair;
  if (name == "ip_robust") return Method::kIpRobust;
  if (name == "self_ip") return Method::kSelfIp;
  if (name == "lissa") return Method::kLissa;
  if (name == "ip_ensemble") return Method::kIpEnsemble;
  throw UsageError("unknown scoring method '" + name + "'");
}

std::string objective_name(Objective o) {
  switch (o) {
    case Objective::kUtility: return "utility";
    case Objective::kFairness: return "fairness";
    case Objective::kRobustness: return "robustness";
  }
  return "unknown";
}

bool higher_score_is_detrimental(Method m) { return m == Method::kSelfIp; }

GradientVector fairness_grad(const ParamVector& theta, const Dataset& val) {
  check_pair(theta, val);
  if (!val.group)
    throw std::invalid_argument("fairness objective requires a group attribute");

  const Eigen::VectorXi& g = *val.group;
  const int n1 = (g.array() == 1).count();
  const int n0 = val.n() - n1;
  if (n0 == 0 || n1 == 0)
    throw std::invalid_argument("fairness objective requires both groups non-empty");

  double mean1 = 0.0, mean0 = 0.0;
  Eigen::VectorXd grad1 = Eigen::VectorXd::Zero(theta.values.size());
  Eigen::VectorXd grad0 = Eigen::VectorXd::Zero(theta.values.size());
  for (int i = 0; i < val.n(); ++i) {
    Eigen::VectorXd x = val.features.row(i);
    const double p = predict_prob(theta, x);
    const Eigen::VectorXd dp = p * (1.0 - p) * logit_grad(theta, x);
    if (g(i) == 1) {
      mean1 += p;
      grad1 += dp;
    } else {
      mean0 += p;
      grad0 += dp;
    }
  }
  mean1 /= n1;
  mean0 /= n0;
  grad1 /= n1;
  grad0 /= n0;

  const double gap = mean1 - mean0;
  const double sign = gap > 0.0 ? 1.0 : (gap < 0.0 ? -1.0 : 0.0);
  return {sign * (grad1 - grad0), GradOrigin::kFairnessObjective};
}

GradientVector objective_gradient(const ParamVector& theta, const Dataset& val,
                                  Objective objective) {
  if (objective == Objective::kFairness) return fairness_grad(theta, val);
  check_pair(theta, val);
  return batch_grad(theta, val.features, val.labels);
}

InfluenceReport ip_utility(const ParamVector& theta, const Dataset& train,
                           const Dataset& val) {
  check_pair(theta, train);
  const GradientVector v = objective_gradient(theta, val, Objective::kUtility);
  return make_report(Method::kIp, Objective::kUtility, dot_scores(v.values, theta, train),
                     theta);
}

InfluenceReport exact_influence(const ParamVector& theta, const Dataset& train,
                                const Dataset& val, double lambda, double weight_decay) {
  check_pair(theta, train);
  const GradientVector v = objective_gradient(theta, val, Objective::kUtility);
  const Eigen::VectorXd u = damped_solve(theta, train, v.values, lambda, weight_decay);
  return make_report(Method::kExact, Objective::kUtility, dot_scores(u, theta, train), theta);
}

InfluenceReport ip_fairness(const ParamVector& theta, const Dataset& train,
                            const Dataset& val) {
  check_pair(theta, train);
  const GradientVector v = fairness_grad(theta, val);
  return make_report(Method::kIpFair, Objective::kFairness, dot_scores(v.values, theta, train),
                     theta);
}

InfluenceReport exact_fairness_influence(const ParamVector& theta, const Dataset& train,
                                         const Dataset& val, double lambda,
                                         double weight_decay) {
  check_pair(theta, train);
  const GradientVector v = fairness_grad(theta, val);
  const Eigen::VectorXd u = damped_solve(theta, train, v.values, lambda, weight_decay);
  return make_report(Method::kExact, Objective::kFairness, dot_scores(u, theta, train), theta);
}

InfluenceReport ip_robustness(const ParamVector& theta, const Dataset& train,
                              const Dataset& val_adv) {
  check_pair(theta, train);
  const GradientVector v = objective_gradient(theta, val_adv, Objective::kRobustness);
  return make_report(Method::kIpRobust, Objective::kRobustness,
                     dot_scores(v.values, theta, train), theta);
}

InfluenceReport exact_robustness_influence(const ParamVector& theta, const Dataset& train,
                                           const Dataset& val_adv, double lambda,
                                           double weight_decay) {
  check_pair(theta, train);
  const GradientVector v = objective_gradient(theta, val_adv, Objective::kRobustness);
  const Eigen::VectorXd u = damped_solve(theta, train, v.values, lambda, weight_decay);
  return make_report(Method::kExact, Objective::kRobustness, dot_scores(u, theta, train),
                     theta);
}

InfluenceReport self_influence(const ParamVector& theta, const Dataset& train) {
  check_pair(theta, train);
  std::map<SampleId, double> scores;
  for (int i = 0; i < train.n(); ++i) {
    Eigen::VectorXd x = train.features.row(i);
    scores[train.ids[static_cast<std::size_t>(i)]] =
        per_sample_grad(theta, x, train.labels(i)).values.squaredNorm();
  }
  return make_report(Method::kSelfIp, Objective::kUtility, std::move(scores), theta);
}

Eigen::VectorXd lissa_solve(const Eigen::Ref<const Eigen::MatrixXd>& damped,
                            const Eigen::Ref<const Eigen::VectorXd>& v,
                            const LissaConfig& cfg) {
  if (damped.rows() != damped.cols()) throw std::invalid_argument("matrix must be square");
  if (damped.rows() != v.size()) throw std::invalid_argument("vector length must match matrix");
  if (cfg.depth <= 0) throw std::invalid_argument("iteration depth must be positive");
  if (cfg.repeats <= 0) throw std::invalid_argument("repeat count must be positive");
  if (cfg.scale < 0.0) throw std::invalid_argument("scale must be non-negative");

  const double scale = cfg.scale > 0.0 ? cfg.scale : 1.0 / gershgorin_bound(damped);
  if (!std::isfinite(scale) || scale <= 0.0)
    throw NumericError("iteration scale could not be derived from the matrix");

  Eigen::VectorXd accum = Eigen::VectorXd::Zero(v.size());
  for (int r = 0; r < cfg.repeats; ++r) {
    Eigen::VectorXd h = v;
    for (int t = 0; t < cfg.depth; ++t) {
      Eigen::VectorXd next = v + h - scale * (damped * h);
      if (next.lpNorm<Eigen::Infinity>() > kDivergenceLimit)
        throw NumericError(
            "inverse-Hessian iteration diverged: scale * spectral_radius(damped Hessian) "
            "must stay below 1, lower the scale or raise the damping");
      const bool settled = (next - h).lpNorm<Eigen::Infinity>() <=
                           1e-15 * std::max(1.0, h.lpNorm<Eigen::Infinity>());
      h = std::move(next);
      if (settled) break;
    }
    accum += h;
  }
  return (scale / cfg.repeats) * accum;
}

GradientVector lissa_ihvp(const ParamVector& theta, const Dataset& train,
                          const GradientVector& v, const LissaConfig& cfg) {
  validate_dataset(train);
  if (train.n() > 0 && train.dim() != theta.arch.input_dim)
    throw std::invalid_argument("sample dimension does not match architecture input");
  if (v.values.size() != theta.values.size())
    throw std::invalid_argument("vector length does not match parameter count");
  if (cfg.damping <= 0.0) throw std::invalid_argument("damping must be positive");

  const HessianMatrix damped =
      hessian(theta, train.features, train.labels, cfg.damping, cfg.weight_decay);
  return {lissa_solve(damped.values, v.values, cfg), v.origin};
}

InfluenceReport lissa_influence(const ParamVector& theta, const Dataset& train,
                                const Dataset& val, const LissaConfig& cfg) {
  check_pair(theta, train);
  const GradientVector v = objective_gradient(theta, val, Objective::kUtility);
  const GradientVector u = lissa_ihvp(theta, train, v, cfg);
  return make_report(Method::kLissa, Objective::kUtility, dot_scores(u.values, theta, train),
                     theta);
}

InfluenceReport ensemble_influence(const std::vector<ParamVector>& members,
                                   const Dataset& train, const Dataset& val,
                                   Objective objective) {
  if (members.empty()) throw std::invalid_argument("ensemble requires at least one member");
  for (const ParamVector& m : members)
    if (!(m.arch == members.front().arch))
      throw std::invalid_argument("ensemble members must share one architecture");

  std::map<SampleId, double> mean_scores;
  std::uint64_t combined = 14695981039346656037ull;
  for (const ParamVector& m : members) {
    check_pair(m, train);
    const GradientVector v = objective_gradient(m, val, objective);
    for (const auto& [id, s] : dot_scores(v.values, m, train)) mean_scores[id] += s;
    const std::string fp = fingerprint(m);
    combined = fnv1a64(fp.data(), fp.size(), combined);
  }
  for (auto& [id, s] : mean_scores) s /= static_cast<double>(members.size());

  InfluenceReport report;
  report.method = Method::kIpEnsemble;
  report.objective = objective;
  report.scores = std::move(mean_scores);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(combined));
  report.model_fingerprint = buf;
  return report;
}

}  // namespace ipinf
