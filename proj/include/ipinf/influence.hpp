#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ipinf/dataset.hpp"
#include "ipinf/model.hpp"
#include "ipinf/train.hpp"

namespace ipinf {

enum class Method { kExact, kIp, kIpFair, kIpRobust, kSelfIp, kLissa, kIpEnsemble };
enum class Objective { kUtility, kFairness, kRobustness };

std::string method_name(Method m);
Method parse_method(const std::string& name);
std::string objective_name(Objective o);

/// Per-sample influence scores keyed by training-sample id. Higher means the
/// sample helps the objective; strongly negative flags it as detrimental.
/// kSelfIp inverts that polarity: large self-norms flag suspected noise.
struct InfluenceReport {
  Method method = Method::kIp;
  Objective objective = Objective::kUtility;
  std::map<SampleId, double> scores;
  std::optional<EnsembleSpec> ensemble;
  std::string model_fingerprint;
};

/// True when larger scores mean more suspect under this method.
bool higher_score_is_detrimental(Method m);

struct LissaConfig {
  int depth = 500;
  double damping = 1e-2;   // lambda added to the Hessian diagonal
  double scale = 0.0;      // 0 auto-selects 1 / (Gershgorin bound of the damped Hessian)
  int repeats = 4;
  std::uint64_t seed = 1;
  double weight_decay = 0.0;
};

/// Aggregate loss gradient of the objective over the validation set:
/// summed validation loss for kUtility/kRobustness (the robustness caller
/// passes the perturbed set), demographic-parity gap gradient for kFairness.
GradientVector objective_gradient(const ParamVector& theta, const Dataset& val,
                                  Objective objective);

/// Gradient of |mean prob(group 1) - mean prob(group 0)| over `val`; the sign
/// factor is 0 when the gap vanishes, making all downstream scores zero.
GradientVector fairness_grad(const ParamVector& theta, const Dataset& val);

/// Hessian-free influence: score(z_i) = g_val . grad(z_i) with one aggregate
/// validation gradient per call.
InfluenceReport ip_utility(const ParamVector& theta, const Dataset& train,
                           const Dataset& val);

/// Damped-inverse influence: g_val^T (H + lambda I)^{-1} grad(z_i) through a
/// single symmetric factorization and one validation-side solve.
InfluenceReport exact_influence(const ParamVector& theta, const Dataset& train,
                                const Dataset& val, double lambda,
                                double weight_decay = 0.0);

InfluenceReport ip_fairness(const ParamVector& theta, const Dataset& train,
                            const Dataset& val);
InfluenceReport exact_fairness_influence(const ParamVector& theta, const Dataset& train,
                                         const Dataset& val, double lambda,
                                         double weight_decay = 0.0);

/// Inner-product influence against an adversarially perturbed validation set.
InfluenceReport ip_robustness(const ParamVector& theta, const Dataset& train,
                              const Dataset& val_adv);
InfluenceReport exact_robustness_influence(const ParamVector& theta, const Dataset& train,
                                           const Dataset& val_adv, double lambda,
                                           double weight_decay = 0.0);

/// Validation-free score |grad(z_i)|^2.
InfluenceReport self_influence(const ParamVector& theta, const Dataset& train);

/// Truncated Neumann iteration h <- v + (I - scale * A) h on a symmetric
/// positive definite matrix, averaged over cfg.repeats runs and corrected by
/// the scale, so the return value estimates A^{-1} v. Throws NumericError
/// when the iterate norm passes 1e8 (scale too large for the spectrum).
Eigen::VectorXd lissa_solve(const Eigen::Ref<const Eigen::MatrixXd>& damped,
                            const Eigen::Ref<const Eigen::VectorXd>& v,
                            const LissaConfig& cfg);

/// Inverse-Hessian-vector product estimate (H + damping I)^{-1} v on the
/// convex model, via lissa_solve on the exact damped Hessian.
GradientVector lissa_ihvp(const ParamVector& theta, const Dataset& train,
                          const GradientVector& v, const LissaConfig& cfg);

/// Influence scores that replace the direct solve with the iterative
/// estimate; a drop-in slower baseline for exact_influence.
InfluenceReport lissa_influence(const ParamVector& theta, const Dataset& train,
                                const Dataset& val, const LissaConfig& cfg);

/// Mean of single-model inner-product scores across parameter sets:
/// score = (1/T) sum_t g_val(theta_t) . grad(z_i; theta_t).
InfluenceReport ensemble_influence(const std::vector<ParamVector>& members,
                                   const Dataset& train, const Dataset& val,
                                   Objective objective);

}  // namespace ipinf
