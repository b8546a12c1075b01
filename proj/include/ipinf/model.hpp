#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace ipinf {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] inside the loss,
/// which bounds any single-sample loss by -log(kProbClamp).
constexpr double kProbClamp = 1e-12;

enum class ArchKind { kLinear, kMlp };

/// Architecture descriptor: either a linear classifier over `input_dim`
/// features (weights plus bias) or a fully connected network with ReLU hidden
/// layers and a single sigmoid output unit.
struct Arch {
  ArchKind kind = ArchKind::kLinear;
  int input_dim = 0;
  std::vector<int> hidden;  // hidden layer widths, MLP only

  static Arch linear(int input_dim);
  static Arch mlp(int input_dim, std::vector<int> hidden);

  int param_count() const;
  std::string describe() const;

  bool operator==(const Arch&) const = default;
};

/// Flat parameter vector paired with the architecture that interprets it.
/// Layout: per layer, row-major weight matrix followed by the bias vector.
/// For the linear case: [w_0 .. w_{d-1}, b].
struct ParamVector {
  Eigen::VectorXd values;
  Arch arch;
};

enum class GradOrigin { kSingleSample, kValidationAggregate, kFairnessObjective };

struct GradientVector {
  Eigen::VectorXd values;
  GradOrigin origin = GradOrigin::kSingleSample;
};

struct HessianMatrix {
  Eigen::MatrixXd values;
  double damping = 0.0;
};

double sigmoid(double z);

/// Pre-sigmoid output of the model on one sample.
double logit(const ParamVector& theta, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Predicted probability of the positive class.
double predict_prob(const ParamVector& theta, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Row-wise predicted probabilities.
Eigen::VectorXd predict_probs(const ParamVector& theta,
                              const Eigen::Ref<const Eigen::MatrixXd>& X);

/// Binary cross-entropy of one sample, y in {0, 1}.
double loss(const ParamVector& theta, const Eigen::Ref<const Eigen::VectorXd>& x, int y);

/// d logit / d theta for one sample.
Eigen::VectorXd logit_grad(const ParamVector& theta,
                           const Eigen::Ref<const Eigen::VectorXd>& x);

/// Analytic loss gradient for one sample: (p - y) * dlogit/dtheta.
GradientVector per_sample_grad(const ParamVector& theta,
                               const Eigen::Ref<const Eigen::VectorXd>& x, int y);

/// Sum of per-sample loss gradients over all rows. Rejects empty input.
GradientVector batch_grad(const ParamVector& theta,
                          const Eigen::Ref<const Eigen::MatrixXd>& X,
                          const Eigen::Ref<const Eigen::VectorXi>& y);

/// Exact loss Hessian, linear architecture only:
///   sum_i p_i (1 - p_i) a_i a_i^T + weight_decay * I + lambda * I
/// with a_i = [x_i; 1]. Symmetric by construction; positive definite for
/// lambda > 0 since the data term is positive semi-definite.
HessianMatrix hessian(const ParamVector& theta,
                      const Eigen::Ref<const Eigen::MatrixXd>& X,
                      const Eigen::Ref<const Eigen::VectorXi>& y, double lambda,
                      double weight_decay = 0.0);

std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t basis = 14695981039346656037ull);

/// Stable 16-hex-digit digest of architecture plus parameter bytes.
std::string fingerprint(const ParamVector& theta);

}  // namespace ipinf
