#include "ipinf/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ipinf {

namespace {

// Layer sizes as (in, out) pairs; the output layer is a single unit.
std::vector<std::pair<int, int>> layer_dims(const Arch& arch) {
  std::vector<std::pair<int, int>> dims;
  int in = arch.input_dim;
  for (int h : arch.hidden) {
    dims.emplace_back(in, h);
    in = h;
  }
  dims.emplace_back(in, 1);
  return dims;
}

void check_arch(const Arch& arch) {
  if (arch.input_dim <= 0) throw std::invalid_argument("architecture needs a positive input dimension");
  if (arch.kind == ArchKind::kLinear && !arch.hidden.empty())
    throw std::invalid_argument("linear architecture carries no hidden layers");
  for (int h : arch.hidden)
    if (h <= 0) throw std::invalid_argument("hidden layer widths must be positive");
}

void check_params(const ParamVector& theta) {
  check_arch(theta.arch);
  if (theta.values.size() != theta.arch.param_count())
    throw std::invalid_argument("parameter vector length does not match architecture");
}

void check_sample(const ParamVector& theta, const Eigen::Ref<const Eigen::VectorXd>& x, int y) {
  if (x.size() != theta.arch.input_dim)
    throw std::invalid_argument("sample dimension does not match architecture input");
  if (y != 0 && y != 1) throw std::invalid_argument("labels must be 0 or 1");
}

// Forward pass keeping per-layer inputs and pre-activations for backprop.
struct ForwardTrace {
  std::vector<Eigen::VectorXd> inputs;  // activation entering each layer
  std::vector<Eigen::VectorXd> preact;  // W a + b per layer
};

double mlp_forward(const ParamVector& theta, const Eigen::Ref<const Eigen::VectorXd>& x,
                   ForwardTrace* trace) {
  const auto dims = layer_dims(theta.arch);
  Eigen::VectorXd a = x;
  long off = 0;
  for (std::size_t l = 0; l < dims.size(); ++l) {
    const auto [in, out] = dims[l];
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
        theta.values.data() + off, out, in);
    off += static_cast<long>(out) * in;
    Eigen::Map<const Eigen::VectorXd> b(theta.values.data() + off, out);
    off += out;
    Eigen::VectorXd z = W * a + b;
    if (trace) {
      trace->inputs.push_back(a);
      trace->preact.push_back(z);
    }
    a = (l + 1 < dims.size()) ? z.cwiseMax(0.0).eval() : z;
  }
  return a(0);
}

// Backward pass seeded with d loss / d logit (or 1 for the raw logit).
Eigen::VectorXd mlp_backward(const ParamVector& theta, const ForwardTrace& trace,
                             double dlogit) {
  const auto dims = layer_dims(theta.arch);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.values.size());

  std::vector<long> offsets(dims.size());
  long off = 0;
  for (std::size_t l = 0; l < dims.size(); ++l) {
    offsets[l] = off;
    off += static_cast<long>(dims[l].second) * dims[l].first + dims[l].second;
  }

  Eigen::VectorXd delta(1);
  delta(0) = dlogit;
  for (std::size_t li = dims.size(); li-- > 0;) {
    const auto [in, out] = dims[li];
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
        theta.values.data() + offsets[li], out, in);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dW(
        grad.data() + offsets[li], out, in);
    Eigen::Map<Eigen::VectorXd> db(grad.data() + offsets[li] + static_cast<long>(out) * in, out);
    dW = delta * trace.inputs[li].transpose();
    db = delta;
    if (li > 0) {
      Eigen::VectorXd down = W.transpose() * delta;
      const Eigen::VectorXd& z = trace.preact[li - 1];
      delta = (z.array() > 0.0).select(down, 0.0);
    }
  }
  return grad;
}

}  // namespace

Arch Arch::linear(int input_dim) {
  Arch a;
  a.kind = ArchKind::kLinear;
  a.input_dim = input_dim;
  check_arch(a);
  return a;
}

Arch Arch::mlp(int input_dim, std::vector<int> hidden) {
  Arch a;
  a.kind = ArchKind::kMlp;
  a.input_dim = input_dim;
  a.hidden = std::move(hidden);
  check_arch(a);
  return a;
}

int Arch::param_count() const {
  if (kind == ArchKind::kLinear) return input_dim + 1;
  int total = 0;
  for (const auto& [in, out] : layer_dims(*this)) total += in * out + out;
  return total;
}

std::string Arch::describe() const {
  if (kind == ArchKind::kLinear) return "LINEAR{" + std::to_string(input_dim) + "}";
  std::string s = "MLP{" + std::to_string(input_dim);
  for (int h : hidden) s += "," + std::to_string(h);
  return s + "}";
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logit(const ParamVector& theta, const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_params(theta);
  check_sample(theta, x, 0);
  if (theta.arch.kind == ArchKind::kLinear) {
    const int d = theta.arch.input_dim;
    return theta.values.head(d).dot(x) + theta.values(d);
  }
  return mlp_forward(theta, x, nullptr);
}

double predict_prob(const ParamVector& theta, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return sigmoid(logit(theta, x));
}

Eigen::VectorXd predict_probs(const ParamVector& theta,
                              const Eigen::Ref<const Eigen::MatrixXd>& X) {
  check_params(theta);
  if (X.cols() != theta.arch.input_dim)
    throw std::invalid_argument("sample dimension does not match architecture input");
  Eigen::VectorXd p(X.rows());
  if (theta.arch.kind == ArchKind::kLinear) {
    const int d = theta.arch.input_dim;
    Eigen::VectorXd m = X * theta.values.head(d);
    m.array() += theta.values(d);
    for (long i = 0; i < m.size(); ++i) p(i) = sigmoid(m(i));
    return p;
  }
  for (long i = 0; i < X.rows(); ++i) {
    Eigen::VectorXd x = X.row(i);
    p(i) = sigmoid(mlp_forward(theta, x, nullptr));
  }
  return p;
}

double loss(const ParamVector& theta, const Eigen::Ref<const Eigen::VectorXd>& x, int y) {
  check_params(theta);
  check_sample(theta, x, y);
  const double p = std::clamp(predict_prob(theta, x), kProbClamp, 1.0 - kProbClamp);
  return y == 1 ? -std::log(p) : -std::log(1.0 - p);
}

Eigen::VectorXd logit_grad(const ParamVector& theta,
                           const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_params(theta);
  check_sample(theta, x, 0);
  if (theta.arch.kind == ArchKind::kLinear) {
    const int d = theta.arch.input_dim;
    Eigen::VectorXd g(d + 1);
    g.head(d) = x;
    g(d) = 1.0;
    return g;
  }
  ForwardTrace trace;
  mlp_forward(theta, x, &trace);
  return mlp_backward(theta, trace, 1.0);
}

GradientVector per_sample_grad(const ParamVector& theta,
                               const Eigen::Ref<const Eigen::VectorXd>& x, int y) {
  check_params(theta);
  check_sample(theta, x, y);
  if (theta.arch.kind == ArchKind::kLinear) {
    const int d = theta.arch.input_dim;
    const double r = sigmoid(theta.values.head(d).dot(x) + theta.values(d)) - y;
    Eigen::VectorXd g(d + 1);
    g.head(d) = r * x;
    g(d) = r;
    return {std::move(g), GradOrigin::kSingleSample};
  }
  ForwardTrace trace;
  const double z = mlp_forward(theta, x, &trace);
  return {mlp_backward(theta, trace, sigmoid(z) - y), GradOrigin::kSingleSample};
}

GradientVector batch_grad(const ParamVector& theta,
                          const Eigen::Ref<const Eigen::MatrixXd>& X,
                          const Eigen::Ref<const Eigen::VectorXi>& y) {
  check_params(theta);
  if (X.rows() == 0) throw std::invalid_argument("batch gradient over an empty sample set");
  if (X.rows() != y.size()) throw std::invalid_argument("feature rows and labels differ in count");
  if (X.cols() != theta.arch.input_dim)
    throw std::invalid_argument("sample dimension does not match architecture input");
  for (long i = 0; i < y.size(); ++i)
    if (y(i) != 0 && y(i) != 1) throw std::invalid_argument("labels must be 0 or 1");

  if (theta.arch.kind == ArchKind::kLinear) {
    const int d = theta.arch.input_dim;
    Eigen::VectorXd m = X * theta.values.head(d);
    m.array() += theta.values(d);
    Eigen::VectorXd r(m.size());
    for (long i = 0; i < m.size(); ++i) r(i) = sigmoid(m(i)) - y(i);
    Eigen::VectorXd g(d + 1);
    g.head(d) = X.transpose() * r;
    g(d) = r.sum();
    return {std::move(g), GradOrigin::kValidationAggregate};
  }
  Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.values.size());
  for (long i = 0; i < X.rows(); ++i) {
    Eigen::VectorXd x = X.row(i);
    g += per_sample_grad(theta, x, y(i)).values;
  }
  return {std::move(g), GradOrigin::kValidationAggregate};
}

HessianMatrix hessian(const ParamVector& theta,
                      const Eigen::Ref<const Eigen::MatrixXd>& X,
                      const Eigen::Ref<const Eigen::VectorXi>& y, double lambda,
                      double weight_decay) {
  check_params(theta);
  if (theta.arch.kind != ArchKind::kLinear)
    throw std::invalid_argument("exact Hessian supports the linear architecture only");
  if (lambda < 0.0) throw std::invalid_argument("damping must be non-negative");
  if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be non-negative");
  if (X.rows() != y.size()) throw std::invalid_argument("feature rows and labels differ in count");
  if (X.rows() > 0 && X.cols() != theta.arch.input_dim)
    throw std::invalid_argument("sample dimension does not match architecture input");

  const int d = theta.arch.input_dim;
  const int p = d + 1;
  Eigen::MatrixXd A(X.rows(), p);
  A.leftCols(d) = X;
  A.col(d).setOnes();
  Eigen::VectorXd s(X.rows());
  for (long i = 0; i < X.rows(); ++i) {
    const double pr = sigmoid(theta.values.head(d).dot(X.row(i).transpose()) + theta.values(d));
    s(i) = pr * (1.0 - pr);
  }
  Eigen::MatrixXd H = A.transpose() * s.asDiagonal() * A;
  H.diagonal().array() += weight_decay + lambda;
  return {std::move(H), lambda};
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t basis) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = basis;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string fingerprint(const ParamVector& theta) {
  const std::string arch = theta.arch.describe();
  std::uint64_t h = fnv1a64(arch.data(), arch.size());
  h = fnv1a64(theta.values.data(), static_cast<std::size_t>(theta.values.size()) * sizeof(double), h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ipinf
