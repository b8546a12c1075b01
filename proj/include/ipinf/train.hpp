#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "ipinf/dataset.hpp"
#include "ipinf/model.hpp"

namespace ipinf {

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 200;
  int batch_size = 32;
  double weight_decay = 0.0;
  int checkpoint_stride = 50;
  std::uint64_t seed = 1;
};

struct TrainResult {
  ParamVector final_params;
  std::vector<ParamVector> checkpoints;  // every stride epochs, plus the final state
};

/// Uniform fan-in initialization: each layer draws weights and biases from
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)). Deterministic under seed.
ParamVector init_params(const Arch& arch, std::uint64_t seed);

/// Mini-batch SGD on the mean (optionally weighted) per-sample loss plus an
/// L2 penalty of weight_decay/2 * |theta|^2. Two runs with equal inputs and
/// seed produce bit-identical parameters. epochs = 0 returns the
/// initialization with checkpoint list [init].
TrainResult train(const Dataset& ds, const Arch& arch, const TrainConfig& cfg,
                  const Eigen::VectorXd* sample_weights = nullptr);

/// Mean training loss under the current parameters (weighted when weights
/// are supplied); the same objective train() descends, without the penalty.
double mean_loss(const ParamVector& theta, const Dataset& ds,
                 const Eigen::VectorXd* sample_weights = nullptr);

enum class EnsembleStrategy { kCheckpoint, kExtraSgd, kDropout };

struct EnsembleSpec {
  EnsembleStrategy strategy = EnsembleStrategy::kDropout;
  int size = 5;
  double dropout_lo = 0.0;   // per-member zeroing rate lower bound
  double dropout_hi = 0.01;  // upper bound
  int extra_sgd_steps = 50;  // continued-SGD steps to spread snapshots over
  std::uint64_t seed = 1;
};

/// Builds the parameter sets an ensemble score averages over.
///   kCheckpoint: the `size` most recent training checkpoints.
///   kExtraSgd:   `size` snapshots spread over extra_sgd_steps continued
///                mini-batch steps from theta_final.
///   kDropout:    `size` copies of theta_final; each copy draws a rate
///                r ~ U(lo, hi) and zeroes every parameter independently
///                with probability r, without rescaling survivors.
std::vector<ParamVector> generate_param_sets(const ParamVector& theta_final,
                                             const std::vector<ParamVector>& checkpoints,
                                             const Dataset& ds, const EnsembleSpec& spec,
                                             const TrainConfig& cfg);

}  // namespace ipinf
