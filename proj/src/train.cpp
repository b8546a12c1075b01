#include "ipinf/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace ipinf {

namespace {

void check_train_inputs(const Dataset& ds, const Arch& arch, const TrainConfig& cfg,
                        const Eigen::VectorXd* weights) {
  validate_dataset(ds);
  if (ds.n() == 0) throw std::invalid_argument("training requires at least one sample");
  if (ds.dim() != arch.input_dim)
    throw std::invalid_argument("sample dimension does not match architecture input");
  if (cfg.learning_rate <= 0.0) throw std::invalid_argument("learning rate must be positive");
  if (cfg.epochs < 0) throw std::invalid_argument("epoch count must be non-negative");
  if (cfg.batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  if (cfg.weight_decay < 0.0) throw std::invalid_argument("weight decay must be non-negative");
  if (cfg.checkpoint_stride <= 0) throw std::invalid_argument("checkpoint stride must be positive");
  if (weights) {
    if (weights->size() != ds.n())
      throw std::invalid_argument("sample weight count does not match dataset size");
    if ((weights->array() < 0.0).any())
      throw std::invalid_argument("sample weights must be non-negative");
  }
}

// One SGD step over rows order[begin, end): theta -= lr * (batch mean of
// weighted per-sample gradients + weight_decay * theta).
void sgd_step(ParamVector& theta, const Dataset& ds, const std::vector<int>& order,
              std::size_t begin, std::size_t end, const TrainConfig& cfg,
              const Eigen::VectorXd* weights) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.values.size());
  for (std::size_t j = begin; j < end; ++j) {
    const int i = order[j];
    Eigen::VectorXd x = ds.features.row(i);
    Eigen::VectorXd gi = per_sample_grad(theta, x, ds.labels(i)).values;
    g += weights ? (*weights)(i) * gi : gi;
  }
  g /= static_cast<double>(end - begin);
  if (cfg.weight_decay > 0.0) g += cfg.weight_decay * theta.values;
  theta.values -= cfg.learning_rate * g;
}

}  // namespace

ParamVector init_params(const Arch& arch, std::uint64_t seed) {
  ParamVector theta;
  theta.arch = arch;
  theta.values.resize(arch.param_count());
  std::mt19937_64 rng(seed);

  auto fill_layer = [&](long offset, int in, int out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    const long count = static_cast<long>(out) * in + out;
    for (long k = 0; k < count; ++k) theta.values(offset + k) = u(rng);
    return offset + count;
  };

  if (arch.kind == ArchKind::kLinear) {
    fill_layer(0, arch.input_dim, 1);
    return theta;
  }
  long off = 0;
  int in = arch.input_dim;
  for (int h : arch.hidden) {
    off = fill_layer(off, in, h);
    in = h;
  }
  fill_layer(off, in, 1);
  return theta;
}

TrainResult train(const Dataset& ds, const Arch& arch, const TrainConfig& cfg,
                  const Eigen::VectorXd* sample_weights) {
  check_train_inputs(ds, arch, cfg, sample_weights);

  TrainResult result;
  result.final_params = init_params(arch, cfg.seed);
  if (cfg.epochs == 0) {
    result.checkpoints.push_back(result.final_params);
    return result;
  }

  std::mt19937_64 rng(cfg.seed ^ 0xd1b54a32d192ed03ull);
  std::vector<int> order(static_cast<std::size_t>(ds.n()));
  std::iota(order.begin(), order.end(), 0);

  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  int last_checkpoint_epoch = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(begin + batch, order.size());
      sgd_step(result.final_params, ds, order, begin, end, cfg, sample_weights);
    }
    if (epoch % cfg.checkpoint_stride == 0) {
      result.checkpoints.push_back(result.final_params);
      last_checkpoint_epoch = epoch;
    }
  }
  if (last_checkpoint_epoch != cfg.epochs) result.checkpoints.push_back(result.final_params);
  return result;
}

double mean_loss(const ParamVector& theta, const Dataset& ds,
                 const Eigen::VectorXd* sample_weights) {
  validate_dataset(ds);
  if (ds.n() == 0) throw std::invalid_argument("mean loss over an empty dataset");
  if (sample_weights && sample_weights->size() != ds.n())
    throw std::invalid_argument("sample weight count does not match dataset size");
  double total = 0.0;
  for (int i = 0; i < ds.n(); ++i) {
    Eigen::VectorXd x = ds.features.row(i);
    const double l = loss(theta, x, ds.labels(i));
    total += sample_weights ? (*sample_weights)(i) * l : l;
  }
  return total / ds.n();
}

std::vector<ParamVector> generate_param_sets(const ParamVector& theta_final,
                                             const std::vector<ParamVector>& checkpoints,
                                             const Dataset& ds, const EnsembleSpec& spec,
                                             const TrainConfig& cfg) {
  if (spec.size <= 0) throw std::invalid_argument("ensemble size must be positive");

  switch (spec.strategy) {
    case EnsembleStrategy::kCheckpoint: {
      if (static_cast<int>(checkpoints.size()) < spec.size)
        throw std::invalid_argument("fewer checkpoints than the requested ensemble size");
      return {checkpoints.end() - spec.size, checkpoints.end()};
    }
    case EnsembleStrategy::kExtraSgd: {
      if (spec.extra_sgd_steps < spec.size)
        throw std::invalid_argument("continued-SGD steps must cover the ensemble size");
      validate_dataset(ds);
      if (ds.n() == 0) throw std::invalid_argument("continued SGD requires samples");
      if (ds.dim() != theta_final.arch.input_dim)
        throw std::invalid_argument("sample dimension does not match architecture input");

      std::vector<ParamVector> members;
      members.reserve(static_cast<std::size_t>(spec.size));
      ParamVector theta = theta_final;
      std::mt19937_64 rng(spec.seed ^ 0x2545f4914f6cdd1dull);
      std::vector<int> order(static_cast<std::size_t>(ds.n()));
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);

      const auto batch = static_cast<std::size_t>(cfg.batch_size);
      std::size_t cursor = 0;
      int next_member = 1;
      for (int step = 1; step <= spec.extra_sgd_steps; ++step) {
        if (cursor >= order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        const std::size_t end = std::min(cursor + batch, order.size());
        sgd_step(theta, ds, order, cursor, end, cfg, nullptr);
        cursor = end;
        // Snapshot at step k*steps/size for k = 1..size; the last lands on
        // the final continued step.
        if (step == (next_member * spec.extra_sgd_steps) / spec.size) {
          members.push_back(theta);
          ++next_member;
        }
      }
      while (static_cast<int>(members.size()) < spec.size) members.push_back(theta);
      return members;
    }
    case EnsembleStrategy::kDropout: {
      if (spec.dropout_lo < 0.0 || spec.dropout_hi > 1.0 || spec.dropout_lo > spec.dropout_hi)
        throw std::invalid_argument("dropout bounds must satisfy 0 <= lo <= hi <= 1");
      std::vector<ParamVector> members;
      members.reserve(static_cast<std::size_t>(spec.size));
      std::mt19937_64 rng(spec.seed ^ 0x94d049bb133111ebull);
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      for (int t = 0; t < spec.size; ++t) {
        const double r = spec.dropout_lo +
                         (spec.dropout_hi - spec.dropout_lo) * u01(rng);
        ParamVector member = theta_final;
        if (r > 0.0)
          for (long k = 0; k < member.values.size(); ++k)
            if (u01(rng) < r) member.values(k) = 0.0;
        members.push_back(std::move(member));
      }
      return members;
    }
  }
  throw std::invalid_argument("unknown ensemble strategy");
}

}  // namespace ipinf
