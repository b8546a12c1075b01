#include "ipinf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_set>

namespace ipinf {

namespace {

void shuffle_rows(Eigen::MatrixXd& X, Eigen::VectorXi& y, std::mt19937_64& rng) {
  std::vector<int> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Eigen::MatrixXd Xs(X.rows(), X.cols());
  Eigen::VectorXi ys(y.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    Xs.row(static_cast<long>(i)) = X.row(order[i]);
    ys(static_cast<long>(i)) = y(order[i]);
  }
  X = std::move(Xs);
  y = std::move(ys);
}

std::vector<SampleId> sequential_ids(int n, SampleId offset) {
  std::vector<SampleId> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), offset);
  return ids;
}

}  // namespace

Dataset Dataset::rows(const std::vector<int>& idx) const {
  Dataset out;
  out.features.resize(static_cast<long>(idx.size()), features.cols());
  out.labels.resize(static_cast<long>(idx.size()));
  out.ids.reserve(idx.size());
  if (group) out.group.emplace(static_cast<long>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int r = idx[i];
    if (r < 0 || r >= n()) throw std::invalid_argument("row index out of range");
    out.features.row(static_cast<long>(i)) = features.row(r);
    out.labels(static_cast<long>(i)) = labels(r);
    out.ids.push_back(ids[static_cast<std::size_t>(r)]);
    if (group) (*out.group)(static_cast<long>(i)) = (*group)(r);
  }
  return out;
}

int Dataset::position_of(SampleId id) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return static_cast<int>(i);
  throw std::invalid_argument("sample id " + std::to_string(id) + " not present in dataset");
}

std::pair<Dataset, Dataset> Dataset::split(int n_first) const {
  if (n_first < 0 || n_first > n()) throw std::invalid_argument("split point out of range");
  std::vector<int> head(static_cast<std::size_t>(n_first));
  std::iota(head.begin(), head.end(), 0);
  std::vector<int> tail(static_cast<std::size_t>(n() - n_first));
  std::iota(tail.begin(), tail.end(), n_first);
  return {rows(head), rows(tail)};
}

void validate_dataset(const Dataset& ds) {
  const long n = ds.features.rows();
  if (ds.labels.size() != n) throw std::invalid_argument("row and label counts differ");
  if (static_cast<long>(ds.ids.size()) != n) throw std::invalid_argument("row and id counts differ");
  std::unordered_set<SampleId> seen;
  for (SampleId id : ds.ids)
    if (!seen.insert(id).second)
      throw std::invalid_argument("duplicate sample id " + std::to_string(id));
  for (long i = 0; i < n; ++i)
    if (ds.labels(i) != 0 && ds.labels(i) != 1)
      throw std::invalid_argument("labels must be 0 or 1");
  if (ds.group) {
    if (ds.group->size() != n) throw std::invalid_argument("row and group counts differ");
    for (long i = 0; i < n; ++i)
      if ((*ds.group)(i) != 0 && (*ds.group)(i) != 1)
        throw std::invalid_argument("group values must be 0 or 1");
  }
}

Dataset make_gaussian_pair(const GaussianPairSpec& spec, std::uint64_t seed,
                           SampleId id_offset) {
  if (spec.n0 <= 0 || spec.n1 <= 0)
    throw std::invalid_argument("cluster sizes must be positive");
  if (spec.sigma0 <= 0.0 || spec.sigma1 <= 0.0)
    throw std::invalid_argument("cluster spreads must be positive");
  const int n = spec.n0 + spec.n1;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXi y(n);
  for (int i = 0; i < spec.n0; ++i) {
    X(i, 0) = spec.center0.x() + spec.sigma0 * unit(rng);
    X(i, 1) = spec.center0.y() + spec.sigma0 * unit(rng);
    y(i) = 0;
  }
  for (int i = 0; i < spec.n1; ++i) {
    X(spec.n0 + i, 0) = spec.center1.x() + spec.sigma1 * unit(rng);
    X(spec.n0 + i, 1) = spec.center1.y() + spec.sigma1 * unit(rng);
    y(spec.n0 + i) = 1;
  }
  shuffle_rows(X, y, rng);

  Dataset ds;
  ds.features = std::move(X);
  ds.labels = std::move(y);
  ds.ids = sequential_ids(n, id_offset);
  validate_dataset(ds);
  return ds;
}

std::pair<Dataset, Dataset> make_blobs(int n_train, int n_test, double separation,
                                       std::uint64_t seed) {
  if (n_train <= 0 || n_test <= 0)
    throw std::invalid_argument("sample counts must be positive");
  if (separation <= 0.0) throw std::invalid_argument("separation must be positive");

  GaussianPairSpec spec;
  spec.center0 = {-separation / 2.0, 0.0};
  spec.center1 = {separation / 2.0, 0.0};
  spec.sigma0 = spec.sigma1 = 1.0;

  spec.n0 = (n_train + 1) / 2;
  spec.n1 = n_train - spec.n0;
  Dataset train = make_gaussian_pair(spec, seed, 0);

  spec.n0 = (n_test + 1) / 2;
  spec.n1 = n_test - spec.n0;
  Dataset test = make_gaussian_pair(spec, seed ^ 0x9e3779b97f4a7c15ull, n_train);
  return {std::move(train), std::move(test)};
}

namespace {

Dataset moons_once(int n, double noise_std, std::uint64_t seed, SampleId id_offset) {
  const int n0 = (n + 1) / 2;
  const int n1 = n - n0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXi y(n);
  for (int i = 0; i < n0; ++i) {
    const double t = n0 == 1 ? 0.0 : std::numbers::pi * i / (n0 - 1);
    X(i, 0) = std::cos(t);
    X(i, 1) = std::sin(t);
    y(i) = 0;
  }
  for (int i = 0; i < n1; ++i) {
    const double t = n1 == 1 ? 0.0 : std::numbers::pi * i / (n1 - 1);
    X(n0 + i, 0) = 1.0 - std::cos(t);
    X(n0 + i, 1) = 0.5 - std::sin(t);
    y(n0 + i) = 1;
  }
  if (noise_std > 0.0)
    for (int i = 0; i < n; ++i) {
      X(i, 0) += noise_std * unit(rng);
      X(i, 1) += noise_std * unit(rng);
    }
  shuffle_rows(X, y, rng);

  Dataset ds;
  ds.features = std::move(X);
  ds.labels = std::move(y);
  ds.ids = sequential_ids(n, id_offset);
  validate_dataset(ds);
  return ds;
}

}  // namespace

std::pair<Dataset, Dataset> make_half_moons(int n_train, int n_test, double noise_std,
                                            std::uint64_t seed) {
  if (n_train <= 0 || n_test <= 0)
    throw std::invalid_argument("sample counts must be positive");
  if (noise_std < 0.0) throw std::invalid_argument("noise level must be non-negative");
  Dataset train = moons_once(n_train, noise_std, seed, 0);
  Dataset test = moons_once(n_test, noise_std, seed ^ 0x9e3779b97f4a7c15ull, n_train);
  return {std::move(train), std::move(test)};
}

std::pair<Dataset, NoiseRecord> flip_labels(const Dataset& ds, int k, bool per_class,
                                            std::uint64_t seed) {
  validate_dataset(ds);
  if (k < 0) throw std::invalid_argument("flip count must be non-negative");

  std::mt19937_64 rng(seed);
  std::vector<int> chosen;
  if (per_class) {
    for (int cls : {0, 1}) {
      std::vector<int> pool;
      for (int i = 0; i < ds.n(); ++i)
        if (ds.labels(i) == cls) pool.push_back(i);
      if (k > static_cast<int>(pool.size()))
        throw std::invalid_argument("flip count exceeds class " + std::to_string(cls) + " size");
      std::shuffle(pool.begin(), pool.end(), rng);
      chosen.insert(chosen.end(), pool.begin(), pool.begin() + k);
    }
  } else {
    if (k > ds.n()) throw std::invalid_argument("flip count exceeds dataset size");
    std::vector<int> pool(static_cast<std::size_t>(ds.n()));
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng);
    chosen.assign(pool.begin(), pool.begin() + k);
  }

  Dataset out = ds;
  NoiseRecord record;
  for (int pos : chosen) {
    const SampleId id = ds.ids[static_cast<std::size_t>(pos)];
    record.flipped_ids.insert(id);
    record.original_labels[id] = ds.labels(pos);
    out.labels(pos) = 1 - ds.labels(pos);
  }
  return {std::move(out), std::move(record)};
}

Dataset assign_groups(const Dataset& ds, double p_given_y1, double p_given_y0,
                      std::uint64_t seed) {
  validate_dataset(ds);
  if (p_given_y1 < 0.0 || p_given_y1 > 1.0 || p_given_y0 < 0.0 || p_given_y0 > 1.0)
    throw std::invalid_argument("group probabilities must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Dataset out = ds;
  out.group.emplace(ds.n());
  for (int i = 0; i < ds.n(); ++i) {
    const double p = ds.labels(i) == 1 ? p_given_y1 : p_given_y0;
    (*out.group)(i) = u01(rng) < p ? 1 : 0;
  }
  return out;
}

std::pair<Dataset, std::set<SampleId>> craft_adversarial(const Dataset& validation,
                                                         const ParamVector& theta,
                                                         double gamma, double fraction,
                                                         std::uint64_t seed) {
  validate_dataset(validation);
  if (theta.arch.kind != ArchKind::kLinear)
    throw std::invalid_argument("adversarial crafting requires a linear model");
  if (theta.values.size() != theta.arch.param_count())
    throw std::invalid_argument("parameter vector length does not match architecture");
  if (validation.dim() != theta.arch.input_dim)
    throw std::invalid_argument("sample dimension does not match architecture input");
  if (gamma <= 0.0) throw std::invalid_argument("attack strength must be positive");
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("attack fraction must lie in [0, 1]");

  const int d = theta.arch.input_dim;
  const Eigen::VectorXd w = theta.values.head(d);
  const double b = theta.values(d);
  const double wtw = w.squaredNorm();
  if (wtw == 0.0)
    throw std::invalid_argument("degenerate model: zero coefficient norm admits no margin attack");

  const int n = validation.n();
  const int m = static_cast<int>(std::ceil(fraction * n - 1e-9));
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);

  Dataset out = validation;
  std::set<SampleId> touched;
  for (int j = 0; j < m; ++j) {
    const int i = pool[static_cast<std::size_t>(j)];
    const double margin = w.dot(out.features.row(i).transpose()) + b;
    out.features.row(i) -= (gamma * margin / wtw) * w.transpose();
    touched.insert(validation.ids[static_cast<std::size_t>(i)]);
  }
  return {std::move(out), std::move(touched)};
}

}  // namespace ipinf
