#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "ipinf/model.hpp"

namespace ipinf {

using SampleId = std::int64_t;

/// In-memory tabular dataset. Values are treated as immutable after
/// construction: every transformation returns a fresh copy.
struct Dataset {
  Eigen::MatrixXd features;              // n x d
  Eigen::VectorXi labels;                // n entries in {0, 1}
  std::vector<SampleId> ids;             // n unique identifiers
  std::optional<Eigen::VectorXi> group;  // n entries in {0, 1} when present

  int n() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }

  /// Row subset by positional indices, preserving order.
  Dataset rows(const std::vector<int>& idx) const;

  /// Positional index of a sample id; throws if absent.
  int position_of(SampleId id) const;

  /// (first n_first rows, remaining rows).
  std::pair<Dataset, Dataset> split(int n_first) const;
};

/// Throws std::invalid_argument when row/label/id counts disagree, ids
/// repeat, labels leave {0,1}, or group values leave {0,1}.
void validate_dataset(const Dataset& ds);

/// Which training rows were flipped and what they originally carried.
struct NoiseRecord {
  std::set<SampleId> flipped_ids;
  std::map<SampleId, int> original_labels;
};

/// Two isotropic Gaussian clusters in the plane.
struct GaussianPairSpec {
  Eigen::Vector2d center0{0.0, 0.0};
  Eigen::Vector2d center1{0.0, 0.0};
  double sigma0 = 1.0;
  double sigma1 = 1.0;
  int n0 = 0;  // rows labelled 0
  int n1 = 0;  // rows labelled 1
};

/// General two-cluster Gaussian sampler; rows are shuffled and ids assigned
/// id_offset .. id_offset + n - 1 in final row order.
Dataset make_gaussian_pair(const GaussianPairSpec& spec, std::uint64_t seed,
                           SampleId id_offset = 0);

/// Balanced two-class blobs: isotropic unit-variance Gaussians whose centers
/// sit `separation` apart along the first axis. Returns (train, test) with
/// class counts balanced within one sample and ids unique across both.
std::pair<Dataset, Dataset> make_blobs(int n_train, int n_test, double separation,
                                       std::uint64_t seed);

/// Interleaving half-moon pair; class 0 lies on the upper unit semicircle and
/// class 1 on the lower offset arc before Gaussian coordinate noise is added.
std::pair<Dataset, Dataset> make_half_moons(int n_train, int n_test, double noise_std,
                                            std::uint64_t seed);

/// Flips exactly k labels chosen uniformly without replacement, or k per
/// class when per_class is set. The record lists exactly the flipped rows.
std::pair<Dataset, NoiseRecord> flip_labels(const Dataset& ds, int k, bool per_class,
                                            std::uint64_t seed);

/// Attaches a binary group attribute sampled per row from
/// P(g=1 | y=1) = p_given_y1 and P(g=1 | y=0) = p_given_y0.
Dataset assign_groups(const Dataset& ds, double p_given_y1, double p_given_y0,
                      std::uint64_t seed);

/// White-box margin attack on a uniformly random ceil(fraction * n) subset:
///   x' = x - gamma * (w^T x + b) / (w^T w) * w
/// with labels kept. Non-selected rows are copied bit for bit. Returns the
/// perturbed set and the ids that were touched.
std::pair<Dataset, std::set<SampleId>> craft_adversarial(const Dataset& validation,
                                                         const ParamVector& theta,
                                                         double gamma, double fraction,
                                                         std::uint64_t seed);

}  // namespace ipinf
