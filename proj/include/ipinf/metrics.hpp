#pragma once

#include <Eigen/Dense>

#include <vector>

#include "ipinf/dataset.hpp"
#include "ipinf/influence.hpp"
#include "ipinf/model.hpp"

namespace ipinf {

/// Fraction of correct hard predictions at threshold 0.5; a probability of
/// exactly 0.5 is classified as class 1.
double accuracy(const ParamVector& theta, const Dataset& ds);

/// |mean predicted probability of group 1 - group 0|. Requires both groups.
double dp_gap(const ParamVector& theta, const Dataset& ds);

/// Fraction of paired rows whose hard predictions differ between the two
/// datasets; rows pair by position and ids must match.
double consistency_fair_score(const ParamVector& theta, const Dataset& original,
                              const Dataset& perturbed);

struct DetectionMetrics {
  double recall = 0.0;     // flipped rows found / flipped rows planted
  double precision = 0.0;  // flipped rows found / selection size
  int hits = 0;
  int k = 0;
};

/// Detection quality of the first k entries of an ordered suspect list.
DetectionMetrics detection_metrics(const std::vector<SampleId>& selected,
                                   const NoiseRecord& noise, int k);

struct RankCorrelation {
  double spearman = 0.0;  // Pearson correlation of average-ranked values
  double kendall = 0.0;   // pair-sign agreement over all C(n,2) pairs
};

RankCorrelation rank_correlation(const std::vector<double>& a,
                                 const std::vector<double>& b);

/// Correlation of two score reports aligned by sample id; the id sets must
/// coincide.
RankCorrelation rank_correlation(const InfluenceReport& a, const InfluenceReport& b);

/// Fraction of ids whose scores carry the same sign in both reports; zero
/// counts as its own sign.
double sign_agreement(const InfluenceReport& a, const InfluenceReport& b);

}  // namespace ipinf
