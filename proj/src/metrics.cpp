#include "ipinf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ipinf {

namespace {

// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0.0 && vb == 0.0) return 1.0;
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

std::pair<std::vector<double>, std::vector<double>> aligned_scores(const InfluenceReport& a,
                                                                   const InfluenceReport& b) {
  if (a.scores.size() != b.scores.size())
    throw std::invalid_argument("score reports cover different sample counts");
  std::vector<double> va, vb;
  va.reserve(a.scores.size());
  vb.reserve(a.scores.size());
  for (const auto& [id, s] : a.scores) {
    const auto it = b.scores.find(id);
    if (it == b.scores.end())
      throw std::invalid_argument("score reports cover different sample ids");
    va.push_back(s);
    vb.push_back(it->second);
  }
  return {std::move(va), std::move(vb)};
}

}  // namespace

double accuracy(const ParamVector& theta, const Dataset& ds) {
  validate_dataset(ds);
  if (ds.n() == 0) throw std::invalid_argument("accuracy over an empty dataset");
  const Eigen::VectorXd p = predict_probs(theta, ds.features);
  int correct = 0;
  for (int i = 0; i < ds.n(); ++i) {
    const int pred = p(i) >= 0.5 ? 1 : 0;
    correct += pred == ds.labels(i);
  }
  return static_cast<double>(correct) / ds.n();
}

double dp_gap(const ParamVector& theta, const Dataset& ds) {
  validate_dataset(ds);
  if (!ds.group) throw std::invalid_argument("demographic parity requires a group attribute");
  const Eigen::VectorXi& g = *ds.group;
  const int n1 = (g.array() == 1).count();
  const int n0 = ds.n() - n1;
  if (n0 == 0 || n1 == 0)
    throw std::invalid_argument("demographic parity requires both groups non-empty");
  const Eigen::VectorXd p = predict_probs(theta, ds.features);
  double m1 = 0.0, m0 = 0.0;
  for (int i = 0; i < ds.n(); ++i) (g(i) == 1 ? m1 : m0) += p(i);
  return std::abs(m1 / n1 - m0 / n0);
}

double consistency_fair_score(const ParamVector& theta, const Dataset& original,
                              const Dataset& perturbed) {
  validate_dataset(original);
  validate_dataset(perturbed);
  if (original.n() != perturbed.n())
    throw std::invalid_argument("paired datasets differ in length");
  if (original.n() == 0) throw std::invalid_argument("consistency over an empty dataset");
  if (original.ids != perturbed.ids)
    throw std::invalid_argument("paired datasets must carry matching ids");
  const Eigen::VectorXd pa = predict_probs(theta, original.features);
  const Eigen::VectorXd pb = predict_probs(theta, perturbed.features);
  int differing = 0;
  for (int i = 0; i < original.n(); ++i) {
    const int ha = pa(i) >= 0.5 ? 1 : 0;
    const int hb = pb(i) >= 0.5 ? 1 : 0;
    differing += ha != hb;
  }
  return static_cast<double>(differing) / original.n();
}

DetectionMetrics detection_metrics(const std::vector<SampleId>& selected,
                                   const NoiseRecord& noise, int k) {
  if (k < 0) throw std::invalid_argument("selection depth must be non-negative");
  const int effective = std::min<int>(k, static_cast<int>(selected.size()));
  int hits = 0;
  for (int i = 0; i < effective; ++i)
    hits += noise.flipped_ids.count(selected[static_cast<std::size_t>(i)]) > 0;

  DetectionMetrics out;
  out.hits = hits;
  out.k = effective;
  out.recall = noise.flipped_ids.empty()
                   ? 1.0
                   : static_cast<double>(hits) / static_cast<double>(noise.flipped_ids.size());
  out.precision = effective == 0 ? 0.0 : static_cast<double>(hits) / effective;
  return out;
}

RankCorrelation rank_correlation(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("score lists differ in length");
  if (a.size() < 2) throw std::invalid_argument("rank correlation needs at least two scores");

  RankCorrelation out;
  out.spearman = pearson(average_ranks(a), average_ranks(b));

  long concordant_minus_discordant = 0;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      const double prod = da * db;
      if (prod > 0.0)
        ++concordant_minus_discordant;
      else if (prod < 0.0)
        --concordant_minus_discordant;
    }
  out.kendall = 2.0 * static_cast<double>(concordant_minus_discordant) /
                (static_cast<double>(n) * static_cast<double>(n - 1));
  return out;
}

RankCorrelation rank_correlation(const InfluenceReport& a, const InfluenceReport& b) {
  auto [va, vb] = aligned_scores(a, b);
  return rank_correlation(va, vb);
}

double sign_agreement(const InfluenceReport& a, const InfluenceReport& b) {
  auto [va, vb] = aligned_scores(a, b);
  if (va.empty()) throw std::invalid_argument("sign agreement over empty reports");
  auto sgn = [](double x) { return x > 0.0 ? 1 : (x < 0.0 ? -1 : 0); };
  int agree = 0;
  for (std::size_t i = 0; i < va.size(); ++i) agree += sgn(va[i]) == sgn(vb[i]);
  return static_cast<double>(agree) / static_cast<double>(va.size());
}

}  // namespace ipinf
