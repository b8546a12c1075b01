// Acceptance suite: twelve end-to-end checks over the influence library and
// its pipelines. Each check carries a wall-clock budget; the binary prints
// one PASS/FAIL line per check and exits nonzero if any check fails or runs
// over budget.

#include <Eigen/Dense>

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ipinf/config.hpp"
#include "ipinf/curation.hpp"
#include "ipinf/dataset.hpp"
#include "ipinf/influence.hpp"
#include "ipinf/metrics.hpp"
#include "ipinf/model.hpp"
#include "ipinf/pipelines.hpp"
#include "ipinf/train.hpp"

namespace {

using namespace ipinf;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char* pattern, ...) {
  char buf[768];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

double rel_err(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-12);
}

std::string join2f(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += fmt(out.empty() ? "%.2f" : " %.2f", x);
  return out;
}

fs::path scratch_root() {
  static const fs::path root =
      fs::temp_directory_path() / ("ipinf-acceptance-" + std::to_string(::getpid()));
  return root;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

// Damping used with the blobs fixture. Losses aggregate by summation, so
// over 150 training rows this matches a per-sample ridge of about 1e-2.
constexpr double kBlobsLambda = 1.5;

// The separable-blobs recipe the score-quality pipeline uses by default:
// 150/100/100 rows at separation 6 with 10 flipped training labels, linear
// model trained by SGD at lr 0.3 for 250 epochs under weight decay 1e-3.
struct BlobsRun {
  SplitData data;
  TrainConfig tcfg;
  TrainResult tr;
};

BlobsRun trained_blobs(std::uint64_t seed, bool with_groups = false, int flips = 10) {
  DataConfig d;
  d.flips = flips;
  d.with_groups = with_groups;
  BlobsRun run;
  run.data = build_dataset(d, seed);
  run.tcfg = TrainConfig{0.3, 250, 32, 1e-3, 50, seed};
  run.tr = train(run.data.train, Arch::linear(run.data.train.dim()), run.tcfg);
  return run;
}

// The noisy half-moons recipe the curation pipeline uses by default, with a
// 32x32 MLP: lr 0.1, 400 epochs, batch 32.
struct MoonsRun {
  SplitData data;
  Arch arch;
  TrainConfig tcfg;
  TrainResult tr;
};

MoonsRun trained_moons(std::uint64_t seed, int flips, int n_val, double weight_decay) {
  DataConfig d;
  d.dataset = "moons";
  d.n_train = 200;
  d.n_val = n_val;
  d.n_test = 100;
  d.noise_std = 0.1;
  d.flips = flips;
  MoonsRun run;
  run.data = build_dataset(d, seed);
  run.arch = Arch::mlp(run.data.train.dim(), {32, 32});
  run.tcfg = TrainConfig{0.1, 400, 32, weight_decay, 50, seed};
  run.tr = train(run.data.train, run.arch, run.tcfg);
  return run;
}

// 1. Analytic per-sample gradients against central finite differences, 100
//    random (theta, sample) draws per architecture.
Outcome check_gradients() {
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> param_draw(0.0, 0.7);
  std::normal_distribution<double> x_draw(0.0, 1.5);
  double worst = 0.0;
  const std::vector<Arch> archs = {Arch::linear(3), Arch::mlp(3, {8, 4})};
  for (const Arch& arch : archs) {
    for (int draw = 0; draw < 100; ++draw) {
      ParamVector theta{Eigen::VectorXd(arch.param_count()), arch};
      for (int k = 0; k < theta.values.size(); ++k) theta.values[k] = param_draw(rng);
      Eigen::VectorXd x(arch.input_dim);
      for (int k = 0; k < x.size(); ++k) x[k] = x_draw(rng);
      const int y = draw % 2;

      const Eigen::VectorXd grad = per_sample_grad(theta, x, y).values;
      Eigen::VectorXd fd(grad.size());
      for (int j = 0; j < grad.size(); ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(theta.values[j]));
        ParamVector hi = theta, lo = theta;
        hi.values[j] += h;
        lo.values[j] -= h;
        fd[j] = (loss(hi, x, y) - loss(lo, x, y)) / (2.0 * h);
      }
      worst = std::max(worst, rel_err(grad, fd));
    }
  }
  return {worst < 1e-4, fmt("max rel err %.2e over 100 draws x 2 architectures", worst)};
}

// 2. Hessian: exact symmetry, agreement with differentiated batch gradients,
//    and a damping floor on the smallest eigenvalue.
Outcome check_hessian() {
  const auto [train_set, test_set] = make_blobs(60, 10, 6.0, 7);
  std::mt19937_64 rng(99);
  std::normal_distribution<double> param_draw(0.0, 0.3);
  ParamVector theta{Eigen::VectorXd(3), Arch::linear(2)};
  for (int k = 0; k < 3; ++k) theta.values[k] = param_draw(rng);

  const double lambda = 1e-2;
  const HessianMatrix h = hessian(theta, train_set.features, train_set.labels, lambda);
  const double sym = (h.values - h.values.transpose()).cwiseAbs().maxCoeff();

  // batch_grad carries no damping term, so differentiate it against the
  // Hessian with the lambda ridge removed.
  const int p = static_cast<int>(theta.values.size());
  Eigen::MatrixXd fd(p, p);
  for (int j = 0; j < p; ++j) {
    const double step = 1e-5;
    ParamVector hi = theta, lo = theta;
    hi.values[j] += step;
    lo.values[j] -= step;
    fd.col(j) = (batch_grad(hi, train_set.features, train_set.labels).values -
                 batch_grad(lo, train_set.features, train_set.labels).values) /
                (2.0 * step);
  }
  const Eigen::MatrixXd data_block =
      h.values - lambda * Eigen::MatrixXd::Identity(p, p);
  const double fd_rel = (fd - data_block).norm() / data_block.norm();

  const double min_eig =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h.values).eigenvalues().minCoeff();

  const bool ok = sym < 1e-10 && fd_rel < 1e-3 && min_eig >= lambda / 2.0;
  return {ok, fmt("symmetry %.1e, FD rel err %.2e, min eigenvalue %.4f (floor %.4f)",
                  sym, fd_rel, min_eig, lambda / 2.0)};
}

// 3. Truncated Neumann inverse-Hessian-vector products against a direct
//    damped factorization solve, five seeds.
Outcome check_lissa() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const BlobsRun run = trained_blobs(seed);
    const ParamVector& theta = run.tr.final_params;
    const Dataset& tr = run.data.train;

    const GradientVector v = objective_gradient(theta, run.data.val, Objective::kUtility);
    const Eigen::VectorXd direct =
        hessian(theta, tr.features, tr.labels, kBlobsLambda, run.tcfg.weight_decay)
            .values.ldlt()
            .solve(v.values);

    LissaConfig lc;
    lc.damping = kBlobsLambda;
    lc.weight_decay = run.tcfg.weight_decay;
    lc.seed = seed;
    const Eigen::VectorXd iterative = lissa_ihvp(theta, tr, v, lc).values;
    worst = std::max(worst, rel_err(iterative, direct));
  }
  return {worst < 1e-2, fmt("max rel err %.2e across 5 seeds (bound 1e-2)", worst)};
}

// 4. Rank agreement between the damped direct solve and the inner-product
//    surrogate on the blobs fixture, per seed.
Outcome check_rank_agreement() {
  double min_spearman = 1.0;
  std::uint64_t min_seed = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const BlobsRun run = trained_blobs(seed);
    const ParamVector& theta = run.tr.final_params;
    const InfluenceReport ip = ip_utility(theta, run.data.train, run.data.val);
    const InfluenceReport exact = exact_influence(theta, run.data.train, run.data.val,
                                                  kBlobsLambda, run.tcfg.weight_decay);
    const double rho = rank_correlation(exact, ip).spearman;
    if (rho < min_spearman) {
      min_spearman = rho;
      min_seed = seed;
    }
  }
  return {min_spearman >= 0.9,
          fmt("min Spearman %.4f at seed %llu (threshold 0.90)", min_spearman,
              static_cast<unsigned long long>(min_seed))};
}

// 5. Every flipped training label scores negative and lands in the bottom 15
//    of the inner-product ranking, per seed.
Outcome check_convex_detection() {
  int worst_negative = 10, worst_bottom = 10;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const BlobsRun run = trained_blobs(seed);
    const InfluenceReport ip =
        ip_utility(run.tr.final_params, run.data.train, run.data.val);

    const std::vector<SampleId> bottom = rank_bottom(ip, 0.1);  // 15 of 150
    const std::set<SampleId> bottom_set(bottom.begin(), bottom.end());
    int negatives = 0, in_bottom = 0;
    for (SampleId id : run.data.noise.flipped_ids) {
      if (ip.scores.at(id) < 0.0) ++negatives;
      if (bottom_set.count(id)) ++in_bottom;
    }
    worst_negative = std::min(worst_negative, negatives);
    worst_bottom = std::min(worst_bottom, in_bottom);
  }
  return {worst_negative == 10 && worst_bottom == 10,
          fmt("worst seed: %d/10 negative scores, %d/10 inside the bottom-15",
              worst_negative, worst_bottom)};
}

// 6. Flip detection on the half-moons MLP: single-model recall at 20 of at
//    least 0.8, and the dropout ensemble matches or beats it, on a majority
//    of five seeds.
Outcome check_nonconvex_detection() {
  std::vector<double> ip_recalls, ens_recalls;
  int joint_pass = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const MoonsRun run = trained_moons(seed, 15, 200, 1e-3);

    ScoringSpec spec;
    spec.method = Method::kIp;
    spec.ensemble.seed = seed;
    spec.weight_decay = run.tcfg.weight_decay;
    const InfluenceReport single =
        score_training_set(run.tr, run.data.train, run.data.val, spec, run.tcfg);
    spec.method = Method::kIpEnsemble;  // dropout rates U(0, 0.01), 5 members
    const InfluenceReport ensemble =
        score_training_set(run.tr, run.data.train, run.data.val, spec, run.tcfg);

    const auto recall_at_20 = [&](const InfluenceReport& report) {
      const std::vector<SampleId> sel = rank_bottom(report, 0.1);  // 20 of 200
      return detection_metrics(sel, run.data.noise, 20).recall;
    };
    const double r_ip = recall_at_20(single);
    const double r_ens = recall_at_20(ensemble);
    ip_recalls.push_back(r_ip);
    ens_recalls.push_back(r_ens);
    if (r_ip >= 0.8 && r_ens >= r_ip) ++joint_pass;
  }
  return {joint_pass >= 3,
          fmt("single recall [%s], ensemble [%s], joint pass %d/5", join2f(ip_recalls).c_str(),
              join2f(ens_recalls).c_str(), joint_pass)};
}

// 7. Trimming the bottom 10% by inner-product score improves mean test
//    accuracy on noisy half-moons across five seeded retrains.
Outcome check_curation_benefit() {
  double pre_sum = 0.0, post_sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    DataConfig d;
    d.dataset = "moons";
    d.n_train = 200;
    d.n_val = 200;
    d.n_test = 100;
    d.noise_std = 0.1;
    d.flips = 20;
    const SplitData data = build_dataset(d, seed);
    const Arch arch = Arch::mlp(data.train.dim(), {32, 32});
    const TrainConfig tcfg{0.1, 400, 32, 0.0, 50, seed};

    ScoringSpec spec;
    spec.method = Method::kIp;
    const EvalRecord rec =
        curate_retrain_eval(data.train, data.val, data.test, arch, spec,
                            CurationAction::kTrim, 0.1, 1.0, tcfg, &data.noise);
    pre_sum += rec.acc_pre;
    post_sum += rec.acc_post;
  }
  const double pre = pre_sum / 5.0, post = post_sum / 5.0;
  return {post >= pre, fmt("mean test accuracy %.4f -> %.4f over 5 retrains", pre, post)};
}

// 8. With damping far above the data curvature, lambda times the direct
//    solve collapses onto the raw inner product.
Outcome check_damping_limit() {
  double worst_ratio = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const BlobsRun run = trained_blobs(seed);
    const ParamVector& theta = run.tr.final_params;
    const Dataset& tr = run.data.train;

    const double h_max =
        hessian(theta, tr.features, tr.labels, 0.0).values.cwiseAbs().maxCoeff();
    const double lambda = 1e4 * h_max;

    const InfluenceReport ip = ip_utility(theta, tr, run.data.val);
    const InfluenceReport exact = exact_influence(theta, tr, run.data.val, lambda);

    double max_gap = 0.0, max_ip = 0.0;
    for (const auto& [id, score] : ip.scores) {
      max_gap = std::max(max_gap, std::abs(lambda * exact.scores.at(id) - score));
      max_ip = std::max(max_ip, std::abs(score));
    }
    worst_ratio = std::max(worst_ratio, max_gap / max_ip);
  }
  return {worst_ratio < 1e-3,
          fmt("max |lambda*solve - ip| = %.2e * max|ip| across 5 seeds (bound 1e-3)",
              worst_ratio)};
}

// 9. The closed-form margin attack: gamma 1 lands every perturbed sample on
//    the decision boundary, gamma 2 mirrors the signed margin exactly.
Outcome check_attack_geometry() {
  const BlobsRun run = trained_blobs(1);
  const ParamVector& theta = run.tr.final_params;
  const Dataset& val = run.data.val;

  const Dataset on_boundary = craft_adversarial(val, theta, 1.0, 1.0, 424242).first;
  double max_logit = 0.0;
  for (int i = 0; i < on_boundary.n(); ++i)
    max_logit = std::max(max_logit, std::abs(logit(theta, on_boundary.features.row(i))));

  const Dataset mirrored = craft_adversarial(val, theta, 2.0, 1.0, 424242).first;
  double max_mirror_gap = 0.0;
  for (int i = 0; i < mirrored.n(); ++i) {
    const double before = logit(theta, val.features.row(i));
    const double after = logit(theta, mirrored.features.row(i));
    max_mirror_gap = std::max(max_mirror_gap, std::abs(after + before));
  }

  const bool ok = max_logit < 1e-9 && max_mirror_gap < 1e-9;
  return {ok, fmt("gamma 1 max |logit| %.1e, gamma 2 max mirror residual %.1e",
                  max_logit, max_mirror_gap)};
}

// 10. Attack-and-defend pipeline: with a quarter of the test rows mirrored,
//     trimming 5% by robustness influence recovers at least half of the
//     accuracy drop, and the relabel and reweight arms beat the undefended
//     attacked accuracy, averaged over ten attack draws.
Outcome check_defense() {
  const ConfigMap cfg = parse_config_text("[attack]\nfractions = 0.25\n");
  RunOptions opt;
  opt.out_dir = scratch_root() / "defend";
  opt.workers = 3;
  opt.seeds = {2};
  run_defend(cfg, opt);

  // defend_summary.csv: method,action,attack_fraction,runs,acc_pre_mean,
  // acc_attacked_mean,acc_attacked_std,acc_post_mean,acc_post_std,recovery
  struct Arm {
    double attacked = 0.0, post = 0.0, recovery = 0.0;
  };
  std::map<std::string, Arm> arms;
  const auto rows = read_csv(opt.out_dir / "defend_summary.csv");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() < 10) continue;
    Arm arm;
    arm.attacked = std::stod(rows[r][5]);
    arm.post = std::stod(rows[r][7]);
    arm.recovery = rows[r][9].empty() ? 0.0 : std::stod(rows[r][9]);
    arms[rows[r][1]] = arm;
  }
  if (arms.size() != 3) return {false, fmt("expected 3 defense arms, found %zu", arms.size())};

  const Arm& trim = arms.at("trim");
  const Arm& relabel = arms.at("relabel");
  const Arm& reweight = arms.at("reweight");
  const bool ok = trim.recovery >= 0.5 && relabel.post > relabel.attacked &&
                  reweight.post > reweight.attacked;
  return {ok, fmt("trim recovery %.2f, relabel %.3f vs attacked %.3f, reweight %.3f vs %.3f",
                  trim.recovery, relabel.post, relabel.attacked, reweight.post,
                  reweight.attacked)};
}

// 11. Fairness surrogate on group-imbalanced blobs: sign agreement with the
//     exact fairness influence on at least 80% of samples, and a joint-rank
//     trim of the bottom 5% does not raise the mean test parity gap.
Outcome check_fairness() {
  double min_agree = 1.0;
  double pre_sum = 0.0, post_sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const BlobsRun run = trained_blobs(seed, /*with_groups=*/true, /*flips=*/0);
    const ParamVector& theta = run.tr.final_params;
    const Dataset& tr = run.data.train;

    const InfluenceReport fair_ip = ip_fairness(theta, tr, run.data.val);
    const InfluenceReport fair_exact = exact_fairness_influence(
        theta, tr, run.data.val, kBlobsLambda, run.tcfg.weight_decay);
    min_agree = std::min(min_agree, sign_agreement(fair_ip, fair_exact));

    const InfluenceReport util = ip_utility(theta, tr, run.data.val);
    const std::vector<SampleId> picked = joint_rank(util, fair_ip, 0.05);  // 7 of 150
    const Dataset trimmed = apply_trim(tr, picked);
    const TrainResult retrained = train(trimmed, Arch::linear(tr.dim()), run.tcfg);

    pre_sum += dp_gap(theta, run.data.test);
    post_sum += dp_gap(retrained.final_params, run.data.test);
  }
  const double pre = pre_sum / 5.0, post = post_sum / 5.0;
  const bool ok = min_agree >= 0.8 && post <= pre;
  return {ok, fmt("min sign agreement %.2f, mean parity gap %.4f -> %.4f", min_agree,
                  pre, post)};
}

// 12. Ensemble identities: identical members reproduce the single-model
//     score, a (0,0) dropout spec is a strict no-op, and rerunning the
//     score pipeline under a fixed seed reproduces the score CSVs byte for
//     byte.
Outcome check_ensemble_identities() {
  const BlobsRun run = trained_blobs(1);
  const ParamVector& theta = run.tr.final_params;
  const Dataset& tr = run.data.train;
  const Dataset& val = run.data.val;

  const std::vector<ParamVector> copies(5, theta);
  const InfluenceReport averaged =
      ensemble_influence(copies, tr, val, Objective::kUtility);
  const InfluenceReport single = ip_utility(theta, tr, val);
  double max_gap = 0.0;
  for (const auto& [id, score] : single.scores)
    max_gap = std::max(max_gap, std::abs(averaged.scores.at(id) - score));

  EnsembleSpec no_op;
  no_op.dropout_lo = 0.0;
  no_op.dropout_hi = 0.0;
  no_op.seed = 77;
  bool bitwise = true;
  for (const ParamVector& member :
       generate_param_sets(theta, run.tr.checkpoints, tr, no_op, run.tcfg))
    bitwise = bitwise && (member.values.array() == theta.values.array()).all();

  const ConfigMap cfg = parse_config_text("");
  RunOptions opt;
  opt.seeds = {1};
  opt.out_dir = scratch_root() / "verify-a";
  const fs::path dir_a = run_verify(cfg, opt).front();
  opt.out_dir = scratch_root() / "verify-b";
  const fs::path dir_b = run_verify(cfg, opt).front();
  const bool bytes_equal =
      slurp(dir_a / "scores_utility_ip.csv") == slurp(dir_b / "scores_utility_ip.csv") &&
      slurp(dir_a / "scores_utility_exact.csv") ==
          slurp(dir_b / "scores_utility_exact.csv") &&
      !slurp(dir_a / "scores_utility_ip.csv").empty();

  const bool ok = max_gap <= 1e-12 && bitwise && bytes_equal;
  return {ok, fmt("identical-member gap %.1e, dropout(0,0) bitwise %s, rerun CSVs %s",
                  max_gap, bitwise ? "yes" : "NO", bytes_equal ? "byte-equal" : "DIFFER")};
}

}  // namespace

int main() {
  struct Check {
    const char* label;
    double budget_s;
    std::function<Outcome()> fn;
  };
  const std::vector<Check> checks = {
      {"per-sample gradients vs central differences", 10, check_gradients},
      {"Hessian symmetry, FD agreement, damping floor", 10, check_hessian},
      {"iterative inverse-Hessian solve vs direct solve", 30, check_lissa},
      {"rank agreement of direct solve and inner product", 60, check_rank_agreement},
      {"flipped samples score negative and rank bottom-15", 60, check_convex_detection},
      {"MLP flip detection, single model and dropout ensemble", 300,
       check_nonconvex_detection},
      {"bottom-decile trim improves noisy-moons accuracy", 300, check_curation_benefit},
      {"large damping collapses the solve onto the inner product", 30,
       check_damping_limit},
      {"margin attack boundary placement and mirroring", 5, check_attack_geometry},
      {"defense arms recover accuracy after a margin attack", 300, check_defense},
      {"fairness sign agreement and joint-rank trim", 300, check_fairness},
      {"ensemble identities and byte-stable score files", 30, check_ensemble_identities},
  };

  std::error_code ec;
  fs::create_directories(scratch_root(), ec);

  bool all_ok = true;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const auto t0 = Clock::now();
    Outcome outcome;
    try {
      outcome = checks[i].fn();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool within = secs <= checks[i].budget_s;
    const bool ok = outcome.ok && within;
    all_ok = all_ok && ok;
    std::printf("[%2zu/12] %s %7.2fs of %3.0fs  %s: %s%s\n", i + 1, ok ? "PASS" : "FAIL",
                secs, checks[i].budget_s, checks[i].label, outcome.detail.c_str(),
                within ? "" : " (budget exceeded)");
    std::fflush(stdout);
  }

  fs::remove_all(scratch_root(), ec);
  std::printf("acceptance: %s\n", all_ok ? "PASS" : "FAIL");
  return all_ok ? 0 : 1;
}
