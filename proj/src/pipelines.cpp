#include "ipinf/pipelines.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "ipinf/curation.hpp"
#include "ipinf/errors.hpp"
#include "ipinf/metrics.hpp"
#include "ipinf/report_io.hpp"

namespace ipinf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Runs fn(0..n-1) across at most `workers` threads. The first exception
/// stops the remaining cells and is rethrown on the caller's thread.
void parallel_cells(std::size_t n, int workers,
                    const std::function<void(std::size_t)>& fn) {
  const int pool = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (pool == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(pool);
  for (int t = 0; t < pool; ++t) threads.emplace_back(body);
  for (std::thread& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::string run_fingerprint(const std::string& kind, const std::string& echo,
                            std::uint64_t seed) {
  std::uint64_t h = fnv1a64(kind.data(), kind.size());
  h = fnv1a64(echo.data(), echo.size(), h);
  h = fnv1a64(&seed, sizeof(seed), h);
  return hex64(h);
}

void write_manifest(const fs::path& dir, const std::string& kind, std::uint64_t seed,
                    const std::vector<std::uint64_t>& all_seeds, const std::string& echo) {
  atomic_write_file(dir / "config.txt", echo);
  json m;
  m["schema_version"] = 1;
  m["kind"] = kind;
  m["seed"] = seed;
  m["seeds"] = all_seeds;
  m["fingerprint"] = run_fingerprint(kind, echo, seed);
  atomic_write_file(dir / "manifest.json", m.dump(2) + "\n");
}

/// "0.05" -> "0p05": dot-free tag for file names.
std::string frac_tag(double f) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", f);
  std::string s(buf);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

Objective objective_from_mode(const std::string& mode) {
  if (mode == "utility") return Objective::kUtility;
  if (mode == "fairness") return Objective::kFairness;
  if (mode == "robustness") return Objective::kRobustness;
  throw UsageError("unknown influence mode '" + mode + "'");
}

InfluenceReport ip_by_objective(const ParamVector& theta, const Dataset& train,
                                const Dataset& val_view, Objective obj) {
  switch (obj) {
    case Objective::kUtility:
      return ip_utility(theta, train, val_view);
    case Objective::kFairness:
      return ip_fairness(theta, train, val_view);
    case Objective::kRobustness:
      return ip_robustness(theta, train, val_view);
  }
  throw std::invalid_argument("unhandled objective");
}

InfluenceReport exact_by_objective(const ParamVector& theta, const Dataset& train,
                                   const Dataset& val_view, Objective obj, double lambda,
                                   double weight_decay) {
  switch (obj) {
    case Objective::kUtility:
      return exact_influence(theta, train, val_view, lambda, weight_decay);
    case Objective::kFairness:
      return exact_fairness_influence(theta, train, val_view, lambda, weight_decay);
    case Objective::kRobustness:
      return exact_robustness_influence(theta, train, val_view, lambda, weight_decay);
  }
  throw std::invalid_argument("unhandled objective");
}

void write_scatter_csv(const InfluenceReport& exact, const InfluenceReport& ip,
                       const fs::path& path) {
  std::string out = "id,exact,ip\n";
  for (const auto& [id, e] : exact.scores) {
    out += std::to_string(id);
    out += ",";
    out += format_real(e);
    out += ",";
    out += format_real(ip.scores.at(id));
    out += "\n";
  }
  atomic_write_file(path, out);
}

// ---------------------------------------------------------------------------
// Record aggregation shared by the grid pipelines and the report command.

const char* kRecordHeader =
    "dataset,method,objective,action,fraction,seed,acc_pre,acc_post,fair_pre,fair_post,"
    "recall_at_k,k,runtime_ms,gamma,attack_fraction,draw,acc_attacked\n";

std::string opt_cell(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string{};
}

std::string record_row(const EvalRecord& r) {
  std::string row;
  row += r.dataset + "," + r.method + "," + r.objective + "," + r.action + ",";
  row += format_real(r.fraction) + "," + std::to_string(r.seed) + ",";
  row += format_real(r.acc_pre) + "," + format_real(r.acc_post) + ",";
  row += opt_cell(r.fair_pre) + "," + opt_cell(r.fair_post) + ",";
  row += opt_cell(r.recall_at_k) + "," + (r.k ? std::to_string(*r.k) : std::string{}) + ",";
  row += format_real(r.runtime_ms) + ",";
  row += opt_cell(r.gamma) + "," + opt_cell(r.attack_fraction) + ",";
  row += (r.draw ? std::to_string(*r.draw) : std::string{}) + ",";
  row += opt_cell(r.acc_attacked) + "\n";
  return row;
}

struct Stat {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for fewer than 2 values
  int n = 0;
};

Stat summarize(const std::vector<double>& xs) {
  Stat s;
  s.n = static_cast<int>(xs.size());
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / s.n;
  if (s.n > 1) {
    double sq = 0.0;
    for (double x : xs) sq += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(sq / (s.n - 1));
  }
  return s;
}

std::string stat_cells(const Stat& s) {
  if (s.n == 0) return ",";
  return format_real(s.mean) + "," + format_real(s.stddev);
}

void write_records_csv(const std::vector<EvalRecord>& records, const fs::path& path) {
  std::string out = kRecordHeader;
  for (const EvalRecord& r : records) out += record_row(r);
  atomic_write_file(path, out);
}

/// Curation cells keyed by (method, objective, action, fraction), averaged
/// over seeds.
void write_curate_summary(const std::vector<EvalRecord>& records, const fs::path& path) {
  using Key = std::tuple<std::string, std::string, std::string, double>;
  std::map<Key, std::vector<const EvalRecord*>> cells;
  for (const EvalRecord& r : records)
    cells[{r.method, r.objective, r.action, r.fraction}].push_back(&r);
  std::string out =
      "method,objective,action,fraction,runs,acc_pre_mean,acc_pre_std,acc_post_mean,"
      "acc_post_std,fair_pre_mean,fair_pre_std,fair_post_mean,fair_post_std,"
      "recall_mean,recall_std\n";
  for (const auto& [key, rows] : cells) {
    std::vector<double> pre, post, fpre, fpost, recall;
    for (const EvalRecord* r : rows) {
      pre.push_back(r->acc_pre);
      post.push_back(r->acc_post);
      if (r->fair_pre) fpre.push_back(*r->fair_pre);
      if (r->fair_post) fpost.push_back(*r->fair_post);
      if (r->recall_at_k) recall.push_back(*r->recall_at_k);
    }
    out += std::get<0>(key) + "," + std::get<1>(key) + "," + std::get<2>(key) + ",";
    out += format_real(std::get<3>(key)) + "," + std::to_string(rows.size()) + ",";
    out += stat_cells(summarize(pre)) + "," + stat_cells(summarize(post)) + ",";
    out += stat_cells(summarize(fpre)) + "," + stat_cells(summarize(fpost)) + ",";
    out += stat_cells(summarize(recall)) + "\n";
  }
  atomic_write_file(path, out);
}

/// Defense cells keyed by (method, action, attacked fraction), averaged over
/// seeds and attack draws. Recovery compares mean regained accuracy against
/// the mean attack-induced drop.
void write_defend_summary(const std::vector<EvalRecord>& records, const fs::path& path) {
  using Key = std::tuple<std::string, std::string, double>;
  std::map<Key, std::vector<const EvalRecord*>> cells;
  for (const EvalRecord& r : records)
    if (r.attack_fraction) cells[{r.method, r.action, *r.attack_fraction}].push_back(&r);
  std::string out =
      "method,action,attack_fraction,runs,acc_pre_mean,acc_attacked_mean,acc_attacked_std,"
      "acc_post_mean,acc_post_std,recovery\n";
  for (const auto& [key, rows] : cells) {
    std::vector<double> pre, attacked, post;
    for (const EvalRecord* r : rows) {
      pre.push_back(r->acc_pre);
      post.push_back(r->acc_post);
      if (r->acc_attacked) attacked.push_back(*r->acc_attacked);
    }
    const Stat s_pre = summarize(pre);
    const Stat s_att = summarize(attacked);
    const Stat s_post = summarize(post);
    const double drop = s_pre.mean - s_att.mean;
    const std::string recovery =
        drop > 0.0 ? format_real((s_post.mean - s_att.mean) / drop) : std::string{};
    out += std::get<0>(key) + "," + std::get<1>(key) + ",";
    out += format_real(std::get<2>(key)) + "," + std::to_string(rows.size()) + ",";
    out += format_real(s_pre.mean) + "," + stat_cells(s_att) + "," + stat_cells(s_post) +
           "," + recovery + "\n";
  }
  atomic_write_file(path, out);
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<fs::path> run_verify(const ConfigMap& cfg, const RunOptions& opt) {
  const VerifyConfig v = make_verify_config(cfg, {});
  const std::string echo = cfg.echo();
  std::vector<fs::path> dirs(opt.seeds.size());

  parallel_cells(opt.seeds.size(), opt.workers, [&](std::size_t i) {
    const std::uint64_t seed = opt.seeds[i];
    const fs::path dir = opt.out_dir / ("verify-seed" + std::to_string(seed));
    fs::create_directories(dir);

    const SplitData data = build_dataset(v.data, seed);
    const Arch arch = v.model.make_arch(static_cast<int>(data.train.dim()));
    TrainConfig tcfg = v.train;
    tcfg.seed = seed;

    const auto t_train = Clock::now();
    const TrainResult tr = train(data.train, arch, tcfg);
    const double train_ms = ms_since(t_train);
    const ParamVector& theta = tr.final_params;

    save_csv(data.train, dir / "train.csv");
    save_csv(data.val, dir / "val.csv");
    save_csv(data.test, dir / "test.csv");
    save_params_json(theta, dir / "params.json");
    if (!data.noise.flipped_ids.empty()) {
      json noise;
      noise["flipped_ids"] = data.noise.flipped_ids;
      noise["original_labels"] = json::object();
      for (const auto& [id, label] : data.noise.original_labels)
        noise["original_labels"][std::to_string(id)] = label;
      atomic_write_file(dir / "noise.json", noise.dump(2) + "\n");
    }
    if (v.save_checkpoints)
      for (std::size_t c = 0; c < tr.checkpoints.size(); ++c)
        save_params_json(tr.checkpoints[c],
                         dir / ("checkpoint_" + std::to_string(c) + ".json"));

    json metrics;
    metrics["schema_version"] = 1;
    metrics["seed"] = seed;
    metrics["model_fingerprint"] = fingerprint(theta);
    metrics["train_accuracy"] = accuracy(theta, data.train);
    metrics["test_accuracy"] = accuracy(theta, data.test);
    metrics["train_ms"] = train_ms;
    metrics["modes"] = json::object();

    const bool linear = arch.kind == ArchKind::kLinear;
    for (const std::string& mode : v.modes) {
      const Objective obj = objective_from_mode(mode);
      json m;

      Dataset val_view = data.val;
      if (obj == Objective::kRobustness) {
        val_view =
            craft_adversarial(data.val, theta, v.gamma, 1.0, mix_seed(seed, 11)).first;
        save_csv(val_view, dir / "val_attacked.csv");
        m["gamma"] = v.gamma;
      }
      if (obj == Objective::kFairness) m["dp_gap"] = dp_gap(theta, val_view);

      const auto t_ip = Clock::now();
      const InfluenceReport ip = ip_by_objective(theta, data.train, val_view, obj);
      m["ip_ms"] = ms_since(t_ip);
      save_report_csv(ip, dir / ("scores_" + mode + "_ip.csv"));
      save_report_sidecar(ip, dir / ("scores_" + mode + "_ip.json"), seed,
                          m["ip_ms"].get<double>());

      if (linear) {
        const auto t_exact = Clock::now();
        const InfluenceReport exact = exact_by_objective(theta, data.train, val_view, obj,
                                                         v.lambda, tcfg.weight_decay);
        m["exact_ms"] = ms_since(t_exact);
        save_report_csv(exact, dir / ("scores_" + mode + "_exact.csv"));
        save_report_sidecar(exact, dir / ("scores_" + mode + "_exact.json"), seed,
                            m["exact_ms"].get<double>());
        write_scatter_csv(exact, ip, dir / ("scatter_" + mode + ".csv"));

        const RankCorrelation rc = rank_correlation(exact, ip);
        m["spearman"] = rc.spearman;
        m["kendall"] = rc.kendall;
        m["sign_agreement"] = sign_agreement(exact, ip);

        if (obj == Objective::kUtility && v.run_lissa) {
          LissaConfig lc = v.lissa;
          lc.weight_decay = tcfg.weight_decay;
          lc.seed = seed;
          const auto t_lissa = Clock::now();
          const InfluenceReport lissa = lissa_influence(theta, data.train, val_view, lc);
          m["lissa_ms"] = ms_since(t_lissa);
          save_report_csv(lissa, dir / "scores_utility_lissa.csv");
          save_report_sidecar(lissa, dir / "scores_utility_lissa.json", seed,
                              m["lissa_ms"].get<double>());
          m["lissa_spearman"] = rank_correlation(exact, lissa).spearman;
        }
      }

      if (obj == Objective::kUtility && !data.noise.flipped_ids.empty()) {
        const std::vector<SampleId> order = rank_bottom(ip, 1.0);
        const int flips = static_cast<int>(data.noise.flipped_ids.size());
        const DetectionMetrics at_flips = detection_metrics(order, data.noise, flips);
        const DetectionMetrics at_15 = detection_metrics(order, data.noise, 15);
        m["flips"] = flips;
        m["recall_at_flips"] = at_flips.recall;
        m["recall_at_15"] = at_15.recall;

        // Clean-median separation: how many flipped rows score below the
        // median of the untouched rows.
        std::vector<double> clean_scores;
        for (const auto& [id, score] : ip.scores)
          if (!data.noise.flipped_ids.count(id)) clean_scores.push_back(score);
        std::sort(clean_scores.begin(), clean_scores.end());
        const double median = clean_scores[clean_scores.size() / 2];
        int below = 0;
        for (SampleId id : data.noise.flipped_ids)
          if (ip.scores.at(id) < median) ++below;
        m["flipped_below_clean_median"] = below;
        m["all_flipped_below_clean_median"] = (below == flips);
      }

      metrics["modes"][mode] = m;
    }

    atomic_write_file(dir / "metrics.json", metrics.dump(2) + "\n");
    write_manifest(dir, "verify", seed, opt.seeds, echo);
    dirs[i] = dir;
  });
  return dirs;
}

// ---------------------------------------------------------------------------

std::vector<fs::path> run_curate(const ConfigMap& cfg, const RunOptions& opt) {
  const CurateConfig c = make_curate_config(cfg, {});
  const std::string echo = cfg.echo();

  struct Cell {
    std::size_t seed_idx;
    Method method;
    CurationAction action;
    double fraction;
  };
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < opt.seeds.size(); ++s)
    for (Method m : c.methods)
      for (CurationAction a : c.actions)
        for (double f : c.fractions) cells.push_back({s, m, a, f});

  std::vector<fs::path> dirs(opt.seeds.size());
  for (std::size_t s = 0; s < opt.seeds.size(); ++s) {
    dirs[s] = opt.out_dir / ("curate-seed" + std::to_string(opt.seeds[s]));
    fs::create_directories(dirs[s] / "records");
    write_manifest(dirs[s], "curate", opt.seeds[s], opt.seeds, echo);
  }

  std::vector<EvalRecord> records(cells.size());
  parallel_cells(cells.size(), opt.workers, [&](std::size_t i) {
    const Cell& cell = cells[i];
    const std::uint64_t seed = opt.seeds[cell.seed_idx];

    const SplitData data = build_dataset(c.data, seed);
    const Arch arch = c.model.make_arch(static_cast<int>(data.train.dim()));
    TrainConfig tcfg = c.train;
    tcfg.seed = seed;

    ScoringSpec spec;
    spec.method = cell.method;
    spec.objective = Objective::kUtility;
    spec.ensemble = c.ensemble;
    spec.ensemble.seed = seed;
    spec.lissa = c.lissa;
    spec.lissa.seed = seed;
    spec.lambda = c.lambda;
    spec.weight_decay = tcfg.weight_decay;

    const NoiseRecord* noise = data.noise.flipped_ids.empty() ? nullptr : &data.noise;
    EvalRecord rec = curate_retrain_eval(data.train, data.val, data.test, arch, spec,
                                         cell.action, cell.fraction, c.temperature, tcfg,
                                         noise);
    rec.dataset = c.data.dataset;
    rec.seed = seed;

    const fs::path file =
        dirs[cell.seed_idx] / "records" /
        ("record_" + rec.method + "_" + rec.action + "_f" + frac_tag(cell.fraction) +
         ".json");
    save_eval_record(rec, file);
    records[i] = std::move(rec);
  });

  write_records_csv(records, opt.out_dir / "curate_records.csv");
  write_curate_summary(records, opt.out_dir / "curate_summary.csv");
  return dirs;
}

// ---------------------------------------------------------------------------

std::vector<fs::path> run_defend(const ConfigMap& cfg, const RunOptions& opt) {
  const DefendConfig d = make_defend_config(cfg, {});
  const std::string echo = cfg.echo();

  struct Base {
    SplitData data;
    Arch arch = Arch::linear(2);
    TrainResult tr;
    double acc_pre = 0.0;
    Dataset val_adv;
    std::vector<std::vector<Dataset>> attacked;     // [fraction][draw]
    std::vector<std::vector<double>> acc_attacked;  // matching shape
  };
  std::vector<Base> bases(opt.seeds.size());
  std::vector<fs::path> dirs(opt.seeds.size());

  parallel_cells(opt.seeds.size(), opt.workers, [&](std::size_t s) {
    const std::uint64_t seed = opt.seeds[s];
    Base& b = bases[s];
    b.data = build_dataset(d.data, seed);
    b.arch = d.model.make_arch(static_cast<int>(b.data.train.dim()));
    TrainConfig tcfg = d.train;
    tcfg.seed = seed;
    b.tr = train(b.data.train, b.arch, tcfg);
    b.acc_pre = accuracy(b.tr.final_params, b.data.test);

    // The defender sees an attack on its own validation copy, not the
    // attacked test draws.
    b.val_adv =
        craft_adversarial(b.data.val, b.tr.final_params, d.gamma, 1.0, mix_seed(seed, 97))
            .first;

    b.attacked.resize(d.attack_fractions.size());
    b.acc_attacked.resize(d.attack_fractions.size());
    for (std::size_t f = 0; f < d.attack_fractions.size(); ++f) {
      for (int draw = 0; draw < d.draws; ++draw) {
        const std::uint64_t s_fd = mix_seed(seed, 1000 + f * 64 + draw);
        Dataset adv = craft_adversarial(b.data.test, b.tr.final_params, d.gamma,
                                        d.attack_fractions[f], s_fd)
                          .first;
        b.acc_attacked[f].push_back(accuracy(b.tr.final_params, adv));
        b.attacked[f].push_back(std::move(adv));
      }
    }

    dirs[s] = opt.out_dir / ("defend-seed" + std::to_string(seed));
    fs::create_directories(dirs[s] / "records");
    write_manifest(dirs[s], "defend", seed, opt.seeds, echo);
    save_csv(b.data.train, dirs[s] / "train.csv");
    save_csv(b.data.val, dirs[s] / "val.csv");
    save_csv(b.data.test, dirs[s] / "test.csv");
    save_params_json(b.tr.final_params, dirs[s] / "params.json");
  });

  struct Arm {
    std::size_t seed_idx;
    Method method;
    CurationAction action;
  };
  std::vector<Arm> arms;
  for (std::size_t s = 0; s < opt.seeds.size(); ++s)
    for (Method m : d.methods)
      for (CurationAction a : d.actions) arms.push_back({s, m, a});

  const std::size_t per_arm = d.attack_fractions.size() * static_cast<std::size_t>(d.draws);
  std::vector<EvalRecord> records(arms.size() * per_arm);

  parallel_cells(arms.size(), opt.workers, [&](std::size_t i) {
    const Arm& arm = arms[i];
    const Base& b = bases[arm.seed_idx];
    const std::uint64_t seed = opt.seeds[arm.seed_idx];
    TrainConfig tcfg = d.train;
    tcfg.seed = seed;

    ScoringSpec spec;
    spec.method = arm.method;
    spec.objective = Objective::kRobustness;
    spec.ensemble = d.ensemble;
    spec.ensemble.seed = seed;
    spec.lissa = d.lissa;
    spec.lissa.seed = seed;
    spec.lambda = d.lambda;
    spec.weight_decay = tcfg.weight_decay;

    const auto t_arm = Clock::now();
    const InfluenceReport report =
        score_training_set(b.tr, b.data.train, b.val_adv, spec, tcfg);

    Dataset curated;
    Eigen::VectorXd weights;
    bool weighted = false;
    switch (arm.action) {
      case CurationAction::kTrim:
        curated = apply_trim(b.data.train, rank_bottom(report, d.trim_fraction));
        break;
      case CurationAction::kRelabel:
        curated = apply_relabel(b.data.train, rank_bottom(report, d.trim_fraction));
        break;
      case CurationAction::kReweight: {
        auto [ds, w] = apply_reweight(b.data.train, report, d.temperature);
        curated = std::move(ds);
        weights = std::move(w);
        weighted = true;
        break;
      }
    }
    const TrainResult defended =
        train(curated, b.arch, tcfg, weighted ? &weights : nullptr);
    const double arm_ms = ms_since(t_arm);

    const std::string method = method_name(arm.method);
    const std::string action = action_name(arm.action);
    for (std::size_t f = 0; f < d.attack_fractions.size(); ++f) {
      for (int draw = 0; draw < d.draws; ++draw) {
        EvalRecord rec;
        rec.dataset = d.data.dataset;
        rec.method = method;
        rec.objective = objective_name(Objective::kRobustness);
        rec.action = action;
        rec.fraction = d.trim_fraction;
        rec.seed = seed;
        rec.acc_pre = b.acc_pre;
        rec.acc_post = accuracy(defended.final_params, b.attacked[f][draw]);
        rec.runtime_ms = arm_ms;
        rec.gamma = d.gamma;
        rec.attack_fraction = d.attack_fractions[f];
        rec.draw = draw;
        rec.acc_attacked = b.acc_attacked[f][draw];

        const fs::path file =
            dirs[arm.seed_idx] / "records" /
            ("record_" + method + "_" + action + "_a" + frac_tag(d.attack_fractions[f]) +
             "_d" + std::to_string(draw) + ".json");
        save_eval_record(rec, file);
        records[i * per_arm + f * d.draws + draw] = std::move(rec);
      }
    }
  });

  write_records_csv(records, opt.out_dir / "defend_records.csv");
  write_defend_summary(records, opt.out_dir / "defend_summary.csv");
  return dirs;
}

// ---------------------------------------------------------------------------

namespace {

struct FoundRun {
  std::string kind;
  fs::path dir;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void collect_runs(const fs::path& root, std::map<std::string, FoundRun>& by_fingerprint) {
  if (!fs::exists(root)) throw UsageError("run directory not found: " + root.string());
  std::vector<fs::path> candidates;
  if (fs::exists(root / "manifest.json")) candidates.push_back(root);
  if (fs::is_directory(root))
    for (const auto& entry : fs::recursive_directory_iterator(root))
      if (entry.is_regular_file() && entry.path().filename() == "manifest.json")
        candidates.push_back(entry.path().parent_path());
  for (const fs::path& dir : candidates) {
    json m = json::parse(read_text(dir / "manifest.json"));
    const std::string fp = m.at("fingerprint").get<std::string>();
    if (by_fingerprint.count(fp)) continue;  // duplicate run, keep the first
    by_fingerprint[fp] = {m.at("kind").get<std::string>(), dir};
  }
}

std::vector<EvalRecord> load_run_records(const fs::path& dir) {
  std::vector<EvalRecord> out;
  const fs::path records = dir / "records";
  if (!fs::is_directory(records)) return out;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(records))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const fs::path& f : files) out.push_back(load_eval_record(f));
  return out;
}

std::string json_real_cell(const json& obj, const char* key) {
  if (!obj.contains(key)) return "";
  if (obj[key].is_boolean()) return obj[key].get<bool>() ? "1" : "0";
  return format_real(obj[key].get<double>());
}

}  // namespace

void run_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  std::map<std::string, FoundRun> runs;
  for (const fs::path& dir : run_dirs) collect_runs(dir, runs);
  if (runs.empty()) throw UsageError("no run manifests found under the given directories");

  fs::create_directories(out_dir);
  std::vector<EvalRecord> curate_records, defend_records;
  std::string verify_rows;

  // Deterministic order: sort runs by directory path, not fingerprint.
  std::vector<const FoundRun*> ordered;
  for (const auto& [fp, run] : runs) ordered.push_back(&run);
  std::sort(ordered.begin(), ordered.end(),
            [](const FoundRun* a, const FoundRun* b) { return a->dir < b->dir; });

  for (const FoundRun* run : ordered) {
    if (run->kind == "curate") {
      for (EvalRecord& r : load_run_records(run->dir))
        curate_records.push_back(std::move(r));
    } else if (run->kind == "defend") {
      for (EvalRecord& r : load_run_records(run->dir))
        defend_records.push_back(std::move(r));
    } else if (run->kind == "verify") {
      const fs::path metrics_path = run->dir / "metrics.json";
      if (!fs::exists(metrics_path)) continue;
      const json metrics = json::parse(read_text(metrics_path));
      for (const auto& [mode, m] : metrics.at("modes").items()) {
        verify_rows += std::to_string(metrics.at("seed").get<std::uint64_t>()) + "," + mode;
        for (const char* key :
             {"spearman", "kendall", "sign_agreement", "recall_at_flips", "recall_at_15",
              "all_flipped_below_clean_median", "dp_gap"})
          verify_rows += "," + json_real_cell(m, key);
        verify_rows += "\n";
      }
    }
  }

  if (!curate_records.empty()) {
    write_records_csv(curate_records, out_dir / "report_curate_records.csv");
    write_curate_summary(curate_records, out_dir / "report_curate_summary.csv");
  }
  if (!defend_records.empty()) {
    write_records_csv(defend_records, out_dir / "report_defend_records.csv");
    write_defend_summary(defend_records, out_dir / "report_defend_summary.csv");
  }
  if (!verify_rows.empty()) {
    const std::string header =
        "seed,mode,spearman,kendall,sign_agreement,recall_at_flips,recall_at_15,"
        "all_flipped_below_clean_median,dp_gap\n";
    atomic_write_file(out_dir / "report_verify_metrics.csv", header + verify_rows);
  }
}

}  // namespace ipinf
