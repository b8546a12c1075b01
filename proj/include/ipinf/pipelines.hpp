#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ipinf/config.hpp"

namespace ipinf {

struct RunOptions {
  std::filesystem::path out_dir = "out";
  int workers = 1;
  std::vector<std::uint64_t> seeds{1};
};

/// Score-quality experiment: trains on a synthetic split, scores the
/// training set with the inner-product estimator (and, when the model is
/// linear, the damped direct solve plus optionally the iterative solver),
/// then writes score tables, scatter data, rank correlations, and detection
/// stats into one directory per seed. Returns the run directories.
std::vector<std::filesystem::path> run_verify(const ConfigMap& cfg, const RunOptions& opt);

/// Curation grid: methods x actions x fractions x seeds, one EvalRecord file
/// per cell, plus a mean/std summary table across seeds at the output root.
std::vector<std::filesystem::path> run_curate(const ConfigMap& cfg, const RunOptions& opt);

/// Attack-and-defend protocol: per seed, trains a base model, measures clean
/// accuracy, crafts attacked test sets per (fraction, draw), then for each
/// (method, action) arm curates against a perturbed validation copy,
/// retrains, and records defended accuracy on every attacked test set.
std::vector<std::filesystem::path> run_defend(const ConfigMap& cfg, const RunOptions& opt);

/// Scans run directories for manifests, drops duplicates by run fingerprint,
/// merges EvalRecords into one CSV per experiment kind, and recomputes the
/// per-cell mean/std summaries.
void run_report(const std::vector<std::filesystem::path>& run_dirs,
                const std::filesystem::path& out_dir);

}  // namespace ipinf
