// Experiment runner: verify | curate | defend | report over the influence
// library. Exit codes: 0 success, 2 usage error, 3 numeric failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ipinf/config.hpp"
#include "ipinf/errors.hpp"
#include "ipinf/pipelines.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "out";
  int workers = 1;
  std::string method;
  double fraction = 0.0;
  double gamma = 0.0;
  double attack_frac = 0.0;
  int ensemble_size = 0;
  std::string dropout;

  CLI::Option* method_opt = nullptr;
  CLI::Option* fraction_opt = nullptr;
  CLI::Option* gamma_opt = nullptr;
  CLI::Option* attack_opt = nullptr;
  CLI::Option* ensemble_opt = nullptr;
  CLI::Option* dropout_opt = nullptr;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "Config file (sections of key = value)");
  cmd->add_option("--seed", f.seeds, "Run seed, repeatable");
  cmd->add_option("--out", f.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--workers", f.workers, "Max parallel grid cells")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  f.method_opt = cmd->add_option("--method", f.method,
                                 "Score method: ip | exact | self_ip | lissa | ip_ensemble");
  f.fraction_opt = cmd->add_option("--fraction", f.fraction, "Curated fraction override");
  f.gamma_opt = cmd->add_option("--gamma", f.gamma, "Attack strength override");
  f.attack_opt =
      cmd->add_option("--attack-frac", f.attack_frac, "Attacked test fraction override");
  f.ensemble_opt = cmd->add_option("--ensemble", f.ensemble_size, "Ensemble size override");
  f.dropout_opt = cmd->add_option("--dropout", f.dropout, "Dropout bounds as LO,HI");
}

std::pair<double, double> parse_dropout(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos)
    throw ipinf::UsageError("--dropout expects LO,HI, found '" + text + "'");
  try {
    const double lo = std::stod(text.substr(0, comma));
    const double hi = std::stod(text.substr(comma + 1));
    return {lo, hi};
  } catch (const std::exception&) {
    throw ipinf::UsageError("--dropout expects LO,HI, found '" + text + "'");
  }
}

ipinf::CliOverrides collect_overrides(const CommonFlags& f) {
  ipinf::CliOverrides cli;
  cli.seeds = f.seeds;
  if (f.method_opt->count()) cli.method = f.method;
  if (f.fraction_opt->count()) cli.fraction = f.fraction;
  if (f.gamma_opt->count()) cli.gamma = f.gamma;
  if (f.attack_opt->count()) cli.attack_frac = f.attack_frac;
  if (f.ensemble_opt->count()) cli.ensemble_size = f.ensemble_size;
  if (f.dropout_opt->count()) cli.dropout = parse_dropout(f.dropout);
  return cli;
}

int run_kind(const std::string& kind, const CommonFlags& flags,
             const std::vector<std::string>& report_dirs) {
  namespace fs = std::filesystem;
  if (kind == "report") {
    std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
    ipinf::run_report(dirs, flags.out_dir);
    std::printf("wrote report tables under %s\n", flags.out_dir.c_str());
    return 0;
  }

  ipinf::ConfigMap cfg = flags.config_path.empty()
                             ? ipinf::ConfigMap{}
                             : ipinf::parse_config_file(flags.config_path);
  ipinf::apply_overrides(cfg, collect_overrides(flags));

  ipinf::RunOptions opt;
  opt.out_dir = flags.out_dir;
  opt.workers = flags.workers;
  opt.seeds = ipinf::run_seeds(cfg, {});

  std::vector<fs::path> dirs;
  if (kind == "verify")
    dirs = ipinf::run_verify(cfg, opt);
  else if (kind == "curate")
    dirs = ipinf::run_curate(cfg, opt);
  else
    dirs = ipinf::run_defend(cfg, opt);
  for (const fs::path& dir : dirs) std::printf("wrote %s\n", dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inner-product influence experiments"};
  app.require_subcommand(1);

  CommonFlags verify_flags, curate_flags, defend_flags, report_flags;
  std::vector<std::string> report_dirs;

  CLI::App* verify = app.add_subcommand("verify", "Score-quality study on synthetic data");
  add_common_flags(verify, verify_flags);
  CLI::App* curate = app.add_subcommand("curate", "Trim/relabel/reweight grid with retrains");
  add_common_flags(curate, curate_flags);
  CLI::App* defend = app.add_subcommand("defend", "Attack crafting and curation defenses");
  add_common_flags(defend, defend_flags);
  CLI::App* report = app.add_subcommand("report", "Merge run directories into tables");
  add_common_flags(report, report_flags);
  report->add_option("dirs", report_dirs, "Run directories to merge")->required();

  try {
    app.parse(argc, argv);
    if (verify->parsed()) return run_kind("verify", verify_flags, {});
    if (curate->parsed()) return run_kind("curate", curate_flags, {});
    if (defend->parsed()) return run_kind("defend", defend_flags, {});
    return run_kind("report", report_flags, report_dirs);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ipinf::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const ipinf::CsvFormatError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const ipinf::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
