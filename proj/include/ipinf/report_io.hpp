#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "ipinf/curation.hpp"
#include "ipinf/dataset.hpp"
#include "ipinf/influence.hpp"
#include "ipinf/model.hpp"

namespace ipinf {

/// %.17g rendering: enough significant digits to round-trip a double.
std::string format_real(double v);

/// Writes via a temporary file in the same directory, then renames, so
/// readers never observe partial content.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

/// Dataset CSV: header `id,f0..f{d-1},label[,group]`, one row per sample,
/// reals carrying 17 significant digits.
void save_csv(const Dataset& ds, const std::filesystem::path& path);

/// Strict parse of the same schema; malformed content raises CsvFormatError
/// naming the offending row.
Dataset load_csv(const std::filesystem::path& path);

/// Score table `id,score` sorted by id. Bytes depend only on the scores.
void save_report_csv(const InfluenceReport& report, const std::filesystem::path& path);

/// Companion metadata: method, objective, ensemble settings, model
/// fingerprint, seed, and timing.
void save_report_sidecar(const InfluenceReport& report, const std::filesystem::path& path,
                         std::uint64_t seed, double runtime_ms);

void save_params_json(const ParamVector& theta, const std::filesystem::path& path);
ParamVector load_params_json(const std::filesystem::path& path);

std::string eval_record_to_json(const EvalRecord& rec);
EvalRecord eval_record_from_json(const std::string& text);
void save_eval_record(const EvalRecord& rec, const std::filesystem::path& path);
EvalRecord load_eval_record(const std::filesystem::path& path);

}  // namespace ipinf
