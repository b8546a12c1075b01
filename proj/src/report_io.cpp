#include "ipinf/report_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include <nlohmann/json.hpp>

#include "ipinf/errors.hpp"

namespace ipinf {

namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_real(const std::string& s, long row, const char* what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw CsvFormatError("row " + std::to_string(row) + ": malformed " + what + " '" + s + "'",
                        row);
  return v;
}

long long parse_int(const std::string& s, long row, const char* what) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw CsvFormatError("row " + std::to_string(row) + ": malformed " + what + " '" + s + "'",
                        row);
  return v;
}

json arch_to_json(const Arch& arch) {
  json j;
  j["kind"] = arch.kind == ArchKind::kLinear ? "linear" : "mlp";
  j["input_dim"] = arch.input_dim;
  j["hidden"] = arch.hidden;
  return j;
}

Arch arch_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const int input_dim = j.at("input_dim").get<int>();
  if (kind == "linear") return Arch::linear(input_dim);
  if (kind == "mlp") return Arch::mlp(input_dim, j.at("hidden").get<std::vector<int>>());
  throw std::invalid_argument("unknown architecture kind '" + kind + "'");
}

}  // namespace

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  validate_dataset(ds);
  std::string out = "id";
  for (int j = 0; j < ds.dim(); ++j) out += ",f" + std::to_string(j);
  out += ",label";
  if (ds.group) out += ",group";
  out += "\n";
  for (int i = 0; i < ds.n(); ++i) {
    out += std::to_string(ds.ids[static_cast<std::size_t>(i)]);
    for (int j = 0; j < ds.dim(); ++j) out += "," + format_real(ds.features(i, j));
    out += "," + std::to_string(ds.labels(i));
    if (ds.group) out += "," + std::to_string((*ds.group)(i));
    out += "\n";
  }
  atomic_write_file(path, out);
}

Dataset load_csv(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw CsvFormatError("empty file " + path.string(), 0);

  const std::vector<std::string> header = split_line(line);
  if (header.size() < 3 || header.front() != "id")
    throw CsvFormatError("header must read id,f0..,label[,group]", 0);
  bool has_group = header.back() == "group";
  const std::size_t label_col = header.size() - (has_group ? 2 : 1);
  if (header[label_col] != "label")
    throw CsvFormatError("header must read id,f0..,label[,group]", 0);
  const int d = static_cast<int>(label_col) - 1;
  if (d <= 0) throw CsvFormatError("header lists no feature columns", 0);
  for (int j = 0; j < d; ++j)
    if (header[static_cast<std::size_t>(j) + 1] != "f" + std::to_string(j))
      throw CsvFormatError("feature columns must be named f0..f" + std::to_string(d - 1), 0);

  std::vector<std::vector<std::string>> rows;
  long row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size())
      throw CsvFormatError("row " + std::to_string(row) + ": expected " +
                               std::to_string(header.size()) + " fields, found " +
                               std::to_string(fields.size()),
                           row);
    rows.push_back(std::move(fields));
  }

  Dataset ds;
  const long n = static_cast<long>(rows.size());
  ds.features.resize(n, d);
  ds.labels.resize(n);
  ds.ids.reserve(rows.size());
  if (has_group) ds.group.emplace(n);
  for (long i = 0; i < n; ++i) {
    const auto& fields = rows[static_cast<std::size_t>(i)];
    ds.ids.push_back(parse_int(fields[0], i + 1, "id"));
    for (int j = 0; j < d; ++j)
      ds.features(i, j) = parse_real(fields[static_cast<std::size_t>(j) + 1], i + 1, "feature");
    const long long label = parse_int(fields[label_col], i + 1, "label");
    if (label != 0 && label != 1)
      throw CsvFormatError("row " + std::to_string(i + 1) + ": label must be 0 or 1", i + 1);
    ds.labels(i) = static_cast<int>(label);
    if (has_group) {
      const long long g = parse_int(fields.back(), i + 1, "group");
      if (g != 0 && g != 1)
        throw CsvFormatError("row " + std::to_string(i + 1) + ": group must be 0 or 1", i + 1);
      (*ds.group)(i) = static_cast<int>(g);
    }
  }
  validate_dataset(ds);
  return ds;
}

void save_report_csv(const InfluenceReport& report, const std::filesystem::path& path) {
  std::string out = "id,score\n";
  for (const auto& [id, s] : report.scores)
    out += std::to_string(id) + "," + format_real(s) + "\n";
  atomic_write_file(path, out);
}

void save_report_sidecar(const InfluenceReport& report, const std::filesystem::path& path,
                         std::uint64_t seed, double runtime_ms) {
  json j;
  j["schema_version"] = 1;
  j["method"] = method_name(report.method);
  j["objective"] = objective_name(report.objective);
  j["model_fingerprint"] = report.model_fingerprint;
  j["seed"] = seed;
  j["runtime_ms"] = runtime_ms;
  if (report.ensemble) {
    const EnsembleSpec& e = *report.ensemble;
    json je;
    je["strategy"] = e.strategy == EnsembleStrategy::kCheckpoint ? "checkpoint"
                     : e.strategy == EnsembleStrategy::kExtraSgd ? "extra_sgd"
                                                                 : "dropout";
    je["size"] = e.size;
    je["dropout_lo"] = e.dropout_lo;
    je["dropout_hi"] = e.dropout_hi;
    je["extra_sgd_steps"] = e.extra_sgd_steps;
    je["seed"] = e.seed;
    j["ensemble"] = je;
  } else {
    j["ensemble"] = nullptr;
  }
  atomic_write_file(path, j.dump(2) + "\n");
}

void save_params_json(const ParamVector& theta, const std::filesystem::path& path) {
  json j;
  j["schema_version"] = 1;
  j["arch"] = arch_to_json(theta.arch);
  j["values"] = std::vector<double>(theta.values.data(),
                                    theta.values.data() + theta.values.size());
  atomic_write_file(path, j.dump(2) + "\n");
}

ParamVector load_params_json(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  ParamVector theta;
  theta.arch = arch_from_json(j.at("arch"));
  const auto values = j.at("values").get<std::vector<double>>();
  if (static_cast<int>(values.size()) != theta.arch.param_count())
    throw std::invalid_argument("parameter vector length does not match architecture");
  theta.values = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                   static_cast<long>(values.size()));
  return theta;
}

namespace {

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <typename T>
std::optional<T> get_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

std::string eval_record_to_json(const EvalRecord& rec) {
  json j;
  j["schema_version"] = 1;
  j["dataset"] = rec.dataset;
  j["method"] = rec.method;
  j["objective"] = rec.objective;
  j["action"] = rec.action;
  j["fraction"] = rec.fraction;
  j["seed"] = rec.seed;
  j["acc_pre"] = rec.acc_pre;
  j["acc_post"] = rec.acc_post;
  j["runtime_ms"] = rec.runtime_ms;
  put_optional(j, "fair_pre", rec.fair_pre);
  put_optional(j, "fair_post", rec.fair_post);
  put_optional(j, "recall_at_k", rec.recall_at_k);
  put_optional(j, "k", rec.k);
  put_optional(j, "gamma", rec.gamma);
  put_optional(j, "attack_fraction", rec.attack_fraction);
  put_optional(j, "draw", rec.draw);
  put_optional(j, "acc_attacked", rec.acc_attacked);
  return j.dump(2) + "\n";
}

EvalRecord eval_record_from_json(const std::string& text) {
  const json j = json::parse(text);
  EvalRecord rec;
  rec.dataset = j.value("dataset", "");
  rec.method = j.at("method").get<std::string>();
  rec.objective = j.value("objective", "utility");
  rec.action = j.at("action").get<std::string>();
  rec.fraction = j.at("fraction").get<double>();
  rec.seed = j.at("seed").get<std::uint64_t>();
  rec.acc_pre = j.at("acc_pre").get<double>();
  rec.acc_post = j.at("acc_post").get<double>();
  rec.runtime_ms = j.value("runtime_ms", 0.0);
  rec.fair_pre = get_optional<double>(j, "fair_pre");
  rec.fair_post = get_optional<double>(j, "fair_post");
  rec.recall_at_k = get_optional<double>(j, "recall_at_k");
  rec.k = get_optional<int>(j, "k");
  rec.gamma = get_optional<double>(j, "gamma");
  rec.attack_fraction = get_optional<double>(j, "attack_fraction");
  rec.draw = get_optional<int>(j, "draw");
  rec.acc_attacked = get_optional<double>(j, "acc_attacked");
  return rec;
}

void save_eval_record(const EvalRecord& rec, const std::filesystem::path& path) {
  atomic_write_file(path, eval_record_to_json(rec));
}

EvalRecord load_eval_record(const std::filesystem::path& path) {
  return eval_record_from_json(read_file(path));
}

}  // namespace ipinf
