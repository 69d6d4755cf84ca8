#include "expert/harness/reports.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>

#include "expert/errors.hpp"

namespace expert::harness {

using nlohmann::json;

std::string metrics_report_to_json(const metrics::MetricsReport& report) {
  json j;
  j["mae"] = report.mae;
  j["max_f"] = report.max_f;
  j["max_e"] = report.max_e;
  j["s"] = report.s;
  j["n_images"] = report.n_images;
  j["n_empty_gt"] = report.n_empty_gt;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["f"] = report.f;
  return j.dump(2);
}

metrics::MetricsReport metrics_report_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what(),
                      static_cast<std::size_t>(e.byte));
  }
  metrics::MetricsReport report;
  try {
    report.mae = j.at("mae").get<double>();
    report.max_f = j.at("max_f").get<double>();
    report.max_e = j.at("max_e").get<double>();
    report.s = j.at("s").get<double>();
    report.n_images = j.at("n_images").get<int>();
    report.n_empty_gt = j.at("n_empty_gt").get<int>();
    const auto curve = [&](const char* key, std::array<double, metrics::kNumThresholds>& out) {
      const json& arr = j.at(key);
      if (!arr.is_array() || arr.size() != out.size()) {
        throw ConfigError(std::string("report key '") + key + "' must be an array of " +
                          std::to_string(out.size()) + " numbers");
      }
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = arr[i].get<double>();
    };
    curve("precision", report.precision);
    curve("recall", report.recall);
    curve("f", report.f);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
  return report;
}

void write_metrics_report(const std::filesystem::path& path,
                          const metrics::MetricsReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open report for writing: " + path.string());
  out << metrics_report_to_json(report) << '\n';
  if (!out) throw InputError("failed writing report: " + path.string());
}

metrics::MetricsReport read_metrics_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open report: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return metrics_report_from_json(buf.str());
}

void write_fm_curve_csv(const std::filesystem::path& path,
                        const metrics::MetricsReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open curve csv for writing: " + path.string());
  out << "threshold,precision,recall,f\n" << std::setprecision(17);
  for (int t = 0; t < metrics::kNumThresholds; ++t) {
    out << t << ',' << report.precision[static_cast<std::size_t>(t)] << ','
        << report.recall[static_cast<std::size_t>(t)] << ','
        << report.f[static_cast<std::size_t>(t)] << '\n';
  }
  if (!out) throw InputError("failed writing curve csv: " + path.string());
}

void write_pr_curve_csv(const std::filesystem::path& path,
                        const metrics::MetricsReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open curve csv for writing: " + path.string());
  out << "recall,precision\n" << std::setprecision(17);
  for (int t = 0; t < metrics::kNumThresholds; ++t) {
    out << report.recall[static_cast<std::size_t>(t)] << ','
        << report.precision[static_cast<std::size_t>(t)] << '\n';
  }
  if (!out) throw InputError("failed writing curve csv: " + path.string());
}

}  // namespace expert::harness
