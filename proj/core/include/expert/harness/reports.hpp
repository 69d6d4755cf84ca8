#pragma once

#include <filesystem>
#include <string>

#include "expert/metrics.hpp"

namespace expert::harness {

// MetricsReport <-> JSON, including the full 256-entry curve arrays so the
// curve CSVs can be regenerated from a stored report.
std::string metrics_report_to_json(const metrics::MetricsReport& report);
metrics::MetricsReport metrics_report_from_json(const std::string& json_text);

void write_metrics_report(const std::filesystem::path& path, const metrics::MetricsReport& report);
metrics::MetricsReport read_metrics_report(const std::filesystem::path& path);

// fm_curve.csv: threshold,precision,recall,f — pr_curve.csv: recall,precision.
void write_fm_curve_csv(const std::filesystem::path& path, const metrics::MetricsReport& report);
void write_pr_curve_csv(const std::filesystem::path& path, const metrics::MetricsReport& report);

}  // namespace expert::harness
