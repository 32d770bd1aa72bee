#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "urscheck/orchestrator.hpp"

namespace urscheck {

/// Everything a result directory holds, with dataset-level results recomputed
/// from the stored unit files.
struct ReportDocument {
  int schema_version = kSchemaVersion;
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<UnitRecord> units;
  std::vector<CombinedResult> combined;
  /// Rows of {dataset, sampler, test, wall_seconds, units}.
  nlohmann::json timing = nlohmann::json::array();
};

nlohmann::json to_json(const ReportDocument& doc);
ReportDocument report_from_json(const nlohmann::json& j);

/// Reads manifest.json and every unit file under `result_dir`. Tests listed in
/// a campaign's config without any unit file are reported as NotRun. Throws
/// std::runtime_error on a missing or corrupt directory.
ReportDocument load_report(const std::string& result_dir);

/// Plain-text table: one row per dataset/sampler campaign, #F and p-value per
/// test; p-values above alpha carry a trailing '*'. Followed by a timing table.
std::string render_table(const ReportDocument& doc);

/// Writes summary.json and summary.txt into `result_dir`.
void write_summary(const std::string& result_dir, const ReportDocument& doc);

}  // namespace urscheck
