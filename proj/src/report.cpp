#include "urscheck/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace urscheck {

namespace fs = std::filesystem;

nlohmann::json to_json(const ReportDocument& doc) {
  nlohmann::json units = nlohmann::json::array();
  for (const auto& u : doc.units) units.push_back(to_json(u));
  nlohmann::json combined = nlohmann::json::array();
  for (const auto& c : doc.combined) combined.push_back(to_json(c));
  return {{"schema_version", doc.schema_version},
          {"manifest", doc.manifest},
          {"units", units},
          {"combined", combined},
          {"timing", doc.timing}};
}

ReportDocument report_from_json(const nlohmann::json& j) {
  ReportDocument doc;
  doc.schema_version = j.at("schema_version").get<int>();
  if (doc.schema_version != kSchemaVersion)
    throw std::runtime_error("unsupported schema version " + std::to_string(doc.schema_version));
  doc.manifest = j.at("manifest");
  for (const auto& u : j.at("units")) doc.units.push_back(unit_record_from_json(u));
  for (const auto& c : j.at("combined")) doc.combined.push_back(combined_result_from_json(c));
  doc.timing = j.at("timing");
  return doc;
}

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt result file " + path.string() + ": " + e.what());
  }
}

std::string format_p(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", p);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool right = false) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return right ? fill + s : s + fill;
}

}  // namespace

ReportDocument load_report(const std::string& result_dir) {
  const fs::path dir(result_dir);
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw std::runtime_error("no manifest.json in " + result_dir);
  ReportDocument doc;
  doc.manifest = read_json(manifest_path);
  if (doc.manifest.value("schema_version", 0) != kSchemaVersion)
    throw std::runtime_error("unsupported schema version in " + manifest_path.string());
  if (!doc.manifest.contains("campaigns") || !doc.manifest["campaigns"].is_object())
    throw std::runtime_error("manifest has no campaigns");

  for (const auto& [key, campaign] : doc.manifest["campaigns"].items()) {
    const std::string dataset = campaign.at("dataset").get<std::string>();
    const std::string sampler = sampler_spec_from_json(campaign.at("sampler")).id();
    const auto& cfg = campaign.at("config");
    const double alpha = cfg.at("alpha").get<double>();
    std::vector<std::string> names;
    for (const auto& rel : campaign.at("formulas")) {
      const fs::path p = dir / rel.get<std::string>();
      if (!fs::exists(p)) throw std::runtime_error("missing formula file " + p.string());
      names.push_back(p.stem().string());
    }
    for (const auto& test_name : cfg.at("tests")) {
      const TestId test = parse_test_id(test_name.get<std::string>());
      std::vector<TestResult> results;
      double wall = 0.0;
      for (const auto& name : names) {
        const fs::path unit = dir / "units" / dataset / sampler / std::string(to_string(test)) / (name + ".json");
        if (!fs::exists(unit)) continue;
        UnitRecord record;
        try {
          record = unit_record_from_json(read_json(unit));
        } catch (const nlohmann::json::exception& e) {
          throw std::runtime_error("corrupt unit file " + unit.string() + ": " + e.what());
        }
        results.push_back(record.result);
        wall += record.wall_seconds;
        doc.units.push_back(std::move(record));
      }
      CombinedResult combined;
      if (results.empty()) {
        combined.test = test;
        combined.verdict = CombinedVerdict::NotRun;
      } else {
        combined = combine_results(results, alpha);
      }
      combined.dataset_id = dataset;
      combined.sampler_id = sampler;
      combined.total_wall_time = wall;
      doc.timing.push_back({{"dataset", dataset},
                            {"sampler", sampler},
                            {"test", to_string(test)},
                            {"units", results.size()},
                            {"wall_seconds", wall}});
      doc.combined.push_back(std::move(combined));
    }
  }
  return doc;
}

std::string render_table(const ReportDocument& doc) {
  std::vector<std::string> rows;
  std::set<TestId> present;
  for (const auto& c : doc.combined) {
    const std::string row = c.dataset_id + "/" + c.sampler_id;
    if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
    present.insert(c.test);
  }
  std::vector<TestId> columns;
  for (TestId t : kAllTests)
    if (present.count(t)) columns.push_back(t);

  std::map<std::string, double> alpha_of;
  if (doc.manifest.contains("campaigns"))
    for (const auto& [key, campaign] : doc.manifest["campaigns"].items())
      alpha_of[key] = campaign.at("config").at("alpha").get<double>();

  std::size_t first = 15;
  for (const auto& r : rows) first = std::max(first, r.size());
  constexpr std::size_t kCell = 16;

  std::ostringstream out;
  out << pad("dataset/sampler", first);
  for (TestId t : columns) out << " | " << pad(std::string(display_name(t)), kCell);
  out << '\n' << pad("", first);
  for (std::size_t i = 0; i < columns.size(); ++i) out << " | " << pad(pad("#F", 5, true) + "  p-value", kCell);
  out << '\n' << std::string(first, '-');
  for (std::size_t i = 0; i < columns.size(); ++i) out << "-+-" << std::string(kCell, '-');
  out << '\n';
  for (const auto& row : rows) {
    out << pad(row, first);
    const double alpha = alpha_of.count(row) ? alpha_of[row] : 0.01;
    for (TestId t : columns) {
      auto it = std::find_if(doc.combined.begin(), doc.combined.end(), [&](const CombinedResult& c) {
        return c.test == t && c.dataset_id + "/" + c.sampler_id == row;
      });
      std::string cell;
      if (it == doc.combined.end() || it->verdict == CombinedVerdict::NotRun) {
        cell = pad("-", 5, true) + "  -";
      } else if (it->verdict == CombinedVerdict::Indeterminate) {
        cell = pad("0", 5, true) + "  n/a";
      } else {
        cell = pad(std::to_string(it->completed), 5, true) + "  " + format_p(it->hmp) + (it->hmp > alpha ? "*" : "");
      }
      out << " | " << pad(cell, kCell);
    }
    out << '\n';
  }
  out << "(* p-value above alpha: no evidence against uniformity)\n\n";

  out << pad("dataset/sampler", first) << " | " << pad("test", 8) << " | " << pad("units", 6, true) << " | "
      << "wall seconds\n";
  for (const auto& t : doc.timing) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", t.at("wall_seconds").get<double>());
    out << pad(t.at("dataset").get<std::string>() + "/" + t.at("sampler").get<std::string>(), first) << " | "
        << pad(t.at("test").get<std::string>(), 8) << " | "
        << pad(std::to_string(t.at("units").get<std::size_t>()), 6, true) << " | " << buf << '\n';
  }
  return out.str();
}

void write_summary(const std::string& result_dir, const ReportDocument& doc) {
  nlohmann::json combined = nlohmann::json::array();
  for (const auto& c : doc.combined) combined.push_back(to_json(c));
  const nlohmann::json summary = {{"schema_version", doc.schema_version},
                                  {"tool_version", kToolVersion},
                                  {"combined", combined},
                                  {"timing", doc.timing}};
  write_file_atomic((fs::path(result_dir) / "summary.json").string(), summary.dump(2) + "\n");
  write_file_atomic((fs::path(result_dir) / "summary.txt").string(), render_table(doc));
}

}  // namespace urscheck
