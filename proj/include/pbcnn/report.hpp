#pragma once

// Report files, schema_version 1.
//
// json-lines: optional first line {"schema_version":1,"kind":"config","config":{...}},
// then one object per TrainRecord with "kind" epoch | eval | final. Epoch
// objects hold the loss fields, train_accuracy and a "sigma" array; eval and
// final objects hold split, mode, accuracy, n_correct, n_total and
// mean_predictive_entropy. wall_seconds appears only when measured.
//
// csv: optional "# config=<json>" line, then the header kReportCsvColumns
// and one row per record. Fields that do not apply to a row are empty. The
// sigma column packs layers as "name@depth:min:mean:max:std" joined by ';'.
//
// Doubles are written in shortest round-trip form.

#include <array>
#include <filesystem>
#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <string_view>
#include <vector>

#include "pbcnn/records.hpp"

namespace pbcnn {

inline constexpr int kReportSchemaVersion = 1;

inline constexpr std::array<std::string_view, 20> kReportCsvColumns{
    "schema_version", "kind",     "placement", "epoch",    "step",      "l_cen",    "l_unc",
    "kl_term",        "nll_term", "kl_weight", "total",    "train_accuracy", "split", "mode",
    "accuracy",       "n_correct", "n_total",  "mean_predictive_entropy", "wall_seconds", "sigma"};

enum class ReportFormat { JsonLines, Csv };

/// "jsonl" / "json-lines" or "csv".
ReportFormat parse_report_format(std::string_view text);
std::string_view report_extension(ReportFormat format);

struct Report {
  std::optional<nlohmann::json> config;  // provenance header
  std::vector<TrainRecord> records;
  bool operator==(const Report&) const = default;
};

void write_report(const Report& report, std::ostream& out, ReportFormat format);
/// Throws ParseError (1-based line) on malformed input or an unknown schema version.
Report read_report(std::istream& in, ReportFormat format);

/// Throws IoError when the path cannot be written.
void export_report(const Report& report, const std::filesystem::path& path, ReportFormat format);
Report parse_report(const std::filesystem::path& path, ReportFormat format);

nlohmann::ordered_json record_to_json(const TrainRecord& record);
TrainRecord record_from_json(const nlohmann::json& doc);

}  // namespace pbcnn
