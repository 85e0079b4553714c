#include "pbcnn/report.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "pbcnn/error.hpp"

namespace pbcnn {

namespace {

constexpr std::string_view kConfigPrefix = "# config=";

std::string_view kind_name(TrainRecord::Kind kind) {
  switch (kind) {
    case TrainRecord::Kind::Epoch:
      return "epoch";
    case TrainRecord::Kind::Eval:
      return "eval";
    case TrainRecord::Kind::Final:
      return "final";
  }
  return "?";
}

std::optional<TrainRecord::Kind> parse_kind(std::string_view text) {
  for (auto k : {TrainRecord::Kind::Epoch, TrainRecord::Kind::Eval, TrainRecord::Kind::Final}) {
    if (kind_name(k) == text) return k;
  }
  return std::nullopt;
}

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

template <typename Number>
Number parse_number(std::string_view text, std::size_t line, std::string_view column) {
  Number value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ParseError(line, std::string(column) + ": cannot parse '" + std::string(text) + "'");
  }
  return value;
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv(std::string_view row, std::size_t line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < row.size(); ++i) {
    const char c = row[i];
    if (quoted) {
      if (c == '"' && i + 1 < row.size() && row[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw ParseError(line, "unterminated quoted field");
  return fields;
}

std::string pack_sigma(const SigmaProfile& sigma) {
  std::string out;
  for (const auto& s : sigma) {
    if (!out.empty()) out += ';';
    out += s.layer + '@' + std::to_string(s.depth) + ':' + format_double(s.min) + ':' + format_double(s.mean) + ':' +
           format_double(s.max) + ':' + format_double(s.std);
  }
  return out;
}

SigmaProfile unpack_sigma(std::string_view text, std::size_t line) {
  SigmaProfile out;
  while (!text.empty()) {
    const std::size_t end = text.find(';');
    std::string_view item = text.substr(0, end);
    text = end == std::string_view::npos ? std::string_view{} : text.substr(end + 1);

    const std::size_t at = item.rfind('@');
    if (at == std::string_view::npos) throw ParseError(line, "sigma: missing '@' in '" + std::string(item) + "'");
    LayerSigma s;
    s.layer = std::string(item.substr(0, at));
    std::vector<std::string_view> parts;
    std::string_view rest = item.substr(at + 1);
    for (std::size_t pos; (pos = rest.find(':')) != std::string_view::npos; rest = rest.substr(pos + 1)) {
      parts.push_back(rest.substr(0, pos));
    }
    parts.push_back(rest);
    if (parts.size() != 5) throw ParseError(line, "sigma: expected depth and 4 statistics for " + s.layer);
    s.depth = parse_number<std::size_t>(parts[0], line, "sigma.depth");
    s.min = parse_number<double>(parts[1], line, "sigma.min");
    s.mean = parse_number<double>(parts[2], line, "sigma.mean");
    s.max = parse_number<double>(parts[3], line, "sigma.max");
    s.std = parse_number<double>(parts[4], line, "sigma.std");
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> record_to_csv(const TrainRecord& r) {
  std::vector<std::string> f(kReportCsvColumns.size());
  f[0] = std::to_string(kReportSchemaVersion);
  f[1] = kind_name(r.kind);
  f[2] = r.placement;
  f[3] = std::to_string(r.epoch);
  f[4] = std::to_string(r.step);
  if (r.kind == TrainRecord::Kind::Epoch) {
    f[5] = format_double(r.l_cen);
    f[6] = format_double(r.l_unc);
    f[7] = format_double(r.kl_term);
    f[8] = format_double(r.nll_term);
    f[9] = format_double(r.kl_weight);
    f[10] = format_double(r.total);
    f[11] = format_double(r.train_accuracy);
    f[19] = pack_sigma(r.sigma);
  }
  if (r.eval) {
    f[12] = r.eval->split;
    f[13] = r.eval->mode.to_string();
    f[14] = format_double(r.eval->accuracy);
    f[15] = std::to_string(r.eval->n_correct);
    f[16] = std::to_string(r.eval->n_total);
    f[17] = format_double(r.eval->mean_predictive_entropy);
  }
  if (r.wall_seconds) f[18] = format_double(*r.wall_seconds);
  return f;
}

TrainRecord record_from_csv(const std::vector<std::string>& f, std::size_t line) {
  if (f.size() != kReportCsvColumns.size()) {
    throw ParseError(line, "expected " + std::to_string(kReportCsvColumns.size()) + " fields, got " +
                               std::to_string(f.size()));
  }
  if (parse_number<int>(f[0], line, "schema_version") != kReportSchemaVersion) {
    throw ParseError(line, "unsupported schema_version " + f[0]);
  }
  TrainRecord r;
  const auto kind = parse_kind(f[1]);
  if (!kind) throw ParseError(line, "unknown kind '" + f[1] + "'");
  r.kind = *kind;
  r.placement = f[2];
  r.epoch = parse_number<int>(f[3], line, "epoch");
  r.step = parse_number<std::int64_t>(f[4], line, "step");
  if (r.kind == TrainRecord::Kind::Epoch) {
    r.l_cen = parse_number<double>(f[5], line, "l_cen");
    r.l_unc = parse_number<double>(f[6], line, "l_unc");
    r.kl_term = parse_number<double>(f[7], line, "kl_term");
    r.nll_term = parse_number<double>(f[8], line, "nll_term");
    r.kl_weight = parse_number<double>(f[9], line, "kl_weight");
    r.total = parse_number<double>(f[10], line, "total");
    r.train_accuracy = parse_number<double>(f[11], line, "train_accuracy");
    r.sigma = unpack_sigma(f[19], line);
  } else {
    EvalResult e;
    e.split = f[12];
    try {
      e.mode = EvalMode::parse(f[13]);
    } catch (const ConfigError& err) {
      throw ParseError(line, err.what());
    }
    e.accuracy = parse_number<double>(f[14], line, "accuracy");
    e.n_correct = parse_number<std::size_t>(f[15], line, "n_correct");
    e.n_total = parse_number<std::size_t>(f[16], line, "n_total");
    e.mean_predictive_entropy = parse_number<double>(f[17], line, "mean_predictive_entropy");
    r.eval = std::move(e);
  }
  if (!f[18].empty()) r.wall_seconds = parse_number<double>(f[18], line, "wall_seconds");
  return r;
}

}  // namespace

ReportFormat parse_report_format(std::string_view text) {
  if (text == "jsonl" || text == "json-lines") return ReportFormat::JsonLines;
  if (text == "csv") return ReportFormat::Csv;
  throw ConfigError("format", "expected jsonl or csv, got '" + std::string(text) + "'");
}

std::string_view report_extension(ReportFormat format) {
  return format == ReportFormat::Csv ? ".csv" : ".jsonl";
}

nlohmann::ordered_json record_to_json(const TrainRecord& r) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["kind"] = kind_name(r.kind);
  doc["placement"] = r.placement;
  doc["epoch"] = r.epoch;
  doc["step"] = r.step;
  if (r.kind == TrainRecord::Kind::Epoch) {
    doc["l_cen"] = r.l_cen;
    doc["l_unc"] = r.l_unc;
    doc["kl_term"] = r.kl_term;
    doc["nll_term"] = r.nll_term;
    doc["kl_weight"] = r.kl_weight;
    doc["total"] = r.total;
    doc["train_accuracy"] = r.train_accuracy;
    auto sigma = nlohmann::ordered_json::array();
    for (const auto& s : r.sigma) {
      sigma.push_back(
          {{"layer", s.layer}, {"depth", s.depth}, {"min", s.min}, {"mean", s.mean}, {"max", s.max}, {"std", s.std}});
    }
    doc["sigma"] = std::move(sigma);
  }
  if (r.eval) {
    doc["split"] = r.eval->split;
    doc["mode"] = r.eval->mode.to_string();
    doc["accuracy"] = r.eval->accuracy;
    doc["n_correct"] = r.eval->n_correct;
    doc["n_total"] = r.eval->n_total;
    doc["mean_predictive_entropy"] = r.eval->mean_predictive_entropy;
  }
  if (r.wall_seconds) doc["wall_seconds"] = *r.wall_seconds;
  return doc;
}

TrainRecord record_from_json(const nlohmann::json& doc) {
  if (doc.at("schema_version").get<int>() != kReportSchemaVersion) {
    throw ConfigError("schema_version", "unsupported version " + doc.at("schema_version").dump());
  }
  TrainRecord r;
  const auto kind = parse_kind(doc.at("kind").get<std::string>());
  if (!kind) throw ConfigError("kind", "unknown record kind " + doc.at("kind").dump());
  r.kind = *kind;
  r.placement = doc.at("placement").get<std::string>();
  r.epoch = doc.at("epoch").get<int>();
  r.step = doc.at("step").get<std::int64_t>();
  if (r.kind == TrainRecord::Kind::Epoch) {
    r.l_cen = doc.at("l_cen").get<double>();
    r.l_unc = doc.at("l_unc").get<double>();
    r.kl_term = doc.at("kl_term").get<double>();
    r.nll_term = doc.at("nll_term").get<double>();
    r.kl_weight = doc.at("kl_weight").get<double>();
    r.total = doc.at("total").get<double>();
    r.train_accuracy = doc.at("train_accuracy").get<double>();
    for (const auto& s : doc.at("sigma")) {
      r.sigma.push_back({s.at("layer").get<std::string>(), s.at("depth").get<std::size_t>(), s.at("min").get<double>(),
                         s.at("mean").get<double>(), s.at("max").get<double>(), s.at("std").get<double>()});
    }
  } else {
    EvalResult e;
    e.split = doc.at("split").get<std::string>();
    e.mode = EvalMode::parse(doc.at("mode").get<std::string>());
    e.accuracy = doc.at("accuracy").get<double>();
    e.n_correct = doc.at("n_correct").get<std::size_t>();
    e.n_total = doc.at("n_total").get<std::size_t>();
    e.mean_predictive_entropy = doc.at("mean_predictive_entropy").get<double>();
    r.eval = std::move(e);
  }
  if (doc.contains("wall_seconds")) r.wall_seconds = doc.at("wall_seconds").get<double>();
  return r;
}

void write_report(const Report& report, std::ostream& out, ReportFormat format) {
  if (format == ReportFormat::JsonLines) {
    if (report.config) {
      nlohmann::ordered_json header;
      header["schema_version"] = kReportSchemaVersion;
      header["kind"] = "config";
      header["config"] = *report.config;
      out << header.dump() << '\n';
    }
    for (const auto& r : report.records) out << record_to_json(r).dump() << '\n';
    return;
  }
  if (report.config) out << kConfigPrefix << report.config->dump() << '\n';
  for (std::size_t i = 0; i < kReportCsvColumns.size(); ++i) out << (i ? "," : "") << kReportCsvColumns[i];
  out << '\n';
  for (const auto& r : report.records) {
    const auto fields = record_to_csv(r);
    for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << csv_field(fields[i]);
    out << '\n';
  }
}

Report read_report(std::istream& in, ReportFormat format) {
  Report report;
  std::string line;
  std::size_t line_no = 0;
  if (format == ReportFormat::JsonLines) {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        const auto doc = nlohmann::json::parse(line);
        if (doc.at("kind") == "config") {
          if (doc.at("schema_version").get<int>() != kReportSchemaVersion) {
            throw ConfigError("schema_version", "unsupported version");
          }
          report.config = doc.at("config");
          continue;
        }
        report.records.push_back(record_from_json(doc));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(line_no, e.what());
      } catch (const ConfigError& e) {
        throw ParseError(line_no, e.what());
      }
    }
    return report;
  }

  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen && line.starts_with(kConfigPrefix)) {
      try {
        report.config = nlohmann::json::parse(line.substr(kConfigPrefix.size()));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(line_no, e.what());
      }
      continue;
    }
    if (!header_seen) {
      const auto fields = split_csv(line, line_no);
      if (fields.size() != kReportCsvColumns.size() ||
          !std::equal(fields.begin(), fields.end(), kReportCsvColumns.begin())) {
        throw ParseError(line_no, "unexpected csv header");
      }
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    report.records.push_back(record_from_csv(split_csv(line, line_no), line_no));
  }
  if (!header_seen) throw ParseError(line_no + 1, "missing csv header");
  return report;
}

void export_report(const Report& report, const std::filesystem::path& path, ReportFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open report for writing");
  write_report(report, out, format);
  out.flush();
  if (!out) throw IoError(path.string(), "failed writing report");
}

Report parse_report(const std::filesystem::path& path, ReportFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open report");
  return read_report(in, format);
}

}  // namespace pbcnn
