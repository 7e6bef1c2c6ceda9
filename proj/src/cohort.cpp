#include "melc/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "melc/csv.hpp"

namespace melc {

namespace {

std::string to_lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Days since 1970-01-01 for a proleptic Gregorian date.
long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

}  // namespace

std::string laterality_name(Laterality l) { return l == Laterality::Left ? "L" : "R"; }

std::optional<Laterality> parse_laterality(const std::string& text) {
  const std::string t = to_lower(text);
  if (t == "l" || t == "left") return Laterality::Left;
  if (t == "r" || t == "right") return Laterality::Right;
  return std::nullopt;
}

std::optional<double> parse_timestamp(const std::string& text) {
  if (text.size() == 10 && text[4] == '-' && text[7] == '-') {
    int y, m, d;
    char dash1, dash2;
    std::istringstream in(text);
    in >> y >> dash1 >> m >> dash2 >> d;
    if (in && dash1 == '-' && dash2 == '-' && m >= 1 && m <= 12 && d >= 1 && d <= 31)
      return static_cast<double>(days_from_civil(y, m, d));
    return std::nullopt;
  }
  bool ok = false;
  const double v = parse_double(text, ok);
  if (!ok || !std::isfinite(v)) return std::nullopt;
  return v;
}

Cohort::Cohort(std::vector<ScanRecord> records) : records_(std::move(records)) {
  for (size_t i = 0; i < records_.size(); ++i) {
    const ScanRecord& r = records_[i];
    if (!std::isfinite(r.timestamp_days))
      throw std::runtime_error("non-finite timestamp for scan " + r.scan_id);
    if (!id_to_index_.emplace(r.scan_id, i).second)
      throw std::runtime_error("duplicate scan_id: " + r.scan_id);
    eye_index_[{r.patient_id, r.laterality}].push_back(i);
  }
  for (auto& [eye, indices] : eye_index_) {
    std::sort(indices.begin(), indices.end(), [this](size_t a, size_t b) {
      const ScanRecord& ra = records_[a];
      const ScanRecord& rb = records_[b];
      if (ra.timestamp_days != rb.timestamp_days) return ra.timestamp_days < rb.timestamp_days;
      return ra.scan_id < rb.scan_id;
    });
  }
}

Cohort ingest_manifest(std::istream& source) {
  Table t = read_table(source);
  const int col_scan = t.require_column("scan_id");
  const int col_patient = t.require_column("patient_id");
  const int col_lat = t.require_column("laterality");
  const int col_time = t.require_column("timestamp");
  const int col_ref = t.require_column("image_ref");

  std::vector<std::pair<int, std::string>> label_cols;  // column index, task name
  for (size_t i = 0; i < t.header.size(); ++i) {
    const std::string& h = t.header[i];
    if (h.rfind("label:", 0) == 0) {
      const std::string task = h.substr(6);
      if (task.empty()) throw std::runtime_error("empty label task name in header");
      label_cols.emplace_back(static_cast<int>(i), task);
    }
  }

  std::vector<ScanRecord> records;
  std::set<std::string> seen_ids;
  records.reserve(t.rows.size());
  for (size_t row = 0; row < t.rows.size(); ++row) {
    const auto& fields = t.rows[row];
    const size_t row_number = row + 2;  // 1-based, counting the header
    if (fields.size() < t.header.size()) {
      throw std::runtime_error("row " + std::to_string(row_number) + ": expected " +
                               std::to_string(t.header.size()) + " fields, got " +
                               std::to_string(fields.size()));
    }
    ScanRecord r;
    r.scan_id = fields[col_scan];
    r.patient_id = fields[col_patient];
    if (r.scan_id.empty())
      throw std::runtime_error("row " + std::to_string(row_number) + ": empty scan_id");
    if (!seen_ids.insert(r.scan_id).second)
      throw std::runtime_error("duplicate scan_id: " + r.scan_id);

    const auto lat = parse_laterality(fields[col_lat]);
    if (!lat)
      throw std::runtime_error("row " + std::to_string(row_number) +
                               ": unparseable laterality '" + fields[col_lat] + "'");
    r.laterality = *lat;

    const auto ts = parse_timestamp(fields[col_time]);
    if (!ts)
      throw std::runtime_error("row " + std::to_string(row_number) +
                               ": unparseable timestamp '" + fields[col_time] + "'");
    r.timestamp_days = *ts;
    r.image_ref = fields[col_ref];

    for (const auto& [col, task] : label_cols) {
      const std::string& cell = fields[col];
      if (cell.empty()) continue;
      bool ok = false;
      const double v = parse_double(cell, ok);
      if (!ok)
        throw std::runtime_error("row " + std::to_string(row_number) + ": bad label '" +
                                 cell + "' for task " + task);
      r.labels[task] = v;
    }
    records.push_back(std::move(r));
  }
  return Cohort(std::move(records));
}

Cohort ingest_manifest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  return ingest_manifest(in);
}

void emit_manifest(const Cohort& cohort, std::ostream& out) {
  std::set<std::string> tasks;
  for (const auto& r : cohort.records())
    for (const auto& [task, value] : r.labels) tasks.insert(task);

  Table t;
  t.header = {"scan_id", "patient_id", "laterality", "timestamp", "image_ref"};
  for (const auto& task : tasks) t.header.push_back("label:" + task);
  for (const auto& r : cohort.records()) {
    std::vector<std::string> row = {r.scan_id, r.patient_id, laterality_name(r.laterality),
                                    fmt_double(r.timestamp_days), r.image_ref};
    for (const auto& task : tasks) {
      auto v = r.label(task);
      row.push_back(v ? fmt_double(*v) : "");
    }
    t.rows.push_back(std::move(row));
  }
  write_table(out, t);
}

void emit_manifest_file(const Cohort& cohort, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  emit_manifest(cohort, out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Longitude> eye_longitudes(const Cohort& cohort) {
  std::vector<Longitude> result;
  result.reserve(cohort.eye_index().size());
  for (const auto& [eye, indices] : cohort.eye_index()) {
    Longitude lon;
    lon.eye = eye;
    lon.record_indices = indices;
    const double first = cohort.record(indices.front()).timestamp_days;
    const double last = cohort.record(indices.back()).timestamp_days;
    lon.span_years = days_to_years(last - first);
    result.push_back(std::move(lon));
  }
  return result;
}

ImageStore load_images(const Cohort& cohort, const std::string& base_dir) {
  namespace fs = std::filesystem;
  ImageStore store;
  store.reserve(cohort.size());
  for (const auto& r : cohort.records()) {
    if (r.image_ref.empty())
      throw std::runtime_error("scan " + r.scan_id + " has no image_ref");
    fs::path p(r.image_ref);
    if (p.is_relative() && !base_dir.empty()) p = fs::path(base_dir) / p;
    store.emplace(r.scan_id, load_image(p.string()));
  }
  return store;
}

}  // namespace melc
