#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "melc/image.hpp"

namespace melc {

constexpr double kDaysPerYear = 365.25;

inline double days_to_years(double days) { return days / kDaysPerYear; }
inline double years_to_days(double years) { return years * kDaysPerYear; }

enum class Laterality : uint8_t { Left, Right };

std::string laterality_name(Laterality l);
std::optional<Laterality> parse_laterality(const std::string& text);

// Metadata for one scan. Timestamps are fractional days since epoch; label
// values are scalars keyed by task name ("stage", "age", ...).
struct ScanRecord {
  std::string scan_id;
  std::string patient_id;
  Laterality laterality = Laterality::Left;
  double timestamp_days = 0.0;
  std::string image_ref;
  std::map<std::string, double> labels;

  std::optional<double> label(const std::string& task) const {
    auto it = labels.find(task);
    if (it == labels.end()) return std::nullopt;
    return it->second;
  }
};

struct EyeKey {
  std::string patient_id;
  Laterality laterality;
  bool operator<(const EyeKey& other) const {
    if (patient_id != other.patient_id) return patient_id < other.patient_id;
    return laterality < other.laterality;
  }
  bool operator==(const EyeKey& other) const {
    return patient_id == other.patient_id && laterality == other.laterality;
  }
};

// Time-ordered series of scans of one eye.
struct Longitude {
  EyeKey eye;
  std::vector<size_t> record_indices;  // into Cohort::records, time-sorted
  double span_years = 0.0;
};

// Immutable after construction; safe for concurrent reads.
class Cohort {
 public:
  Cohort() = default;
  explicit Cohort(std::vector<ScanRecord> records);

  const std::vector<ScanRecord>& records() const { return records_; }
  const ScanRecord& record(size_t i) const { return records_[i]; }
  size_t size() const { return records_.size(); }

  // (patient, laterality) -> record indices sorted by (timestamp, scan_id).
  const std::map<EyeKey, std::vector<size_t>>& eye_index() const { return eye_index_; }

  std::optional<size_t> find(const std::string& scan_id) const {
    auto it = id_to_index_.find(scan_id);
    if (it == id_to_index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<ScanRecord> records_;
  std::map<EyeKey, std::vector<size_t>> eye_index_;
  std::unordered_map<std::string, size_t> id_to_index_;
};

// Manifest format: UTF-8 CSV with header
//   scan_id,patient_id,laterality,timestamp,image_ref[,label:<task>...]
// laterality accepts L/R/Left/Right case-insensitively; timestamp is an
// ISO-8601 date (YYYY-MM-DD) or a fractional day number. Empty label cells
// mean the record is unlabelled for that task.
Cohort ingest_manifest(std::istream& source);
Cohort ingest_manifest_file(const std::string& path);
void emit_manifest(const Cohort& cohort, std::ostream& out);
void emit_manifest_file(const Cohort& cohort, const std::string& path);

std::vector<Longitude> eye_longitudes(const Cohort& cohort);

// Parses "YYYY-MM-DD" to days since 1970-01-01, or a plain number as-is.
std::optional<double> parse_timestamp(const std::string& text);

// In-memory image collection keyed by scan_id.
using ImageStore = std::unordered_map<std::string, GrayImage>;

// Loads every record's image_ref, resolving relative paths against base_dir.
ImageStore load_images(const Cohort& cohort, const std::string& base_dir);

}  // namespace melc
