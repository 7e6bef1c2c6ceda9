#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "melc/cohort.hpp"

namespace melc {

// Contrastive relationship between two scans. Excluded pairs take part in
// neither the numerator nor the denominator of any loss.
enum class Relation : uint8_t { Positive, Negative, Excluded };

std::string relation_name(Relation r);

// Temporal window for same-eye positive pairs, in years. An absent delta_max
// means no upper time limit.
struct RelationConfig {
  double delta_min_years = 0.02;
  std::optional<double> delta_max_years = 0.5;

  static RelationConfig bounded(double delta_min, double delta_max) {
    return RelationConfig{delta_min, delta_max};
  }
  static RelationConfig unbounded(double delta_min) {
    return RelationConfig{delta_min, std::nullopt};
  }

  bool is_unbounded() const { return !delta_max_years.has_value(); }
  void validate() const;
};

// Classifies a pair of distinct scans:
//   Positive  same patient, same eye, delta_min <= |dt| <= delta_max
//   Excluded  same patient, and (fellow eye, or |dt| outside the window)
//   Negative  different patients
// Symmetric in its arguments. Throws if both records share a scan_id.
Relation relate(const ScanRecord& a, const ScanRecord& b, const RelationConfig& cfg);

// All positive pairs of a cohort under one RelationConfig, plus per-scan
// partner lists and the scans left without any partner.
struct PairIndex {
  RelationConfig config;
  std::vector<std::pair<size_t, size_t>> pairs;    // record indices, first < second
  std::vector<std::vector<size_t>> partners;       // per record index
  std::vector<size_t> orphans;                     // records with no partner

  size_t pair_count() const { return pairs.size(); }
};

PairIndex build_pair_index(const Cohort& cohort, const RelationConfig& cfg);

struct PairStats {
  size_t pair_count = 0;
  size_t orphan_count = 0;
  // Pairs under the same config but without the minimum-gap filter.
  size_t pair_count_no_min_gap = 0;
  // pair_count / (pairs with unbounded delta_max, same delta_min).
  double fraction_of_unbounded = 0.0;
  // Histogram of positive-pair time gaps; bin k covers [k, k+1) months.
  std::vector<size_t> delta_t_histogram_months;
};

PairStats pair_stats(const PairIndex& index, const Cohort& cohort);

// Two-column scan_id table; orphans written separately as one id per line.
void save_pair_index(const PairIndex& index, const Cohort& cohort,
                     std::ostream& pairs_out, std::ostream& orphans_out);
void save_pair_stats(const PairStats& stats, std::ostream& out);

}  // namespace melc
