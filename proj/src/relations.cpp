#include "melc/relations.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "melc/csv.hpp"

namespace melc {

std::string relation_name(Relation r) {
  switch (r) {
    case Relation::Positive: return "positive";
    case Relation::Negative: return "negative";
    case Relation::Excluded: return "excluded";
  }
  return "?";
}

void RelationConfig::validate() const {
  if (!(delta_min_years >= 0.0) || !std::isfinite(delta_min_years))
    throw std::invalid_argument("delta_min must be finite and >= 0");
  if (delta_max_years) {
    if (!std::isfinite(*delta_max_years))
      throw std::invalid_argument("delta_max must be finite; omit it for no upper limit");
    if (*delta_max_years <= delta_min_years)
      throw std::invalid_argument("delta_max must exceed delta_min");
  }
}

Relation relate(const ScanRecord& a, const ScanRecord& b, const RelationConfig& cfg) {
  if (a.scan_id == b.scan_id)
    throw std::invalid_argument("relate: identical scan_id " + a.scan_id);
  if (a.patient_id != b.patient_id) return Relation::Negative;
  if (a.laterality != b.laterality) return Relation::Excluded;
  const double gap_years = days_to_years(std::fabs(a.timestamp_days - b.timestamp_days));
  if (gap_years < cfg.delta_min_years) return Relation::Excluded;
  if (cfg.delta_max_years && gap_years > *cfg.delta_max_years) return Relation::Excluded;
  return Relation::Positive;
}

PairIndex build_pair_index(const Cohort& cohort, const RelationConfig& cfg) {
  cfg.validate();
  PairIndex index;
  index.config = cfg;
  index.partners.assign(cohort.size(), {});

  // Positives only occur within an eye; each eye's records are time-sorted,
  // so the window scan below visits exactly the pairs with dt <= delta_max.
  for (const auto& [eye, indices] : cohort.eye_index()) {
    for (size_t i = 0; i < indices.size(); ++i) {
      const double t_i = cohort.record(indices[i]).timestamp_days;
      for (size_t j = i + 1; j < indices.size(); ++j) {
        const double gap_years =
            days_to_years(cohort.record(indices[j]).timestamp_days - t_i);
        if (cfg.delta_max_years && gap_years > *cfg.delta_max_years) break;
        if (gap_years < cfg.delta_min_years) continue;
        const size_t a = std::min(indices[i], indices[j]);
        const size_t b = std::max(indices[i], indices[j]);
        index.pairs.emplace_back(a, b);
      }
    }
  }
  std::sort(index.pairs.begin(), index.pairs.end());
  for (const auto& [a, b] : index.pairs) {
    index.partners[a].push_back(b);
    index.partners[b].push_back(a);
  }
  for (auto& list : index.partners) std::sort(list.begin(), list.end());
  for (size_t i = 0; i < cohort.size(); ++i)
    if (index.partners[i].empty()) index.orphans.push_back(i);
  return index;
}

namespace {

size_t count_same_eye_pairs(const Cohort& cohort, double delta_min_years,
                            std::optional<double> delta_max_years) {
  size_t count = 0;
  for (const auto& [eye, indices] : cohort.eye_index()) {
    for (size_t i = 0; i < indices.size(); ++i) {
      const double t_i = cohort.record(indices[i]).timestamp_days;
      for (size_t j = i + 1; j < indices.size(); ++j) {
        const double gap_years =
            days_to_years(cohort.record(indices[j]).timestamp_days - t_i);
        if (delta_max_years && gap_years > *delta_max_years) break;
        if (gap_years >= delta_min_years) ++count;
      }
    }
  }
  return count;
}

}  // namespace

PairStats pair_stats(const PairIndex& index, const Cohort& cohort) {
  PairStats stats;
  stats.pair_count = index.pair_count();
  stats.orphan_count = index.orphans.size();
  stats.pair_count_no_min_gap =
      count_same_eye_pairs(cohort, 0.0, index.config.delta_max_years);

  const size_t unbounded =
      count_same_eye_pairs(cohort, index.config.delta_min_years, std::nullopt);
  stats.fraction_of_unbounded =
      unbounded == 0 ? 0.0
                     : static_cast<double>(stats.pair_count) / static_cast<double>(unbounded);

  for (const auto& [a, b] : index.pairs) {
    const double gap_years = days_to_years(
        std::fabs(cohort.record(a).timestamp_days - cohort.record(b).timestamp_days));
    const size_t bin = static_cast<size_t>(std::floor(gap_years * 12.0));
    if (bin >= stats.delta_t_histogram_months.size())
      stats.delta_t_histogram_months.resize(bin + 1, 0);
    ++stats.delta_t_histogram_months[bin];
  }
  return stats;
}

void save_pair_index(const PairIndex& index, const Cohort& cohort,
                     std::ostream& pairs_out, std::ostream& orphans_out) {
  Table t;
  t.header = {"scan_a", "scan_b"};
  for (const auto& [a, b] : index.pairs) {
    std::string id_a = cohort.record(a).scan_id;
    std::string id_b = cohort.record(b).scan_id;
    if (id_b < id_a) std::swap(id_a, id_b);
    t.rows.push_back({std::move(id_a), std::move(id_b)});
  }
  std::sort(t.rows.begin(), t.rows.end());
  write_table(pairs_out, t);

  std::vector<std::string> orphan_ids;
  orphan_ids.reserve(index.orphans.size());
  for (size_t i : index.orphans) orphan_ids.push_back(cohort.record(i).scan_id);
  std::sort(orphan_ids.begin(), orphan_ids.end());
  for (const auto& id : orphan_ids) orphans_out << id << "\n";
}

void save_pair_stats(const PairStats& stats, std::ostream& out) {
  Table t;
  t.header = {"key", "value"};
  t.rows.push_back({"pair_count", std::to_string(stats.pair_count)});
  t.rows.push_back({"orphan_count", std::to_string(stats.orphan_count)});
  t.rows.push_back({"pair_count_no_min_gap", std::to_string(stats.pair_count_no_min_gap)});
  t.rows.push_back({"fraction_of_unbounded", fmt_double(stats.fraction_of_unbounded)});
  for (size_t k = 0; k < stats.delta_t_histogram_months.size(); ++k) {
    t.rows.push_back({"dt_months_" + std::to_string(k),
                      std::to_string(stats.delta_t_histogram_months[k])});
  }
  write_table(out, t);
}

}  // namespace melc
