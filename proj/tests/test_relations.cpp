#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <sstream>

#include "melc/csv.hpp"
#include "melc/relations.hpp"
#include "melc/rng.hpp"

using namespace melc;

namespace {

ScanRecord scan(const std::string& id, const std::string& patient, Laterality lat,
                double t_years) {
  ScanRecord r;
  r.scan_id = id;
  r.patient_id = patient;
  r.laterality = lat;
  r.timestamp_days = years_to_days(t_years);
  return r;
}

// Literal clause-by-clause transcription of the relationship definition,
// independent of relate(): positive when same patient, same eye and the gap
// is inside [delta_min, delta_max]; unknown (excluded) when same patient but
// fellow eye or gap above delta_max or below delta_min; negative otherwise.
Relation relate_oracle(const ScanRecord& a, const ScanRecord& b, const RelationConfig& cfg) {
  const bool same_patient = a.patient_id == b.patient_id;
  const bool same_eye = a.laterality == b.laterality;
  const double dt = days_to_years(std::fabs(a.timestamp_days - b.timestamp_days));
  const double dmax = cfg.delta_max_years ? *cfg.delta_max_years
                                          : std::numeric_limits<double>::infinity();
  if (same_patient && same_eye && cfg.delta_min_years <= dt && dt <= dmax)
    return Relation::Positive;
  if (same_patient && (!same_eye || dt > dmax || dt < cfg.delta_min_years))
    return Relation::Excluded;
  return Relation::Negative;
}

Cohort random_cohort(int patients, int max_visits, uint64_t seed) {
  Rng rng(seed);
  std::vector<ScanRecord> records;
  int id = 0;
  for (int p = 0; p < patients; ++p) {
    for (int eye = 0; eye < 2; ++eye) {
      const int visits = 1 + static_cast<int>(rng.uniform_index(max_visits));
      double t = rng.uniform(0.0, 1.0);
      for (int v = 0; v < visits; ++v) {
        records.push_back(scan("s" + std::to_string(id++), "p" + std::to_string(p),
                               eye ? Laterality::Left : Laterality::Right, t));
        t += rng.uniform(0.005, 0.8);
      }
    }
  }
  return Cohort(std::move(records));
}

PairIndex brute_force_index(const Cohort& cohort, const RelationConfig& cfg) {
  PairIndex index;
  index.config = cfg;
  index.partners.assign(cohort.size(), {});
  for (size_t i = 0; i < cohort.size(); ++i)
    for (size_t j = i + 1; j < cohort.size(); ++j)
      if (relate(cohort.record(i), cohort.record(j), cfg) == Relation::Positive)
        index.pairs.emplace_back(i, j);
  for (const auto& [a, b] : index.pairs) {
    index.partners[a].push_back(b);
    index.partners[b].push_back(a);
  }
  for (size_t i = 0; i < cohort.size(); ++i)
    if (index.partners[i].empty()) index.orphans.push_back(i);
  return index;
}

const RelationConfig kHalfYear = RelationConfig::bounded(0.02, 0.5);

}  // namespace

TEST_CASE("relationship fixtures") {
  const auto a = scan("a", "p1", Laterality::Left, 0.0);
  CHECK(relate(a, scan("b", "p1", Laterality::Left, 0.3), kHalfYear) == Relation::Positive);
  CHECK(relate(a, scan("b", "p1", Laterality::Right, 0.1), kHalfYear) == Relation::Excluded);
  CHECK(relate(a, scan("b", "p2", Laterality::Left, 0.1), kHalfYear) == Relation::Negative);
  CHECK(relate(a, scan("b", "p2", Laterality::Right, 7.0), kHalfYear) == Relation::Negative);
  CHECK(relate(a, scan("b", "p1", Laterality::Left, 0.01), kHalfYear) == Relation::Excluded);
  CHECK(relate(a, scan("b", "p1", Laterality::Left, 2.0), kHalfYear) == Relation::Excluded);
  // window edges are inclusive
  CHECK(relate(a, scan("b", "p1", Laterality::Left, 0.02), kHalfYear) == Relation::Positive);
  CHECK(relate(a, scan("b", "p1", Laterality::Left, 0.5), kHalfYear) == Relation::Positive);
}

TEST_CASE("self pair is an error") {
  const auto a = scan("a", "p1", Laterality::Left, 0.0);
  const auto b = scan("a", "p1", Laterality::Left, 1.0);
  CHECK_THROWS_AS(relate(a, b, kHalfYear), std::invalid_argument);
}

TEST_CASE("unbounded config") {
  const auto cfg = RelationConfig::unbounded(0.02);
  const auto a = scan("a", "p1", Laterality::Left, 0.0);
  CHECK(relate(a, scan("b", "p1", Laterality::Left, 25.0), cfg) == Relation::Positive);
  CHECK(relate(a, scan("b", "p1", Laterality::Left, 0.001), cfg) == Relation::Excluded);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(RelationConfig::bounded(0.5, 0.5).validate(), std::invalid_argument);
  CHECK_THROWS_AS(RelationConfig::bounded(-0.1, 0.5).validate(), std::invalid_argument);
  CHECK_NOTHROW(RelationConfig::bounded(0.0, 0.5).validate());
  CHECK_NOTHROW(RelationConfig::unbounded(0.0).validate());
}

TEST_CASE("oracle equivalence and symmetry on random pairs") {
  Rng rng(123);
  const char* patients[] = {"p1", "p2", "p3"};
  const RelationConfig configs[] = {kHalfYear, RelationConfig::bounded(0.02, 1.0),
                                    RelationConfig::unbounded(0.02)};
  for (int trial = 0; trial < 12000; ++trial) {
    const auto a = scan("a", patients[rng.uniform_index(3)],
                        rng.bernoulli(0.5) ? Laterality::Left : Laterality::Right,
                        rng.uniform(0.0, 3.0));
    const auto b = scan("b", patients[rng.uniform_index(3)],
                        rng.bernoulli(0.5) ? Laterality::Left : Laterality::Right,
                        rng.uniform(0.0, 3.0));
    const RelationConfig& cfg = configs[trial % 3];
    CHECK(relate(a, b, cfg) == relate_oracle(a, b, cfg));
    CHECK(relate(a, b, cfg) == relate(b, a, cfg));
  }
}

TEST_CASE("pair index on a tiny eye") {
  std::vector<ScanRecord> records = {scan("s0", "p", Laterality::Left, 0.0),
                                     scan("s1", "p", Laterality::Left, 0.3),
                                     scan("s2", "p", Laterality::Left, 1.2)};
  Cohort cohort(std::move(records));
  PairIndex index = build_pair_index(cohort, kHalfYear);
  REQUIRE(index.pair_count() == 1);
  CHECK(cohort.record(index.pairs[0].first).scan_id == "s0");
  CHECK(cohort.record(index.pairs[0].second).scan_id == "s1");
  REQUIRE(index.orphans.size() == 1);
  CHECK(cohort.record(index.orphans[0]).scan_id == "s2");
}

TEST_CASE("unbounded index holds all pairs past the minimum gap") {
  std::vector<ScanRecord> records;
  for (int i = 0; i < 6; ++i)
    records.push_back(scan("s" + std::to_string(i), "p", Laterality::Left, 0.1 * i));
  Cohort cohort(std::move(records));
  PairIndex index = build_pair_index(cohort, RelationConfig::unbounded(0.02));
  CHECK(index.pair_count() == 15);  // C(6,2), all gaps >= 0.1 year
  CHECK(index.orphans.empty());
}

TEST_CASE("pair index matches brute force and is monotone in delta") {
  Cohort cohort = random_cohort(25, 6, 77);
  const RelationConfig cfgs[] = {kHalfYear, RelationConfig::bounded(0.02, 1.0),
                                 RelationConfig::unbounded(0.02)};
  std::vector<std::set<std::pair<size_t, size_t>>> sets;
  for (const auto& cfg : cfgs) {
    PairIndex fast = build_pair_index(cohort, cfg);
    PairIndex slow = brute_force_index(cohort, cfg);
    CHECK(fast.pairs == slow.pairs);
    CHECK(fast.orphans == slow.orphans);
    CHECK(fast.partners == slow.partners);
    sets.emplace_back(fast.pairs.begin(), fast.pairs.end());
  }
  for (const auto& pair : sets[0]) CHECK(sets[1].count(pair));
  for (const auto& pair : sets[1]) CHECK(sets[2].count(pair));
}

TEST_CASE("relation partition covers all pairs") {
  Cohort cohort = random_cohort(8, 5, 99);
  size_t pos = 0, neg = 0, exc = 0;
  for (size_t i = 0; i < cohort.size(); ++i)
    for (size_t j = i + 1; j < cohort.size(); ++j) {
      switch (relate(cohort.record(i), cohort.record(j), kHalfYear)) {
        case Relation::Positive: ++pos; break;
        case Relation::Negative: ++neg; break;
        case Relation::Excluded: ++exc; break;
      }
    }
  CHECK(pos + neg + exc == cohort.size() * (cohort.size() - 1) / 2);
}

TEST_CASE("pair stats") {
  Cohort cohort = random_cohort(20, 6, 55);
  PairIndex bounded = build_pair_index(cohort, kHalfYear);
  PairIndex unbounded = build_pair_index(cohort, RelationConfig::unbounded(0.02));
  PairStats stats = pair_stats(bounded, cohort);
  CHECK(stats.pair_count == bounded.pair_count());
  CHECK(stats.orphan_count == bounded.orphans.size());
  CHECK(stats.fraction_of_unbounded ==
        doctest::Approx(static_cast<double>(bounded.pair_count()) /
                        static_cast<double>(unbounded.pair_count())));

  size_t total_binned = 0;
  for (size_t c : stats.delta_t_histogram_months) total_binned += c;
  CHECK(total_binned == stats.pair_count);
  // every bounded pair gap is at most 0.5 years = 6 months
  CHECK(stats.delta_t_histogram_months.size() <= 7);

  PairStats empty_stats = pair_stats(PairIndex{kHalfYear, {}, {}, {}}, Cohort{});
  CHECK(empty_stats.pair_count == 0);
  CHECK(empty_stats.fraction_of_unbounded == 0.0);
}

TEST_CASE("pair index serialization is sorted and complete") {
  Cohort cohort = random_cohort(5, 4, 31);
  PairIndex index = build_pair_index(cohort, kHalfYear);
  std::ostringstream pairs_out, orphans_out;
  save_pair_index(index, cohort, pairs_out, orphans_out);
  std::istringstream in(pairs_out.str());
  Table t = read_table(in);
  CHECK(t.rows.size() == index.pair_count());
  CHECK(std::is_sorted(t.rows.begin(), t.rows.end()));
}
