#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "melc/batching.hpp"
#include "melc/rng.hpp"

using namespace melc;

namespace {

struct Fixture {
  Cohort cohort;
  ImageStore images;
  PairIndex index;
  AugmentConfig aug;

  // patients x eyes x visits with visit gaps of 0.25 years
  Fixture(int patients, int eyes, int visits, double delta_max = 0.5) {
    std::vector<ScanRecord> records;
    Rng rng(4242);
    for (int p = 0; p < patients; ++p) {
      for (int e = 0; e < eyes; ++e) {
        for (int v = 0; v < visits; ++v) {
          ScanRecord r;
          r.scan_id = "p" + std::to_string(p) + (e ? "L" : "R") + std::to_string(v);
          r.patient_id = "p" + std::to_string(p);
          r.laterality = e ? Laterality::Left : Laterality::Right;
          r.timestamp_days = years_to_days(0.25 * v);
          records.push_back(r);
        }
      }
    }
    cohort = Cohort(std::move(records));
    for (const auto& r : cohort.records()) {
      GrayImage img(16, 16);
      for (auto& val : img.values) val = rng.uniform01();
      images.emplace(r.scan_id, img);
    }
    index = build_pair_index(cohort, RelationConfig::bounded(0.02, delta_max));
    aug.crop_height = 14;
    aug.crop_width = 14;
    aug.out_height = 16;
    aug.out_width = 16;
  }
};

}  // namespace

TEST_CASE("batch structure and coverage") {
  Fixture f(6, 2, 4);
  ContrastiveBatch batch = sample_batch(f.index, f.cohort, f.images, 6, 1, f.aug,
                                        SampleMode::MetadataPairs, true);
  REQUIRE(batch.slots.size() == 6);
  REQUIRE(batch.mask.size() == 6);
  for (size_t i = 0; i < 6; ++i) {
    const size_t partner = batch.slots[i].partner_slot;
    CHECK(partner != i);
    CHECK(batch.slots[partner].partner_slot == i);
    CHECK(batch.mask.at(i, partner) == MaskEntry::Positive);
    CHECK(batch.mask.at(i, i) == MaskEntry::Self);
    CHECK(batch.slots[i].view.height == 16);
  }
  CHECK(batch.mask.symmetric());
}

TEST_CASE("no scan repeats within a batch") {
  Fixture f(8, 2, 4);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    ContrastiveBatch batch = sample_batch(f.index, f.cohort, f.images, 12, seed, f.aug,
                                          SampleMode::MetadataPairs, false);
    std::set<size_t> seen;
    for (const auto& slot : batch.slots) CHECK(seen.insert(slot.record_index).second);
  }
}

TEST_CASE("deterministic given the seed") {
  Fixture f(6, 2, 4);
  ContrastiveBatch a = sample_batch(f.index, f.cohort, f.images, 8, 7, f.aug,
                                    SampleMode::MetadataPairs, true);
  ContrastiveBatch b = sample_batch(f.index, f.cohort, f.images, 8, 7, f.aug,
                                    SampleMode::MetadataPairs, true);
  REQUIRE(a.slots.size() == b.slots.size());
  for (size_t i = 0; i < a.slots.size(); ++i) {
    CHECK(a.slots[i].record_index == b.slots[i].record_index);
    CHECK(a.slots[i].view.values == b.slots[i].view.values);
  }
}

TEST_CASE("odd batch size is an error") {
  Fixture f(4, 2, 3);
  CHECK_THROWS_AS(sample_batch(f.index, f.cohort, f.images, 5, 1, f.aug,
                               SampleMode::MetadataPairs, true),
                  std::invalid_argument);
}

TEST_CASE("insufficient disjoint pairs names the shortfall") {
  Fixture f(1, 1, 3);  // one eye, visits at 0, .25, .5 -> pairs (0,1),(1,2),(0,2)
  CHECK_THROWS_WITH_AS(sample_batch(f.index, f.cohort, f.images, 8, 1, f.aug,
                                    SampleMode::MetadataPairs, false),
                       doctest::Contains("need 4"), std::runtime_error);
}

TEST_CASE("orphans enter via the self-pair fallback") {
  // two patients with a single scan each: no positive pairs exist
  Fixture f(2, 1, 1);
  REQUIRE(f.index.pairs.empty());
  CHECK_THROWS_AS(sample_batch(f.index, f.cohort, f.images, 2, 1, f.aug,
                               SampleMode::MetadataPairs, false),
                  std::runtime_error);
  ContrastiveBatch batch = sample_batch(f.index, f.cohort, f.images, 2, 1, f.aug,
                                        SampleMode::MetadataPairs, true);
  CHECK(batch.slots[0].record_index == batch.slots[1].record_index);
  CHECK(batch.mask.at(0, 1) == MaskEntry::Positive);  // sanctioned self pair
  // the two views differ (independent augmentation seeds)
  CHECK(batch.slots[0].view.values != batch.slots[1].view.values);
}

TEST_CASE("self-pair mode pairs each image with itself") {
  Fixture f(5, 2, 2);
  ContrastiveBatch batch = sample_batch(f.index, f.cohort, f.images, 8, 3, f.aug,
                                        SampleMode::SelfPairs, false);
  for (size_t i = 0; i < batch.slots.size(); i += 2)
    CHECK(batch.slots[i].record_index == batch.slots[i + 1].record_index);
}

TEST_CASE("relation mask agrees with relate() on every off-diagonal entry") {
  Fixture f(6, 2, 4);
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    ContrastiveBatch batch = sample_batch(f.index, f.cohort, f.images, 12, rng.next_u64(),
                                          f.aug, SampleMode::MetadataPairs, true);
    for (size_t i = 0; i < batch.slots.size(); ++i)
      for (size_t j = 0; j < batch.slots.size(); ++j) {
        const size_t ri = batch.slots[i].record_index;
        const size_t rj = batch.slots[j].record_index;
        const MaskEntry e = batch.mask.at(i, j);
        if (i == j || ri == rj) {
          if (i != j && batch.slots[i].partner_slot == j)
            CHECK(e == MaskEntry::Positive);
          else
            CHECK(e == MaskEntry::Self);
          continue;
        }
        switch (relate(f.cohort.record(ri), f.cohort.record(rj), f.index.config)) {
          case Relation::Positive: CHECK(e == MaskEntry::Positive); break;
          case Relation::Negative: CHECK(e == MaskEntry::Negative); break;
          case Relation::Excluded: CHECK(e == MaskEntry::Excluded); break;
        }
      }
  }
}

TEST_CASE("cross entries between distinct patients are negative") {
  Fixture f(8, 1, 2);
  ContrastiveBatch batch = sample_batch(f.index, f.cohort, f.images, 4, 5, f.aug,
                                        SampleMode::MetadataPairs, true);
  for (size_t i = 0; i < 4; ++i)
    for (size_t j = 0; j < 4; ++j) {
      if (i == j || batch.slots[i].partner_slot == j) continue;
      const auto& a = f.cohort.record(batch.slots[i].record_index);
      const auto& b = f.cohort.record(batch.slots[j].record_index);
      if (a.patient_id != b.patient_id) CHECK(batch.mask.at(i, j) == MaskEntry::Negative);
    }
}

TEST_CASE("fellow-eye pairs in one batch are excluded") {
  // one patient, both eyes, visits close in time; force both eyes into the batch
  Fixture f(1, 2, 4);
  ContrastiveBatch batch = sample_batch(f.index, f.cohort, f.images, 4, 2, f.aug,
                                        SampleMode::MetadataPairs, true);
  bool saw_fellow = false;
  for (size_t i = 0; i < 4; ++i)
    for (size_t j = 0; j < 4; ++j) {
      if (i == j) continue;
      const auto& a = f.cohort.record(batch.slots[i].record_index);
      const auto& b = f.cohort.record(batch.slots[j].record_index);
      if (a.scan_id != b.scan_id && a.laterality != b.laterality) {
        saw_fellow = true;
        CHECK(batch.mask.at(i, j) == MaskEntry::Excluded);
      }
    }
  CHECK(saw_fellow);
}

TEST_CASE("view identity mask marks cross entries negative") {
  Fixture f(6, 1, 1);
  ContrastiveBatch batch = sample_batch(f.index, f.cohort, f.images, 8, 1, f.aug,
                                        SampleMode::SelfPairs, false);
  for (size_t i = 0; i < 8; ++i)
    for (size_t j = 0; j < 8; ++j) {
      if (i == j) continue;
      if (batch.slots[i].partner_slot == j)
        CHECK(batch.mask.at(i, j) == MaskEntry::Positive);
      else
        CHECK(batch.mask.at(i, j) == MaskEntry::Negative);
    }
}

TEST_CASE("batch log table") {
  Fixture f(6, 2, 4);
  ContrastiveBatch batch = sample_batch(f.index, f.cohort, f.images, 6, 1, f.aug,
                                        SampleMode::MetadataPairs, true);
  Table t = batch_log_table(batch, f.cohort);
  CHECK(t.rows.size() == 6);
  CHECK(t.header.size() == 6);
  // positives column is at least 1 everywhere (coverage)
  const int pos_col = t.require_column("positives");
  for (const auto& row : t.rows) CHECK(std::stoi(row[pos_col]) >= 1);
}
