#include "melc/batching.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace melc {

namespace {

constexpr uint64_t kViewSeedTag = 0xA0570001;

const GrayImage& image_for(const ImageStore& images, const Cohort& cohort, size_t record) {
  const std::string& id = cohort.record(record).scan_id;
  auto it = images.find(id);
  if (it == images.end()) throw std::runtime_error("no image for scan " + id);
  return it->second;
}

}  // namespace

ContrastiveBatch sample_batch(const PairIndex& index, const Cohort& cohort,
                              const ImageStore& images, size_t batch_size, uint64_t seed,
                              const AugmentConfig& augment_cfg, SampleMode mode,
                              bool self_pair_fallback) {
  if (batch_size == 0 || batch_size % 2 != 0)
    throw std::invalid_argument("sample_batch: batch size must be even and positive");
  const size_t pairs_needed = batch_size / 2;

  // Candidate entries: (first record, second record); equal records mean a
  // self pair. The shuffled list is walked greedily so that no scan repeats
  // within the batch.
  std::vector<std::pair<size_t, size_t>> entries;
  if (mode == SampleMode::SelfPairs) {
    entries.reserve(cohort.size());
    for (size_t i = 0; i < cohort.size(); ++i) entries.emplace_back(i, i);
  } else {
    if (index.pairs.empty() && !self_pair_fallback)
      throw std::runtime_error("sample_batch: pair index is empty and self-pair fallback is off");
    entries = index.pairs;
    if (self_pair_fallback)
      for (size_t orphan : index.orphans) entries.emplace_back(orphan, orphan);
  }

  Rng rng(seed);
  rng.shuffle(entries);

  std::vector<std::pair<size_t, size_t>> chosen;
  std::unordered_set<size_t> used;
  for (const auto& entry : entries) {
    if (chosen.size() == pairs_needed) break;
    if (used.count(entry.first) || (entry.second != entry.first && used.count(entry.second)))
      continue;
    used.insert(entry.first);
    used.insert(entry.second);
    chosen.push_back(entry);
  }
  if (chosen.size() < pairs_needed)
    throw std::runtime_error("sample_batch: only " + std::to_string(chosen.size()) +
                             " disjoint pairs available, need " + std::to_string(pairs_needed));

  ContrastiveBatch batch;
  batch.slots.resize(batch_size);
  for (size_t k = 0; k < pairs_needed; ++k) {
    const size_t s0 = 2 * k;
    const size_t s1 = 2 * k + 1;
    batch.slots[s0].record_index = chosen[k].first;
    batch.slots[s1].record_index = chosen[k].second;
    batch.slots[s0].partner_slot = s1;
    batch.slots[s1].partner_slot = s0;
  }
  for (size_t s = 0; s < batch_size; ++s) {
    const GrayImage& img = image_for(images, cohort, batch.slots[s].record_index);
    batch.slots[s].view = augment(img, augment_cfg, mix_seed(seed, kViewSeedTag, s));
  }

  batch.mask = mode == SampleMode::MetadataPairs
                   ? relation_mask(batch.slots, cohort, index.config)
                   : view_identity_mask(batch.slots, cohort);
  return batch;
}

RelationMask relation_mask(const std::vector<BatchSlot>& slots, const Cohort& cohort,
                           const RelationConfig& cfg) {
  const size_t n = slots.size();
  RelationMask mask(n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const size_t ri = slots[i].record_index;
      const size_t rj = slots[j].record_index;
      MaskEntry e;
      if (ri == rj) {
        e = MaskEntry::Self;
      } else {
        switch (relate(cohort.record(ri), cohort.record(rj), cfg)) {
          case Relation::Positive: e = MaskEntry::Positive; break;
          case Relation::Negative: e = MaskEntry::Negative; break;
          default: e = MaskEntry::Excluded; break;
        }
      }
      mask.set(i, j, e);
    }
  }
  for (size_t i = 0; i < n; ++i)
    if (slots[i].partner_slot != i) mask.set(i, slots[i].partner_slot, MaskEntry::Positive);
  return mask;
}

RelationMask view_identity_mask(const std::vector<BatchSlot>& slots, const Cohort& cohort) {
  const size_t n = slots.size();
  RelationMask mask(n, MaskEntry::Negative);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j)
      if (slots[i].record_index == slots[j].record_index) mask.set(i, j, MaskEntry::Self);
  }
  for (size_t i = 0; i < n; ++i)
    if (slots[i].partner_slot != i) mask.set(i, slots[i].partner_slot, MaskEntry::Positive);
  (void)cohort;
  return mask;
}

Table batch_log_table(const ContrastiveBatch& batch, const Cohort& cohort) {
  Table t;
  t.header = {"slot", "scan_id", "partner_slot", "positives", "negatives", "excluded"};
  for (size_t i = 0; i < batch.slots.size(); ++i) {
    size_t pos = 0, neg = 0, exc = 0;
    for (size_t j = 0; j < batch.slots.size(); ++j) {
      if (j == i) continue;
      switch (batch.mask.at(i, j)) {
        case MaskEntry::Positive: ++pos; break;
        case MaskEntry::Negative: ++neg; break;
        case MaskEntry::Excluded: ++exc; break;
        case MaskEntry::Self: break;
      }
    }
    t.rows.push_back({std::to_string(i), cohort.record(batch.slots[i].record_index).scan_id,
                      std::to_string(batch.slots[i].partner_slot), std::to_string(pos),
                      std::to_string(neg), std::to_string(exc)});
  }
  return t;
}

}  // namespace melc
