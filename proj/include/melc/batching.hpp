#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "melc/augment.hpp"
#include "melc/cohort.hpp"
#include "melc/csv.hpp"
#include "melc/mask.hpp"
#include "melc/relations.hpp"

namespace melc {

// MetadataPairs draws positive pairs from a PairIndex (two different scans);
// SelfPairs pairs every image with a second augmentation of itself, which is
// what the standard contrastive variants use.
enum class SampleMode : uint8_t { MetadataPairs, SelfPairs };

struct BatchSlot {
  size_t record_index = 0;
  size_t partner_slot = 0;
  GrayImage view;
};

struct ContrastiveBatch {
  std::vector<BatchSlot> slots;
  RelationMask mask;
};

// Draws batch_size/2 pairs without within-batch scan repetition, augments
// each slot once, and attaches the relation mask (MetadataPairs) or the
// view-identity mask (SelfPairs). Orphan scans enter via self pairs when
// self_pair_fallback is set. Deterministic in seed.
ContrastiveBatch sample_batch(const PairIndex& index, const Cohort& cohort,
                              const ImageStore& images, size_t batch_size, uint64_t seed,
                              const AugmentConfig& augment_cfg, SampleMode mode,
                              bool self_pair_fallback);

// relate() over every slot pair of distinct scans; Self on the diagonal and
// between two views of one scan; designated partners forced Positive.
RelationMask relation_mask(const std::vector<BatchSlot>& slots, const Cohort& cohort,
                           const RelationConfig& cfg);

// Partners Positive, everything else between distinct slots Negative.
RelationMask view_identity_mask(const std::vector<BatchSlot>& slots, const Cohort& cohort);

// Audit table: slot, scan_id, partner slot and per-slot relation counts.
Table batch_log_table(const ContrastiveBatch& batch, const Cohort& cohort);

}  // namespace melc
