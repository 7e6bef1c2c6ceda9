#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace melc {

// Per-batch pairwise roles consumed by the losses. Self marks the diagonal
// and two views of the same scan; Excluded entries take part in neither the
// numerator nor the denominator of any loss.
enum class MaskEntry : uint8_t { Positive, Negative, Excluded, Self };

class RelationMask {
 public:
  RelationMask() = default;
  explicit RelationMask(size_t n, MaskEntry fill = MaskEntry::Negative)
      : n_(n), entries_(n * n, fill) {
    for (size_t i = 0; i < n; ++i) set(i, i, MaskEntry::Self);
  }

  size_t size() const { return n_; }

  MaskEntry at(size_t i, size_t j) const { return entries_[i * n_ + j]; }

  // Writes both (i, j) and (j, i); the mask stays symmetric by construction.
  void set(size_t i, size_t j, MaskEntry e) {
    entries_[i * n_ + j] = e;
    entries_[j * n_ + i] = e;
  }

  bool symmetric() const {
    for (size_t i = 0; i < n_; ++i)
      for (size_t j = i + 1; j < n_; ++j)
        if (at(i, j) != at(j, i)) return false;
    return true;
  }

  void validate_for_loss() const {
    for (size_t i = 0; i < n_; ++i) {
      if (at(i, i) != MaskEntry::Self)
        throw std::invalid_argument("relation mask diagonal must be Self");
      bool has_positive = false;
      for (size_t j = 0; j < n_; ++j)
        if (j != i && at(i, j) == MaskEntry::Positive) has_positive = true;
      if (!has_positive)
        throw std::invalid_argument("relation mask row " + std::to_string(i) +
                                    " has no positive entry");
    }
  }

 private:
  size_t n_ = 0;
  std::vector<MaskEntry> entries_;
};

}  // namespace melc
