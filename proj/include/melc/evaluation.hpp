#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "melc/augment.hpp"
#include "melc/cohort.hpp"
#include "melc/csv.hpp"
#include "melc/trainer.hpp"

namespace melc {

// Geometric progression of labelled-subset sizes from 20 to total. Raw
// intermediate values are rounded down to the nearest 10 below 100 and to the
// nearest 100 otherwise; the largest size is the unrounded total. Rounding
// collisions are bumped up by one rounding step to keep the sizes strictly
// increasing.
std::vector<size_t> subset_sizes(size_t total_labelled, int count = 7);

// Per-class counts proportional to population shares (largest remainder),
// uniform within class, deterministic per seed. Returns sorted indices into
// class_labels. When a class would get zero samples although size allows one
// per class, a single sample is enforced and *min_enforced is set.
std::vector<size_t> stratified_subset(const std::vector<int>& class_labels, size_t size,
                                      uint64_t seed, bool* min_enforced = nullptr);

// Uniform sample without replacement; used for regression tasks.
std::vector<size_t> uniform_subset(size_t population, size_t size, uint64_t seed);

// Finetuning learning rate for labelled-subset size m, linearly interpolated
// below the reference batch size of 400.
double scaled_lr(size_t subset_size);

// Mann-Whitney AUC; ties count one half. Throws unless both classes appear.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

double mae(const std::vector<double>& predictions, const std::vector<double>& targets);

enum class TaskKind : uint8_t { BinaryClassification, ScalarRegression };

TaskKind task_kind_for(const std::string& task_name);

// Null model predicting the average label: 0.5 AUC for classification; for
// regression the MAE of the constant train-mean predictor on the test targets.
double null_performance(TaskKind kind, const std::vector<double>& train_targets,
                        const std::vector<double>& test_targets);

// ---- patient-level data splits ----

enum class Split : uint8_t { Train, Val, Test };

struct SplitConfig {
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  uint64_t seed = 9;
};

Split assign_split(const std::string& patient_id, const SplitConfig& cfg);

struct SplitIndices {
  std::vector<size_t> train;
  std::vector<size_t> val;
  std::vector<size_t> test;
};

// Splits records by patient so a patient never straddles two splits; within
// each split keeps only the records labelled for the task (if given).
SplitIndices split_cohort(const Cohort& cohort, const SplitConfig& cfg,
                          const std::string& labelled_for_task = "");

// ---- finetuning ----

struct FinetuneConfig {
  int epochs = 100;
  size_t batch_size = 400;
  double learning_rate = -1.0;   // negative: scaled_lr(subset size)
  double weight_decay = 1.5e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  size_t max_val_examples = 512;
  uint64_t seed = 1;
  AugmentConfig augment;         // the weak form is applied internally
};

struct FinetuneResult {
  double test_performance = 0.0;   // AUC (classification) or unscaled MAE (regression)
  int best_epoch = 0;              // 1-based epoch achieving the best validation score
  std::vector<double> val_history; // one validation score per epoch
};

// Replaces the projection layers with a single linear head (sigmoid for
// classification, tanh on [-1,1]-scaled labels for regression) and trains
// end-to-end with weak augmentations, reporting test performance of the
// best-validation checkpoint.
FinetuneResult attach_head_and_finetune(const ModelWeights& pretrained, TaskKind kind,
                                        const std::string& task, const Cohort& cohort,
                                        const ImageStore& images,
                                        const std::vector<size_t>& subset,
                                        const std::vector<size_t>& val_indices,
                                        const std::vector<size_t>& test_indices,
                                        const FinetuneConfig& cfg);

// ---- %GROW ----

struct GrowInputs {
  std::vector<double> pretrained;      // p_i, higher is better (negate MAE first)
  std::vector<double> baseline;        // r_i
  double null_performance = 0.0;
  double epsilon = 0.01;
  std::vector<double> var_pretrained;  // variance of each mean p_i (optional)
  std::vector<double> var_baseline;

  void validate() const;
};

// (100/M) * sum_i ( (p_i - null) / max(r_i - null, epsilon) - 1 )
double grow(const GrowInputs& inputs);

// How many denominators the epsilon clamp replaced.
int grow_clamped_terms(const GrowInputs& inputs);

// Standard deviation via the second-order Taylor expansion of the variance
// of a ratio, assuming independent numerator and denominator; clamped terms
// carry no denominator variance.
double grow_std(const GrowInputs& inputs);

// ---- results tables (CLI + acceptance plumbing) ----

struct ProbeRow {
  std::string variant;
  std::string task;
  size_t subset_size = 0;  // 0 for null-performance rows
  uint64_t seed = 0;
  std::string metric;      // "auc", "mae" or "null"
  double value = 0.0;
};

Table probe_table(const std::vector<ProbeRow>& rows);
std::vector<ProbeRow> parse_probe_table(const Table& table);

struct GrowReportRow {
  std::string variant;
  std::string task;
  double grow = 0.0;
  double grow_std = 0.0;
  int clamped_terms = 0;
  size_t subset_count = 0;
};

// Aggregates per-seed probe results into one %GROW row per (variant, task).
// Regression series are negated internally. Throws if the two tables do not
// cover identical (task, subset_size) grids, listing the missing keys.
std::vector<GrowReportRow> compute_grow_report(const std::vector<ProbeRow>& pretrained,
                                               const std::vector<ProbeRow>& baseline,
                                               double epsilon = 0.01);

Table grow_report_table(const std::vector<GrowReportRow>& rows);

}  // namespace melc
