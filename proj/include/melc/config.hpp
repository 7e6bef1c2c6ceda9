#pragma once

#include <optional>
#include <string>

#include "melc/augment.hpp"
#include "melc/evaluation.hpp"
#include "melc/relations.hpp"
#include "melc/synth.hpp"
#include "melc/trainer.hpp"

namespace melc {

// One run = one resolved config + seed. Reports embed the digest of the
// resolved config so outputs can be traced back to their settings.
struct RunConfig {
  Method method = Method::SimclrMe;
  RelationConfig relation;
  EncoderSpec encoder;
  AugmentConfig augment;
  TrainConfig train;
  FinetuneConfig finetune;
  SynthConfig synth;
  SplitConfig split;
  int subset_count = 7;
  double grow_epsilon = 0.01;
  // Debiased NT-Xent defaults to on for SimCLR-ME and off otherwise; the
  // config key "train.simclr_debiased" overrides either way.
  std::optional<bool> simclr_debiased;

  // Applies the debiased default and returns a config ready to run.
  RunConfig resolved() const;
};

// Full-scale settings (192x192 inputs, 120k steps, batch 384).
RunConfig preset_paper();
// Small settings for CPU-scale runs (32x32 inputs, short schedules).
RunConfig preset_desk();

RunConfig preset_by_name(const std::string& name);

// Overrides fields of base with the JSON document's keys (partial updates).
RunConfig load_config_overrides(const RunConfig& base, const std::string& json_path);

std::string config_to_json(const RunConfig& cfg);

// 64-bit FNV-1a of the canonical JSON form, as 16 hex digits.
std::string config_digest(const RunConfig& cfg);

}  // namespace melc
