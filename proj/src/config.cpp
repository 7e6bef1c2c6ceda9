#include "melc/config.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace melc {

using nlohmann::json;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

json relation_to_json(const RelationConfig& r) {
  json j;
  j["delta_min_years"] = r.delta_min_years;
  if (r.delta_max_years) j["delta_max_years"] = *r.delta_max_years;
  else j["delta_max_years"] = nullptr;
  return j;
}

void relation_from_json(const json& j, RelationConfig& r) {
  maybe(j, "delta_min_years", r.delta_min_years);
  if (j.contains("delta_max_years")) {
    if (j.at("delta_max_years").is_null()) r.delta_max_years.reset();
    else r.delta_max_years = j.at("delta_max_years").get<double>();
  }
}

json encoder_to_json(const EncoderSpec& e) {
  return json{{"input_height", e.input_height}, {"input_width", e.input_width},
              {"hidden", e.hidden},             {"embedding_dim", e.embedding_dim},
              {"projector", e.projector},       {"predictor", e.predictor},
              {"head_batch_norm", e.head_batch_norm}};
}

void encoder_from_json(const json& j, EncoderSpec& e) {
  maybe(j, "input_height", e.input_height);
  maybe(j, "input_width", e.input_width);
  maybe(j, "hidden", e.hidden);
  maybe(j, "embedding_dim", e.embedding_dim);
  maybe(j, "projector", e.projector);
  maybe(j, "predictor", e.predictor);
  maybe(j, "head_batch_norm", e.head_batch_norm);
}

json augment_to_json(const AugmentConfig& a) {
  return json{{"jitter_probability", a.jitter_probability},
              {"max_rel_change", a.max_rel_change},
              {"max_rotation_deg", a.max_rotation_deg},
              {"crop_height", a.crop_height},
              {"crop_width", a.crop_width},
              {"flip_probability", a.flip_probability},
              {"scale_min", a.scale_min},
              {"scale_max", a.scale_max},
              {"aspect_min", a.aspect_min},
              {"aspect_max", a.aspect_max},
              {"out_height", a.out_height},
              {"out_width", a.out_width}};
}

void augment_from_json(const json& j, AugmentConfig& a) {
  maybe(j, "jitter_probability", a.jitter_probability);
  maybe(j, "max_rel_change", a.max_rel_change);
  maybe(j, "max_rotation_deg", a.max_rotation_deg);
  maybe(j, "crop_height", a.crop_height);
  maybe(j, "crop_width", a.crop_width);
  maybe(j, "flip_probability", a.flip_probability);
  maybe(j, "scale_min", a.scale_min);
  maybe(j, "scale_max", a.scale_max);
  maybe(j, "aspect_min", a.aspect_min);
  maybe(j, "aspect_max", a.aspect_max);
  maybe(j, "out_height", a.out_height);
  maybe(j, "out_width", a.out_width);
}

json cadence_to_json(const ValidationCadence& c) {
  json stages = json::array();
  for (const auto& [start, interval] : c.stages)
    stages.push_back(json{{"start", start}, {"interval", interval}});
  return json{{"initial_interval", c.initial_interval}, {"stages", stages}};
}

void cadence_from_json(const json& j, ValidationCadence& c) {
  maybe(j, "initial_interval", c.initial_interval);
  if (j.contains("stages")) {
    c.stages.clear();
    for (const auto& s : j.at("stages"))
      c.stages.emplace_back(s.at("start").get<long>(), s.at("interval").get<long>());
  }
}

json train_to_json(const TrainConfig& t) {
  return json{{"learning_rate", t.learning_rate},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"adam_epsilon", t.adam_epsilon},
              {"weight_decay", t.weight_decay},
              {"total_steps", t.total_steps},
              {"warmup_steps", t.warmup_steps},
              {"batch_size", t.batch_size},
              {"ema_tau", t.ema_tau},
              {"temperature", t.temperature},
              {"class_prior", t.class_prior},
              {"q_positives", t.q_positives},
              {"simclr_debiased", t.simclr_debiased},
              {"self_pair_fallback", t.self_pair_fallback},
              {"byol_ablate_predictor", t.byol_ablate_predictor},
              {"byol_ablate_ema", t.byol_ablate_ema},
              {"seed", t.seed},
              {"cadence", cadence_to_json(t.cadence)}};
}

void train_from_json(const json& j, TrainConfig& t, std::optional<bool>& debiased) {
  maybe(j, "learning_rate", t.learning_rate);
  maybe(j, "beta1", t.beta1);
  maybe(j, "beta2", t.beta2);
  maybe(j, "adam_epsilon", t.adam_epsilon);
  maybe(j, "weight_decay", t.weight_decay);
  maybe(j, "total_steps", t.total_steps);
  maybe(j, "warmup_steps", t.warmup_steps);
  maybe(j, "batch_size", t.batch_size);
  maybe(j, "ema_tau", t.ema_tau);
  maybe(j, "temperature", t.temperature);
  maybe(j, "class_prior", t.class_prior);
  maybe(j, "q_positives", t.q_positives);
  if (j.contains("simclr_debiased")) debiased = j.at("simclr_debiased").get<bool>();
  maybe(j, "self_pair_fallback", t.self_pair_fallback);
  maybe(j, "byol_ablate_predictor", t.byol_ablate_predictor);
  maybe(j, "byol_ablate_ema", t.byol_ablate_ema);
  maybe(j, "seed", t.seed);
  if (j.contains("cadence")) cadence_from_json(j.at("cadence"), t.cadence);
}

json finetune_to_json(const FinetuneConfig& f) {
  return json{{"epochs", f.epochs},
              {"batch_size", f.batch_size},
              {"learning_rate", f.learning_rate},
              {"weight_decay", f.weight_decay},
              {"beta1", f.beta1},
              {"beta2", f.beta2},
              {"adam_epsilon", f.adam_epsilon},
              {"max_val_examples", f.max_val_examples},
              {"seed", f.seed}};
}

void finetune_from_json(const json& j, FinetuneConfig& f) {
  maybe(j, "epochs", f.epochs);
  maybe(j, "batch_size", f.batch_size);
  maybe(j, "learning_rate", f.learning_rate);
  maybe(j, "weight_decay", f.weight_decay);
  maybe(j, "beta1", f.beta1);
  maybe(j, "beta2", f.beta2);
  maybe(j, "adam_epsilon", f.adam_epsilon);
  maybe(j, "max_val_examples", f.max_val_examples);
  maybe(j, "seed", f.seed);
}

json synth_to_json(const SynthConfig& s) {
  return json{{"patients", s.patients},
              {"eyes_per_patient", s.eyes_per_patient},
              {"visits_mean", s.visits_mean},
              {"visits_stddev", s.visits_stddev},
              {"visits_min", s.visits_min},
              {"visits_max", s.visits_max},
              {"gap_mean_years", s.gap_mean_years},
              {"gap_stddev_years", s.gap_stddev_years},
              {"gap_min_years", s.gap_min_years},
              {"rate_min", s.rate_min},
              {"rate_max", s.rate_max},
              {"fellow_lag_years", s.fellow_lag_years},
              {"image_size", s.image_size},
              {"noise_level", s.noise_level},
              {"stage_threshold", s.stage_threshold}};
}

void synth_from_json(const json& j, SynthConfig& s) {
  maybe(j, "patients", s.patients);
  maybe(j, "eyes_per_patient", s.eyes_per_patient);
  maybe(j, "visits_mean", s.visits_mean);
  maybe(j, "visits_stddev", s.visits_stddev);
  maybe(j, "visits_min", s.visits_min);
  maybe(j, "visits_max", s.visits_max);
  maybe(j, "gap_mean_years", s.gap_mean_years);
  maybe(j, "gap_stddev_years", s.gap_stddev_years);
  maybe(j, "gap_min_years", s.gap_min_years);
  maybe(j, "rate_min", s.rate_min);
  maybe(j, "rate_max", s.rate_max);
  maybe(j, "fellow_lag_years", s.fellow_lag_years);
  maybe(j, "image_size", s.image_size);
  maybe(j, "noise_level", s.noise_level);
  maybe(j, "stage_threshold", s.stage_threshold);
}

json split_to_json(const SplitConfig& s) {
  return json{{"val_fraction", s.val_fraction},
              {"test_fraction", s.test_fraction},
              {"seed", s.seed}};
}

void split_from_json(const json& j, SplitConfig& s) {
  maybe(j, "val_fraction", s.val_fraction);
  maybe(j, "test_fraction", s.test_fraction);
  maybe(j, "seed", s.seed);
}

}  // namespace

RunConfig RunConfig::resolved() const {
  RunConfig r = *this;
  r.train.simclr_debiased =
      simclr_debiased ? *simclr_debiased : method == Method::SimclrMe;
  return r;
}

RunConfig preset_paper() {
  RunConfig cfg;
  cfg.encoder.input_height = 192;
  cfg.encoder.input_width = 192;
  cfg.finetune.epochs = 500;
  return cfg;
}

RunConfig preset_desk() {
  RunConfig cfg;
  cfg.encoder.input_height = 32;
  cfg.encoder.input_width = 32;
  cfg.encoder.hidden = {128, 64};
  cfg.encoder.embedding_dim = 32;
  cfg.encoder.projector = {32, 16};
  cfg.encoder.predictor = {16, 16};

  cfg.augment.crop_height = 28;
  cfg.augment.crop_width = 28;
  cfg.augment.out_height = 32;
  cfg.augment.out_width = 32;

  cfg.train.total_steps = 3000;
  cfg.train.batch_size = 48;
  cfg.train.learning_rate = 1e-3;
  // the headline EMA coefficient keeps the teacher frozen over a few
  // thousand steps; short runs need a faster horizon
  cfg.train.ema_tau = 0.99;

  cfg.finetune.epochs = 50;
  cfg.finetune.batch_size = 40;
  cfg.finetune.max_val_examples = 192;

  cfg.subset_count = 4;
  return cfg;
}

RunConfig preset_by_name(const std::string& name) {
  if (name == "paper") return preset_paper();
  if (name == "desk") return preset_desk();
  throw std::invalid_argument("unknown preset '" + name + "' (expected paper or desk)");
}

RunConfig load_config_overrides(const RunConfig& base, const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot open config: " + json_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("bad config json in " + json_path + ": " + e.what());
  }
  RunConfig cfg = base;
  if (j.contains("method")) {
    const auto m = parse_method(j.at("method").get<std::string>());
    if (!m) throw std::runtime_error("bad method in config: " + j.at("method").dump());
    cfg.method = *m;
  }
  if (j.contains("relation")) relation_from_json(j.at("relation"), cfg.relation);
  if (j.contains("encoder")) encoder_from_json(j.at("encoder"), cfg.encoder);
  if (j.contains("augment")) augment_from_json(j.at("augment"), cfg.augment);
  if (j.contains("train")) train_from_json(j.at("train"), cfg.train, cfg.simclr_debiased);
  if (j.contains("finetune")) finetune_from_json(j.at("finetune"), cfg.finetune);
  if (j.contains("synth")) synth_from_json(j.at("synth"), cfg.synth);
  if (j.contains("split")) split_from_json(j.at("split"), cfg.split);
  maybe(j, "subset_count", cfg.subset_count);
  maybe(j, "grow_epsilon", cfg.grow_epsilon);
  return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
  const RunConfig r = cfg.resolved();
  json j;
  j["method"] = method_name(r.method);
  j["relation"] = relation_to_json(r.relation);
  j["encoder"] = encoder_to_json(r.encoder);
  j["augment"] = augment_to_json(r.augment);
  j["train"] = train_to_json(r.train);
  j["finetune"] = finetune_to_json(r.finetune);
  j["synth"] = synth_to_json(r.synth);
  j["split"] = split_to_json(r.split);
  j["subset_count"] = r.subset_count;
  j["grow_epsilon"] = r.grow_epsilon;
  return j.dump();
}

std::string config_digest(const RunConfig& cfg) {
  const std::string canonical = config_to_json(cfg);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace melc
