#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "melc/augment.hpp"
#include "melc/batching.hpp"
#include "melc/cohort.hpp"
#include "melc/nn.hpp"
#include "melc/objectives.hpp"
#include "melc/relations.hpp"

namespace melc {

enum class Method : uint8_t { Simclr, SimclrMe, Byol, ByolMe };

std::string method_name(Method m);
std::optional<Method> parse_method(const std::string& text);
bool is_byol_family(Method m);
bool is_metadata_enhanced(Method m);
// e.g. "byol_me_0.5", "simclr"; metadata variants append the time window.
std::string variant_name(Method m, const RelationConfig& relation);

// Encoder and head shapes. The backbone is a multilayer perceptron on
// flattened single-channel images; projector/predictor widths end with the
// respective output dimension. The predictor exists only for BYOL variants.
struct EncoderSpec {
  int input_height = 32;
  int input_width = 32;
  std::vector<size_t> hidden = {256, 128};
  size_t embedding_dim = 64;
  std::vector<size_t> projector = {64, 32};
  std::vector<size_t> predictor = {32, 32};
  // Standardize hidden pre-activations of the projection heads over the
  // batch. The encoder itself stays plain so encode() is a pure per-image
  // function.
  bool head_batch_norm = true;

  size_t input_dim() const { return static_cast<size_t>(input_height) * input_width; }
  size_t projection_dim() const { return projector.empty() ? embedding_dim : projector.back(); }
  void validate() const;
};

struct ModelWeights {
  EncoderSpec spec;
  Mlp encoder;
  Mlp projector;
  std::optional<Mlp> predictor;  // present iff BYOL-family
};

ModelWeights make_model(const EncoderSpec& spec, bool with_predictor, uint64_t seed);

// Named parameter tensors in a fixed order (encoder, projector, predictor).
struct TensorRef {
  std::string name;
  std::vector<double>* data;
};
std::vector<TensorRef> model_tensors(ModelWeights& model);

// Deterministic forward pass through the encoder only (pre-projection).
std::vector<double> encode(const ModelWeights& model, const GrayImage& image);

// Validation cadence: validate every initial_interval steps, then from each
// stage's start step onward every stage interval. Step 0 always validates.
struct ValidationCadence {
  long initial_interval = 4;
  std::vector<std::pair<long, long>> stages = {{100, 200}, {500, 300}, {1000, 500}};
};

bool validation_cadence(long step, const ValidationCadence& cadence);

struct TrainConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double weight_decay = 0.0;      // finetuning overrides this with 1.5e-6
  long total_steps = 120000;
  long warmup_steps = -1;         // negative: 1% of total_steps
  size_t batch_size = 384;
  double ema_tau = 0.9995;
  // Faster predictor updates keep the online head near-optimal, which is
  // what stops the bootstrap target from collapsing at this scale.
  double predictor_lr_multiplier = 10.0;
  double temperature = 0.1;
  double class_prior = 0.05;      // debiased estimator tau_plus
  int q_positives = 20;
  bool simclr_debiased = false;
  bool self_pair_fallback = true;
  bool byol_ablate_predictor = false;
  bool byol_ablate_ema = false;
  uint64_t seed = 1;
  ValidationCadence cadence;

  long resolved_warmup() const {
    return warmup_steps >= 0 ? warmup_steps : total_steps / 100;
  }
  void validate() const;
};

// Linear ramp to the base rate over the warmup, then cosine decay to zero.
double lr_at(long step, const TrainConfig& cfg);

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

// Bias-corrected adaptive update; step is 1-based. Throws on a non-finite
// gradient, naming the parameter block.
void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamMoments& moments, long step, double lr, const AdamConfig& cfg,
               const std::string& block_name);

struct TrainState {
  ModelWeights student;
  std::optional<ModelWeights> teacher;  // BYOL target network
  std::vector<AdamMoments> moments;     // aligned with model_tensors(student)
  long next_step = 0;
};

struct TraceRow {
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::string variant;
};

struct PretrainOptions {
  Method method = Method::SimclrMe;
  RelationConfig relation;
  EncoderSpec encoder;
  TrainConfig train;
  AugmentConfig augment;
};

struct PretrainResult {
  TrainState state;
  std::vector<TraceRow> trace;
  std::vector<long> validation_steps;
};

using ValidateCallback = std::function<void(long step, const TrainState& state)>;

// Runs the pretraining loop: sample batch, augment, encode/project (and
// predict for BYOL), masked loss, optimizer step, EMA update. Deterministic
// in (config, seed); aborts with the step number if the loss diverges.
// Passing a start state resumes mid-run and continues bit-identically;
// stop_after pauses before total_steps without altering the schedule.
PretrainResult pretrain(const Cohort& cohort, const ImageStore& images,
                        const PretrainOptions& opts,
                        const ValidateCallback& on_validate = {},
                        std::optional<TrainState> start = std::nullopt,
                        std::optional<long> stop_after = std::nullopt);

void write_trace_file(const std::string& path, const std::vector<TraceRow>& trace,
                      const std::string& config_digest);

// Versioned binary checkpoint embedding a config digest; restoring and
// continuing reproduces an uninterrupted run bit-for-bit.
void save_checkpoint(const std::string& path, const TrainState& state, Method method,
                     const std::string& config_digest);

struct Checkpoint {
  TrainState state;
  Method method = Method::Simclr;
  std::string config_digest;
};

Checkpoint load_checkpoint(const std::string& path);

// Mean over dimensions of the per-dimension standard deviation of
// unit-normalized encoder embeddings; low values indicate collapse.
double normalized_embedding_spread(const ModelWeights& model,
                                   const std::vector<GrayImage>& images);

}  // namespace melc
