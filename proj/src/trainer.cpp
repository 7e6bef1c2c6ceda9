#include "melc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "melc/csv.hpp"

namespace melc {

namespace {

constexpr uint64_t kInitSeedTag = 0x1417;
constexpr uint64_t kBatchSeedTag = 0xBA7C;
constexpr char kCheckpointMagic[8] = {'M', 'E', 'L', 'C', 'C', 'K', 'P', '1'};

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::Simclr: return "simclr";
    case Method::SimclrMe: return "simclr_me";
    case Method::Byol: return "byol";
    case Method::ByolMe: return "byol_me";
  }
  return "?";
}

std::optional<Method> parse_method(const std::string& text) {
  if (text == "simclr") return Method::Simclr;
  if (text == "simclr_me") return Method::SimclrMe;
  if (text == "byol") return Method::Byol;
  if (text == "byol_me") return Method::ByolMe;
  return std::nullopt;
}

bool is_byol_family(Method m) { return m == Method::Byol || m == Method::ByolMe; }

bool is_metadata_enhanced(Method m) {
  return m == Method::SimclrMe || m == Method::ByolMe;
}

std::string variant_name(Method m, const RelationConfig& relation) {
  std::string name = method_name(m);
  if (is_metadata_enhanced(m)) {
    name += relation.is_unbounded() ? "_inf" : "_" + fmt_double(*relation.delta_max_years);
  }
  return name;
}

void EncoderSpec::validate() const {
  if (input_height <= 0 || input_width <= 0)
    throw std::invalid_argument("encoder input size must be positive");
  if (embedding_dim == 0) throw std::invalid_argument("embedding_dim must be positive");
  for (size_t w : hidden)
    if (w == 0) throw std::invalid_argument("zero hidden width");
  for (size_t w : projector)
    if (w == 0) throw std::invalid_argument("zero projector width");
  for (size_t w : predictor)
    if (w == 0) throw std::invalid_argument("zero predictor width");
}

ModelWeights make_model(const EncoderSpec& spec, bool with_predictor, uint64_t seed) {
  spec.validate();
  ModelWeights model;
  model.spec = spec;

  std::vector<size_t> encoder_widths = spec.hidden;
  encoder_widths.push_back(spec.embedding_dim);
  model.encoder = make_mlp(spec.input_dim(), encoder_widths);

  std::vector<size_t> projector_widths =
      spec.projector.empty() ? std::vector<size_t>{spec.embedding_dim} : spec.projector;
  model.projector = make_mlp(spec.embedding_dim, projector_widths);
  if (spec.head_batch_norm) enable_hidden_batch_norm(model.projector);

  Rng rng(mix_seed(seed, kInitSeedTag));
  init_he(model.encoder, rng);
  init_he(model.projector, rng);
  if (with_predictor) {
    std::vector<size_t> predictor_widths =
        spec.predictor.empty() ? std::vector<size_t>{spec.projection_dim()} : spec.predictor;
    if (predictor_widths.back() != spec.projection_dim())
      throw std::invalid_argument("predictor output must match projection dim");
    model.predictor = make_mlp(spec.projection_dim(), predictor_widths);
    if (spec.head_batch_norm) enable_hidden_batch_norm(*model.predictor);
    init_he(*model.predictor, rng);
  }
  return model;
}

std::vector<TensorRef> model_tensors(ModelWeights& model) {
  std::vector<TensorRef> tensors;
  auto add = [&tensors](const std::string& prefix, Mlp& mlp) {
    for (size_t l = 0; l < mlp.layers.size(); ++l) {
      const std::string base = prefix + "." + std::to_string(l);
      tensors.push_back({base + ".w", &mlp.layers[l].w});
      tensors.push_back({base + ".b", &mlp.layers[l].b});
      if (mlp.layers[l].batch_norm) {
        tensors.push_back({base + ".gamma", &mlp.layers[l].gamma});
        tensors.push_back({base + ".beta", &mlp.layers[l].beta});
      }
    }
  };
  add("encoder", model.encoder);
  add("projector", model.projector);
  if (model.predictor) add("predictor", *model.predictor);
  return tensors;
}

std::vector<double> encode(const ModelWeights& model, const GrayImage& image) {
  if (static_cast<size_t>(image.height) * image.width != model.spec.input_dim())
    throw std::invalid_argument("encode: image size does not match encoder input");
  return mlp_forward(model.encoder, image.values, 1);
}

bool validation_cadence(long step, const ValidationCadence& cadence) {
  long interval = cadence.initial_interval;
  for (const auto& [start, stage_interval] : cadence.stages)
    if (step >= start) interval = stage_interval;
  if (interval <= 0) return false;
  return step % interval == 0;
}

void TrainConfig::validate() const {
  if (learning_rate <= 0 || beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1 ||
      adam_epsilon <= 0)
    throw std::invalid_argument("optimizer rates out of range");
  if (total_steps <= 0) throw std::invalid_argument("total_steps must be positive");
  if (resolved_warmup() >= total_steps)
    throw std::invalid_argument("warmup steps must be below total steps");
  if (batch_size == 0 || batch_size % 2 != 0)
    throw std::invalid_argument("batch size must be even and positive");
  if (ema_tau < 0 || ema_tau > 1) throw std::invalid_argument("ema tau must be in [0,1]");
  if (temperature <= 0) throw std::invalid_argument("temperature must be positive");
  if (class_prior <= 0 || class_prior >= 1)
    throw std::invalid_argument("class prior must be in (0,1)");
  if (q_positives < 1) throw std::invalid_argument("Q must be >= 1");
}

double lr_at(long step, const TrainConfig& cfg) {
  if (step < 0 || step > cfg.total_steps)
    throw std::invalid_argument("lr_at: step outside [0, total_steps]");
  const long warmup = cfg.resolved_warmup();
  if (step < warmup)
    return cfg.learning_rate * static_cast<double>(step) / static_cast<double>(warmup);
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(cfg.total_steps - warmup);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(M_PI * progress));
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamMoments& moments, long step, double lr, const AdamConfig& cfg,
               const std::string& block_name) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: shape mismatch for " + block_name);
  if (moments.m.size() != params.size()) {
    moments.m.assign(params.size(), 0.0);
    moments.v.assign(params.size(), 0.0);
  }
  if (step < 1) throw std::invalid_argument("adam_step: step must be >= 1");

  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    if (!std::isfinite(g))
      throw std::runtime_error("adam_step: non-finite gradient in " + block_name);
    if (cfg.weight_decay != 0.0) g += cfg.weight_decay * params[i];
    moments.m[i] = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * g;
    moments.v[i] = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = moments.m[i] / bc1;
    const double v_hat = moments.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

namespace {

struct ForwardPass {
  MlpCache encoder_cache;
  MlpCache projector_cache;
  MlpCache predictor_cache;
  std::vector<double> projections;  // B x proj_dim
  std::vector<double> predictions;  // B x proj_dim (BYOL)
};

std::vector<double> flatten_views(const ContrastiveBatch& batch) {
  const size_t B = batch.slots.size();
  const size_t dim = batch.slots.front().view.size();
  std::vector<double> input(B * dim);
  for (size_t s = 0; s < B; ++s) {
    const auto& v = batch.slots[s].view.values;
    if (v.size() != dim) throw std::runtime_error("inconsistent view sizes in batch");
    std::copy(v.begin(), v.end(), input.begin() + s * dim);
  }
  return input;
}

EmbeddingBlock to_block(const std::vector<double>& data, size_t rows) {
  EmbeddingBlock block(rows, data.size() / rows);
  block.data = data;
  return block;
}

struct ModelGrads {
  MlpGrads encoder;
  MlpGrads projector;
  MlpGrads predictor;
  bool has_predictor = false;
};

ModelGrads make_model_grads(const ModelWeights& model) {
  ModelGrads g;
  g.encoder = make_grads(model.encoder);
  g.projector = make_grads(model.projector);
  if (model.predictor) {
    g.predictor = make_grads(*model.predictor);
    g.has_predictor = true;
  }
  return g;
}

// Must enumerate in the same order as model_tensors.
std::vector<std::vector<double>*> grad_tensors(ModelGrads& grads) {
  std::vector<std::vector<double>*> out;
  auto add = [&out](MlpGrads& g) {
    for (size_t l = 0; l < g.w.size(); ++l) {
      out.push_back(&g.w[l]);
      out.push_back(&g.b[l]);
      if (!g.gamma[l].empty()) {
        out.push_back(&g.gamma[l]);
        out.push_back(&g.beta[l]);
      }
    }
  };
  add(grads.encoder);
  add(grads.projector);
  if (grads.has_predictor) add(grads.predictor);
  return out;
}

}  // namespace

PretrainResult pretrain(const Cohort& cohort, const ImageStore& images,
                        const PretrainOptions& opts, const ValidateCallback& on_validate,
                        std::optional<TrainState> start, std::optional<long> stop_after) {
  opts.train.validate();
  opts.relation.validate();
  opts.augment.validate();
  const bool byol = is_byol_family(opts.method);
  const bool metadata = is_metadata_enhanced(opts.method);
  const std::string variant = variant_name(opts.method, opts.relation);

  PairIndex index;
  if (metadata) {
    index = build_pair_index(cohort, opts.relation);
  } else {
    index.config = opts.relation;
  }

  PretrainResult result;
  if (start) {
    result.state = std::move(*start);
  } else {
    result.state.student = make_model(opts.encoder, byol, opts.train.seed);
    if (byol) result.state.teacher = result.state.student;  // teacher starts as a copy
    result.state.moments.resize(model_tensors(result.state.student).size());
    result.state.next_step = 0;
  }
  TrainState& state = result.state;

  AdamConfig adam_cfg{opts.train.beta1, opts.train.beta2, opts.train.adam_epsilon,
                      opts.train.weight_decay};
  const SampleMode mode = metadata ? SampleMode::MetadataPairs : SampleMode::SelfPairs;
  const long last_step = stop_after ? std::min(*stop_after, opts.train.total_steps)
                                    : opts.train.total_steps;

  for (long step = state.next_step; step < last_step; ++step) {
    const uint64_t batch_seed = mix_seed(opts.train.seed, kBatchSeedTag, static_cast<uint64_t>(step));
    ContrastiveBatch batch = sample_batch(index, cohort, images, opts.train.batch_size,
                                          batch_seed, opts.augment, mode,
                                          opts.train.self_pair_fallback);
    const size_t B = batch.slots.size();
    const std::vector<double> input = flatten_views(batch);

    ForwardPass fwd;
    const std::vector<double> embeddings =
        mlp_forward(state.student.encoder, input, B, &fwd.encoder_cache);
    fwd.projections = mlp_forward(state.student.projector, embeddings, B, &fwd.projector_cache);
    for (double v : fwd.projections)
      if (!std::isfinite(v))
        throw std::runtime_error("pretrain: loss diverged at step " + std::to_string(step));

    double loss_value = 0.0;
    ModelGrads grads = make_model_grads(state.student);
    // Overflowing row norms surface as invalid_argument inside the losses;
    // in the training loop that means divergence, not misuse.
    auto diverged = [step](const char* detail) {
      return std::runtime_error("pretrain: loss diverged at step " + std::to_string(step) +
                                " (" + detail + ")");
    };

    if (!byol) {
      EmbeddingBlock z = to_block(fwd.projections, B);
      LossOutput loss;
      try {
        loss = opts.train.simclr_debiased
                   ? debiased_nt_xent(z, batch.mask, opts.train.temperature,
                                      opts.train.class_prior, opts.train.q_positives)
                   : nt_xent(z, batch.mask, opts.train.temperature);
      } catch (const std::invalid_argument& e) {
        throw diverged(e.what());
      }
      loss_value = loss.value;
      const std::vector<double> grad_h =
          mlp_backward(state.student.projector, fwd.projector_cache, loss.gradient.data,
                       grads.projector);
      mlp_backward(state.student.encoder, fwd.encoder_cache, grad_h, grads.encoder);
    } else {
      const bool use_predictor = state.student.predictor && !opts.train.byol_ablate_predictor;
      if (use_predictor) {
        fwd.predictions = mlp_forward(*state.student.predictor, fwd.projections, B,
                                      &fwd.predictor_cache);
      } else {
        fwd.predictions = fwd.projections;
      }

      // Targets: the partner slot's view through the teacher, no gradient.
      const ModelWeights& teacher = opts.train.byol_ablate_ema ? state.student : *state.teacher;
      const std::vector<double> teacher_h = mlp_forward(teacher.encoder, input, B);
      const std::vector<double> teacher_z = mlp_forward(teacher.projector, teacher_h, B);
      const size_t pd = state.student.projector.output_dim();
      EmbeddingBlock targets(B, pd);
      for (size_t s = 0; s < B; ++s) {
        const size_t partner = batch.slots[s].partner_slot;
        std::copy(teacher_z.begin() + partner * pd, teacher_z.begin() + (partner + 1) * pd,
                  targets.row(s));
      }

      LossOutput loss;
      try {
        loss = byol_loss(to_block(fwd.predictions, B), targets);
      } catch (const std::invalid_argument& e) {
        throw diverged(e.what());
      }
      loss_value = loss.value;
      std::vector<double> grad_z;
      if (use_predictor) {
        grad_z = mlp_backward(*state.student.predictor, fwd.predictor_cache,
                              loss.gradient.data, grads.predictor);
      } else {
        grad_z = loss.gradient.data;
      }
      const std::vector<double> grad_h =
          mlp_backward(state.student.projector, fwd.projector_cache, grad_z, grads.projector);
      mlp_backward(state.student.encoder, fwd.encoder_cache, grad_h, grads.encoder);
    }

    if (!std::isfinite(loss_value))
      throw std::runtime_error("pretrain: loss diverged at step " + std::to_string(step));

    const double lr = lr_at(step, opts.train);
    auto tensors = model_tensors(state.student);
    auto gradient_tensors = grad_tensors(grads);
    for (size_t t = 0; t < tensors.size(); ++t) {
      const bool is_predictor = tensors[t].name.rfind("predictor", 0) == 0;
      const double tensor_lr =
          is_predictor ? lr * opts.train.predictor_lr_multiplier : lr;
      adam_step(*tensors[t].data, *gradient_tensors[t], state.moments[t], step + 1,
                tensor_lr, adam_cfg, tensors[t].name);
    }

    if (byol && state.teacher) {
      const double tau = opts.train.byol_ablate_ema ? 0.0 : opts.train.ema_tau;
      auto teacher_tensors = model_tensors(*state.teacher);
      for (size_t t = 0; t < teacher_tensors.size(); ++t)
        ema_update(*teacher_tensors[t].data, *tensors[t].data, tau);
    }

    result.trace.push_back({step, lr, loss_value, variant});
    if (validation_cadence(step, opts.train.cadence)) {
      result.validation_steps.push_back(step);
      if (on_validate) on_validate(step, state);
    }
    state.next_step = step + 1;
  }
  return result;
}

void write_trace_file(const std::string& path, const std::vector<TraceRow>& trace,
                      const std::string& config_digest) {
  Table t;
  t.header = {"step", "lr", "loss", "variant"};
  for (const auto& row : trace)
    t.rows.push_back({std::to_string(row.step), fmt_double(row.lr), fmt_double(row.loss),
                      row.variant});
  write_table_file(path, t, {"config_digest=" + config_digest});
}

// ---- checkpoint serialization ----

namespace {

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
  put_u64(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& in) {
  const uint64_t n = get_u64(in);
  if (n > (1ull << 32)) throw std::runtime_error("checkpoint: tensor too large");
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  return v;
}

void put_sizes(std::ostream& out, const std::vector<size_t>& v) {
  put_u64(out, v.size());
  for (size_t x : v) put_u64(out, x);
}

std::vector<size_t> get_sizes(std::istream& in) {
  const uint64_t n = get_u64(in);
  if (n > 1024) throw std::runtime_error("checkpoint: bad width list");
  std::vector<size_t> v(n);
  for (auto& x : v) x = static_cast<size_t>(get_u64(in));
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const uint64_t n = get_u64(in);
  if (n > (1ull << 20)) throw std::runtime_error("checkpoint: bad string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

void put_mlp(std::ostream& out, const Mlp& mlp) {
  put_u64(out, mlp.layers.size());
  for (const auto& layer : mlp.layers) {
    put_u64(out, layer.in);
    put_u64(out, layer.out);
    put_u64(out, layer.batch_norm ? 1 : 0);
    put_doubles(out, layer.w);
    put_doubles(out, layer.b);
    if (layer.batch_norm) {
      put_doubles(out, layer.gamma);
      put_doubles(out, layer.beta);
    }
  }
}

Mlp get_mlp(std::istream& in) {
  Mlp mlp;
  const uint64_t layers = get_u64(in);
  if (layers > 64) throw std::runtime_error("checkpoint: bad layer count");
  for (uint64_t l = 0; l < layers; ++l) {
    Dense d;
    d.in = static_cast<size_t>(get_u64(in));
    d.out = static_cast<size_t>(get_u64(in));
    d.batch_norm = get_u64(in) != 0;
    d.w = get_doubles(in);
    d.b = get_doubles(in);
    if (d.batch_norm) {
      d.gamma = get_doubles(in);
      d.beta = get_doubles(in);
      if (d.gamma.size() != d.out || d.beta.size() != d.out)
        throw std::runtime_error("checkpoint: tensor shape mismatch");
    }
    if (d.w.size() != d.in * d.out || d.b.size() != d.out)
      throw std::runtime_error("checkpoint: tensor shape mismatch");
    mlp.layers.push_back(std::move(d));
  }
  return mlp;
}

void put_model(std::ostream& out, const ModelWeights& model) {
  put_u64(out, static_cast<uint64_t>(model.spec.input_height));
  put_u64(out, static_cast<uint64_t>(model.spec.input_width));
  put_sizes(out, model.spec.hidden);
  put_u64(out, model.spec.embedding_dim);
  put_sizes(out, model.spec.projector);
  put_sizes(out, model.spec.predictor);
  put_u64(out, model.spec.head_batch_norm ? 1 : 0);
  put_mlp(out, model.encoder);
  put_mlp(out, model.projector);
  put_u64(out, model.predictor ? 1 : 0);
  if (model.predictor) put_mlp(out, *model.predictor);
}

ModelWeights get_model(std::istream& in) {
  ModelWeights model;
  model.spec.input_height = static_cast<int>(get_u64(in));
  model.spec.input_width = static_cast<int>(get_u64(in));
  model.spec.hidden = get_sizes(in);
  model.spec.embedding_dim = static_cast<size_t>(get_u64(in));
  model.spec.projector = get_sizes(in);
  model.spec.predictor = get_sizes(in);
  model.spec.head_batch_norm = get_u64(in) != 0;
  model.encoder = get_mlp(in);
  model.projector = get_mlp(in);
  if (get_u64(in)) model.predictor = get_mlp(in);
  return model;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state, Method method,
                     const std::string& config_digest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kCheckpointMagic, 8);
  put_u64(out, static_cast<uint64_t>(method));
  put_string(out, config_digest);
  put_u64(out, static_cast<uint64_t>(state.next_step));
  put_model(out, state.student);
  put_u64(out, state.teacher ? 1 : 0);
  if (state.teacher) put_model(out, *state.teacher);
  put_u64(out, state.moments.size());
  for (const auto& m : state.moments) {
    put_doubles(out, m.m);
    put_doubles(out, m.v);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  Checkpoint ckpt;
  ckpt.method = static_cast<Method>(get_u64(in));
  ckpt.config_digest = get_string(in);
  ckpt.state.next_step = static_cast<long>(get_u64(in));
  ckpt.state.student = get_model(in);
  if (get_u64(in)) ckpt.state.teacher = get_model(in);
  const uint64_t n_moments = get_u64(in);
  if (n_moments > 4096) throw std::runtime_error("checkpoint: bad moment count");
  ckpt.state.moments.resize(n_moments);
  for (auto& m : ckpt.state.moments) {
    m.m = get_doubles(in);
    m.v = get_doubles(in);
  }
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  return ckpt;
}

double normalized_embedding_spread(const ModelWeights& model,
                                   const std::vector<GrayImage>& images) {
  if (images.empty()) throw std::invalid_argument("normalized_embedding_spread: no images");
  const size_t d = model.encoder.output_dim();
  const size_t n = images.size();
  std::vector<double> embeddings(n * d);
  for (size_t i = 0; i < n; ++i) {
    std::vector<double> h = encode(model, images[i]);
    double norm = 0.0;
    for (double v : h) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) norm = 1.0;
    for (size_t j = 0; j < d; ++j) embeddings[i * d + j] = h[j] / norm;
  }
  double spread = 0.0;
  for (size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += embeddings[i * d + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double delta = embeddings[i * d + j] - mean;
      var += delta * delta;
    }
    var /= static_cast<double>(n);
    spread += std::sqrt(var);
  }
  return spread / static_cast<double>(d);
}

}  // namespace melc
