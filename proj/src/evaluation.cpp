#include "melc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace melc {

std::vector<size_t> subset_sizes(size_t total_labelled, int count) {
  if (total_labelled < 20) throw std::invalid_argument("subset_sizes: need at least 20 labels");
  if (count < 1) throw std::invalid_argument("subset_sizes: count must be >= 1");
  if (count == 1) return {total_labelled};

  auto round_down = [](double raw) -> size_t {
    if (raw < 100.0) return static_cast<size_t>(std::floor(raw / 10.0)) * 10;
    return static_cast<size_t>(std::floor(raw / 100.0)) * 100;
  };

  const double base = 20.0;
  const double ratio = static_cast<double>(total_labelled) / base;
  std::vector<size_t> sizes;
  sizes.reserve(static_cast<size_t>(count));
  for (int k = 0; k < count; ++k) {
    if (k == count - 1) {
      sizes.push_back(total_labelled);  // the largest size is never rounded
      break;
    }
    const double raw = base * std::pow(ratio, static_cast<double>(k) / (count - 1));
    size_t v = round_down(raw);
    // keep strictly increasing when rounding collides
    while (!sizes.empty() && v <= sizes.back()) v += v < 100 ? 10 : 100;
    if (v >= total_labelled)
      throw std::invalid_argument("subset_sizes: count too large for total");
    sizes.push_back(v);
  }
  return sizes;
}

std::vector<size_t> stratified_subset(const std::vector<int>& class_labels, size_t size,
                                      uint64_t seed, bool* min_enforced) {
  if (min_enforced) *min_enforced = false;
  if (size == 0) throw std::invalid_argument("stratified_subset: size must be positive");
  if (size > class_labels.size())
    throw std::invalid_argument("stratified_subset: size exceeds population");

  std::map<int, std::vector<size_t>> members;
  for (size_t i = 0; i < class_labels.size(); ++i) members[class_labels[i]].push_back(i);

  const double total = static_cast<double>(class_labels.size());
  std::vector<int> class_ids;
  std::vector<size_t> quotas;
  std::vector<double> remainders;
  size_t assigned = 0;
  for (const auto& [cls, idx] : members) {
    const double exact = static_cast<double>(size) * static_cast<double>(idx.size()) / total;
    const size_t quota = static_cast<size_t>(std::floor(exact));
    class_ids.push_back(cls);
    quotas.push_back(quota);
    remainders.push_back(exact - static_cast<double>(quota));
    assigned += quota;
  }
  // Largest remainder, ties to the smaller class id.
  std::vector<size_t> order(class_ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return remainders[a] > remainders[b]; });
  for (size_t i = 0; assigned < size; ++i) {
    ++quotas[order[i % order.size()]];
    ++assigned;
  }
  // A class may not end up empty when the subset is large enough for one each.
  if (size >= class_ids.size()) {
    for (size_t c = 0; c < class_ids.size(); ++c) {
      if (quotas[c] > 0) continue;
      size_t donor = 0;
      for (size_t d = 1; d < quotas.size(); ++d)
        if (quotas[d] > quotas[donor]) donor = d;
      if (quotas[donor] <= 1) break;
      --quotas[donor];
      ++quotas[c];
      if (min_enforced) *min_enforced = true;
    }
  }

  std::vector<size_t> chosen;
  chosen.reserve(size);
  for (size_t c = 0; c < class_ids.size(); ++c) {
    std::vector<size_t> pool = members[class_ids[c]];
    const size_t quota = std::min(quotas[c], pool.size());
    Rng rng(mix_seed(seed, 0x57A7, static_cast<uint64_t>(class_ids[c])));
    rng.shuffle(pool);
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + quota);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<size_t> uniform_subset(size_t population, size_t size, uint64_t seed) {
  if (size > population) throw std::invalid_argument("uniform_subset: size exceeds population");
  std::vector<size_t> pool(population);
  std::iota(pool.begin(), pool.end(), size_t{0});
  Rng rng(mix_seed(seed, 0x57A8));
  rng.shuffle(pool);
  pool.resize(size);
  std::sort(pool.begin(), pool.end());
  return pool;
}

double scaled_lr(size_t subset_size) {
  constexpr double alpha = 5e-4;
  constexpr double intercept = 9e-4;
  constexpr double reference_batch = 400.0;
  if (subset_size >= 400) return alpha;
  const double m = static_cast<double>(subset_size);
  return intercept + (m / reference_batch) * (alpha - intercept);
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("auc: scores and labels must be nonempty and equal length");
  size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("auc: labels must be 0 or 1");
    positives += static_cast<size_t>(y);
  }
  const size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0)
    throw std::invalid_argument("auc: both classes must be present");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Average ranks over ties (Mann-Whitney with half credit for ties).
  std::vector<double> rank(scores.size(), 0.0);
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg_rank;
    i = j + 1;
  }
  double rank_sum = 0.0;
  for (size_t k = 0; k < scores.size(); ++k)
    if (labels[k] == 1) rank_sum += rank[k];
  const double u = rank_sum - static_cast<double>(positives) *
                                  (static_cast<double>(positives) + 1.0) / 2.0;
  return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

double mae(const std::vector<double>& predictions, const std::vector<double>& targets) {
  if (predictions.size() != targets.size() || predictions.empty())
    throw std::invalid_argument("mae: need equal-length nonempty vectors");
  double total = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i)
    total += std::fabs(predictions[i] - targets[i]);
  return total / static_cast<double>(predictions.size());
}

TaskKind task_kind_for(const std::string& task_name) {
  if (task_name == "stage" || task_name == "sex") return TaskKind::BinaryClassification;
  if (task_name == "age" || task_name == "acuity") return TaskKind::ScalarRegression;
  throw std::invalid_argument("unknown task '" + task_name +
                              "' (expected stage, sex, age or acuity; pass the kind explicitly)");
}

double null_performance(TaskKind kind, const std::vector<double>& train_targets,
                        const std::vector<double>& test_targets) {
  if (kind == TaskKind::BinaryClassification) return 0.5;
  if (train_targets.empty() || test_targets.empty())
    throw std::invalid_argument("null_performance: empty targets");
  const double mean = std::accumulate(train_targets.begin(), train_targets.end(), 0.0) /
                      static_cast<double>(train_targets.size());
  double total = 0.0;
  for (double t : test_targets) total += std::fabs(t - mean);
  return total / static_cast<double>(test_targets.size());
}

Split assign_split(const std::string& patient_id, const SplitConfig& cfg) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : patient_id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  const double u = static_cast<double>(mix_seed(cfg.seed, h) >> 11) * 0x1.0p-53;
  if (u < cfg.test_fraction) return Split::Test;
  if (u < cfg.test_fraction + cfg.val_fraction) return Split::Val;
  return Split::Train;
}

SplitIndices split_cohort(const Cohort& cohort, const SplitConfig& cfg,
                          const std::string& labelled_for_task) {
  SplitIndices out;
  for (size_t i = 0; i < cohort.size(); ++i) {
    const ScanRecord& r = cohort.record(i);
    if (!labelled_for_task.empty() && !r.label(labelled_for_task)) continue;
    switch (assign_split(r.patient_id, cfg)) {
      case Split::Train: out.train.push_back(i); break;
      case Split::Val: out.val.push_back(i); break;
      case Split::Test: out.test.push_back(i); break;
    }
  }
  return out;
}

// ---- finetuning ----

namespace {

// Deterministic evaluation view: the degenerate form of the training
// pipeline (central crop, then resize). Evaluating on the raw image instead
// would shift the input distribution relative to the augmented training
// views.
GrayImage eval_view(const GrayImage& image, const AugmentConfig& aug, size_t input_h,
                    size_t input_w) {
  GrayImage cropped = center_crop(image, std::min(aug.crop_height, image.height),
                                  std::min(aug.crop_width, image.width));
  return resize_bilinear(cropped, static_cast<int>(input_h), static_cast<int>(input_w));
}

struct LabelScaler {
  double lo = 0.0;
  double hi = 1.0;
  double to_unit(double y) const {
    if (hi == lo) return 0.0;
    return 2.0 * (y - lo) / (hi - lo) - 1.0;
  }
  double from_unit(double u) const {
    if (hi == lo) return lo;
    return (u + 1.0) * 0.5 * (hi - lo) + lo;
  }
};

double label_of(const Cohort& cohort, size_t record, const std::string& task) {
  auto v = cohort.record(record).label(task);
  if (!v) throw std::invalid_argument("record " + cohort.record(record).scan_id +
                                      " is unlabelled for task " + task);
  return *v;
}

struct HeadModel {
  Mlp encoder;
  Mlp head;  // single linear layer embedding_dim -> 1
};

std::vector<std::vector<double>*> head_model_tensors(HeadModel& model) {
  std::vector<std::vector<double>*> tensors;
  for (auto& layer : model.encoder.layers) {
    tensors.push_back(&layer.w);
    tensors.push_back(&layer.b);
  }
  for (auto& layer : model.head.layers) {
    tensors.push_back(&layer.w);
    tensors.push_back(&layer.b);
  }
  return tensors;
}

std::vector<double> head_forward(const HeadModel& model, const std::vector<double>& input,
                                 size_t batch, MlpCache* enc_cache, MlpCache* head_cache) {
  const std::vector<double> h = mlp_forward(model.encoder, input, batch, enc_cache);
  return mlp_forward(model.head, h, batch, head_cache);
}

}  // namespace

FinetuneResult attach_head_and_finetune(const ModelWeights& pretrained, TaskKind kind,
                                        const std::string& task, const Cohort& cohort,
                                        const ImageStore& images,
                                        const std::vector<size_t>& subset,
                                        const std::vector<size_t>& val_indices,
                                        const std::vector<size_t>& test_indices,
                                        const FinetuneConfig& cfg) {
  if (subset.empty()) throw std::invalid_argument("finetune: empty labelled subset");
  if (val_indices.empty() || test_indices.empty())
    throw std::invalid_argument("finetune: empty validation or test split");
  if (cfg.epochs < 1) throw std::invalid_argument("finetune: epochs must be >= 1");

  const size_t input_h = static_cast<size_t>(pretrained.spec.input_height);
  const size_t input_w = static_cast<size_t>(pretrained.spec.input_width);
  const size_t input_dim = pretrained.spec.input_dim();
  const size_t d = pretrained.spec.embedding_dim;

  std::vector<double> subset_targets;
  subset_targets.reserve(subset.size());
  for (size_t idx : subset) subset_targets.push_back(label_of(cohort, idx, task));

  LabelScaler scaler;
  if (kind == TaskKind::BinaryClassification) {
    bool has0 = false, has1 = false;
    for (double y : subset_targets) (y > 0.5 ? has1 : has0) = true;
    if (!has0 || !has1)
      throw std::invalid_argument("finetune: labelled subset contains a single class");
  } else {
    scaler.lo = *std::min_element(subset_targets.begin(), subset_targets.end());
    scaler.hi = *std::max_element(subset_targets.begin(), subset_targets.end());
  }

  HeadModel model;
  model.encoder = pretrained.encoder;
  model.head = make_mlp(d, {1});
  {
    Rng rng(mix_seed(cfg.seed, 0x4EAD));
    init_he(model.head, rng);
  }

  const double lr = cfg.learning_rate > 0 ? cfg.learning_rate : scaled_lr(subset.size());
  AdamConfig adam_cfg{cfg.beta1, cfg.beta2, cfg.adam_epsilon, cfg.weight_decay};
  auto tensors = head_model_tensors(model);
  std::vector<AdamMoments> moments(tensors.size());

  // Fixed capped validation subset, chosen once; for classification the cap
  // keeps the class mix so AUC stays defined.
  std::vector<size_t> val_used;
  if (kind == TaskKind::BinaryClassification &&
      val_indices.size() > cfg.max_val_examples) {
    std::vector<int> val_classes;
    val_classes.reserve(val_indices.size());
    for (size_t idx : val_indices)
      val_classes.push_back(label_of(cohort, idx, task) > 0.5 ? 1 : 0);
    for (size_t k :
         stratified_subset(val_classes, cfg.max_val_examples, mix_seed(cfg.seed, 0x7A11)))
      val_used.push_back(val_indices[k]);
  } else {
    val_used = val_indices;
    Rng rng(mix_seed(cfg.seed, 0x7A11));
    rng.shuffle(val_used);
    if (val_used.size() > cfg.max_val_examples) val_used.resize(cfg.max_val_examples);
  }

  auto evaluate = [&](const HeadModel& m, const std::vector<size_t>& indices) -> double {
    std::vector<double> outputs;
    std::vector<double> targets;
    std::vector<int> classes;
    outputs.reserve(indices.size());
    for (size_t idx : indices) {
      const GrayImage& img = images.at(cohort.record(idx).scan_id);
      const GrayImage view = eval_view(img, cfg.augment, input_h, input_w);
      MlpCache e, h;
      const std::vector<double> u = head_forward(m, view.values, 1, &e, &h);
      const double y = label_of(cohort, idx, task);
      if (kind == TaskKind::BinaryClassification) {
        outputs.push_back(1.0 / (1.0 + std::exp(-u[0])));
        classes.push_back(y > 0.5 ? 1 : 0);
      } else {
        outputs.push_back(scaler.from_unit(std::tanh(u[0])));
        targets.push_back(y);
      }
    }
    return kind == TaskKind::BinaryClassification ? auc(outputs, classes)
                                                  : mae(outputs, targets);
  };

  FinetuneResult result;
  HeadModel best = model;
  double best_score = kind == TaskKind::BinaryClassification
                          ? -std::numeric_limits<double>::infinity()
                          : std::numeric_limits<double>::infinity();
  const size_t batch_size = std::max<size_t>(1, std::min(cfg.batch_size, subset.size()));
  long adam_t = 0;
  uint64_t view_counter = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<size_t> order = subset;
    Rng rng(mix_seed(cfg.seed, 0xE90C, static_cast<uint64_t>(epoch)));
    rng.shuffle(order);

    for (size_t begin = 0; begin < order.size(); begin += batch_size) {
      const size_t b = std::min(batch_size, order.size() - begin);
      std::vector<double> input(b * input_dim);
      std::vector<double> y(b);
      for (size_t k = 0; k < b; ++k) {
        const size_t idx = order[begin + k];
        const GrayImage& img = images.at(cohort.record(idx).scan_id);
        const GrayImage view =
            finetune_augment(img, cfg.augment, mix_seed(cfg.seed, 0xF17E, view_counter++));
        if (view.size() != input_dim)
          throw std::invalid_argument("finetune: augmented view does not match encoder input");
        std::copy(view.values.begin(), view.values.end(), input.begin() + k * input_dim);
        y[k] = label_of(cohort, idx, task);
      }

      MlpCache enc_cache, head_cache;
      const std::vector<double> u = head_forward(model, input, b, &enc_cache, &head_cache);

      std::vector<double> grad_u(b);
      double loss = 0.0;
      for (size_t k = 0; k < b; ++k) {
        if (kind == TaskKind::BinaryClassification) {
          const double target = y[k] > 0.5 ? 1.0 : 0.0;
          const double p = 1.0 / (1.0 + std::exp(-u[k]));
          loss += -(target * std::log(std::max(p, 1e-12)) +
                    (1.0 - target) * std::log(std::max(1.0 - p, 1e-12)));
          grad_u[k] = (p - target) / static_cast<double>(b);
        } else {
          const double target = scaler.to_unit(y[k]);
          const double out = std::tanh(u[k]);
          const double err = out - target;
          loss += err * err;
          grad_u[k] = 2.0 * err * (1.0 - out * out) / static_cast<double>(b);
        }
      }
      loss /= static_cast<double>(b);
      if (!std::isfinite(loss))
        throw std::runtime_error("finetune: loss diverged in epoch " + std::to_string(epoch));

      MlpGrads head_grads = make_grads(model.head);
      MlpGrads enc_grads = make_grads(model.encoder);
      const std::vector<double> grad_h =
          mlp_backward(model.head, head_cache, grad_u, head_grads);
      mlp_backward(model.encoder, enc_cache, grad_h, enc_grads);

      ++adam_t;
      size_t t = 0;
      for (size_t l = 0; l < model.encoder.layers.size(); ++l) {
        adam_step(*tensors[t], enc_grads.w[l], moments[t], adam_t, lr, adam_cfg, "encoder.w");
        ++t;
        adam_step(*tensors[t], enc_grads.b[l], moments[t], adam_t, lr, adam_cfg, "encoder.b");
        ++t;
      }
      for (size_t l = 0; l < model.head.layers.size(); ++l) {
        adam_step(*tensors[t], head_grads.w[l], moments[t], adam_t, lr, adam_cfg, "head.w");
        ++t;
        adam_step(*tensors[t], head_grads.b[l], moments[t], adam_t, lr, adam_cfg, "head.b");
        ++t;
      }
    }

    const double score = evaluate(model, val_used);
    result.val_history.push_back(score);
    const bool better = kind == TaskKind::BinaryClassification ? score > best_score
                                                               : score < best_score;
    if (better) {
      best_score = score;
      best = model;
      result.best_epoch = epoch;
    }
  }

  result.test_performance = evaluate(best, test_indices);
  return result;
}

// ---- %GROW ----

void GrowInputs::validate() const {
  if (pretrained.empty() || pretrained.size() != baseline.size())
    throw std::invalid_argument("grow: P and R must be nonempty and equal length");
  if (!(epsilon > 0)) throw std::invalid_argument("grow: epsilon must be positive");
  if (!var_pretrained.empty() && var_pretrained.size() != pretrained.size())
    throw std::invalid_argument("grow: variance length mismatch");
  if (!var_baseline.empty() && var_baseline.size() != baseline.size())
    throw std::invalid_argument("grow: variance length mismatch");
}

double grow(const GrowInputs& inputs) {
  inputs.validate();
  const size_t M = inputs.pretrained.size();
  double total = 0.0;
  for (size_t i = 0; i < M; ++i) {
    const double numerator = inputs.pretrained[i] - inputs.null_performance;
    const double denominator =
        std::max(inputs.baseline[i] - inputs.null_performance, inputs.epsilon);
    total += numerator / denominator - 1.0;
  }
  return 100.0 / static_cast<double>(M) * total;
}

int grow_clamped_terms(const GrowInputs& inputs) {
  inputs.validate();
  int clamped = 0;
  for (size_t i = 0; i < inputs.baseline.size(); ++i)
    if (inputs.baseline[i] - inputs.null_performance < inputs.epsilon) ++clamped;
  return clamped;
}

double grow_std(const GrowInputs& inputs) {
  inputs.validate();
  const size_t M = inputs.pretrained.size();
  double total_var = 0.0;
  for (size_t i = 0; i < M; ++i) {
    const double var_x = inputs.var_pretrained.empty() ? 0.0 : inputs.var_pretrained[i];
    const bool clamped = inputs.baseline[i] - inputs.null_performance < inputs.epsilon;
    const double var_y = clamped || inputs.var_baseline.empty() ? 0.0 : inputs.var_baseline[i];
    const double mu_x = inputs.pretrained[i] - inputs.null_performance;
    const double mu_y = clamped ? inputs.epsilon : inputs.baseline[i] - inputs.null_performance;
    double term;
    if (mu_x == 0.0) {
      term = var_x / (mu_y * mu_y);
    } else {
      const double ratio = mu_x / mu_y;
      term = ratio * ratio * (var_x / (mu_x * mu_x) + var_y / (mu_y * mu_y));
    }
    total_var += term;
  }
  const double scale = 100.0 / static_cast<double>(M);
  return std::sqrt(scale * scale * total_var);
}

// ---- results tables ----

Table probe_table(const std::vector<ProbeRow>& rows) {
  Table t;
  t.header = {"variant", "task", "subset_size", "seed", "metric", "value"};
  for (const auto& r : rows)
    t.rows.push_back({r.variant, r.task, std::to_string(r.subset_size),
                      std::to_string(r.seed), r.metric, fmt_double(r.value)});
  return t;
}

std::vector<ProbeRow> parse_probe_table(const Table& table) {
  const int cv = table.require_column("variant");
  const int ct = table.require_column("task");
  const int cs = table.require_column("subset_size");
  const int cd = table.require_column("seed");
  const int cm = table.require_column("metric");
  const int cl = table.require_column("value");
  std::vector<ProbeRow> rows;
  rows.reserve(table.rows.size());
  for (const auto& fields : table.rows) {
    ProbeRow r;
    r.variant = fields[cv];
    r.task = fields[ct];
    bool ok1 = false, ok2 = false, ok3 = false;
    r.subset_size = static_cast<size_t>(parse_long(fields[cs], ok1));
    r.seed = static_cast<uint64_t>(parse_long(fields[cd], ok2));
    r.metric = fields[cm];
    r.value = parse_double(fields[cl], ok3);
    if (!ok1 || !ok2 || !ok3)
      throw std::runtime_error("bad probe table row for variant " + r.variant);
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

struct SeriesKey {
  std::string task;
  size_t subset_size;
  bool operator<(const SeriesKey& o) const {
    if (task != o.task) return task < o.task;
    return subset_size < o.subset_size;
  }
};

struct Aggregated {
  double mean = 0.0;
  double var_of_mean = 0.0;
};

Aggregated aggregate(const std::vector<double>& values) {
  Aggregated a;
  const size_t n = values.size();
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    const double sample_var = ss / static_cast<double>(n - 1);
    a.var_of_mean = sample_var / static_cast<double>(n);
  }
  return a;
}

}  // namespace

std::vector<GrowReportRow> compute_grow_report(const std::vector<ProbeRow>& pretrained,
                                               const std::vector<ProbeRow>& baseline,
                                               double epsilon) {
  std::map<std::string, double> nulls;           // task -> null performance
  std::map<std::string, std::string> metrics;    // task -> auc|mae
  std::map<SeriesKey, std::vector<double>> base_values;
  for (const auto& r : baseline) {
    if (r.metric == "null") {
      nulls[r.task] = r.value;
      continue;
    }
    metrics[r.task] = r.metric;
    base_values[{r.task, r.subset_size}].push_back(r.value);
  }

  std::map<std::string, std::map<SeriesKey, std::vector<double>>> variant_values;
  for (const auto& r : pretrained) {
    if (r.metric == "null") {
      nulls.emplace(r.task, r.value);
      continue;
    }
    auto it = metrics.find(r.task);
    if (it == metrics.end()) metrics[r.task] = r.metric;
    else if (it->second != r.metric)
      throw std::runtime_error("metric mismatch between tables for task " + r.task);
    variant_values[r.variant][{r.task, r.subset_size}].push_back(r.value);
  }

  std::vector<GrowReportRow> report;
  for (const auto& [variant, series] : variant_values) {
    std::set<std::string> tasks;
    for (const auto& [key, values] : series) tasks.insert(key.task);
    for (const auto& task : tasks) {
      std::vector<size_t> sizes;
      for (const auto& [key, values] : series)
        if (key.task == task) sizes.push_back(key.subset_size);
      std::sort(sizes.begin(), sizes.end());

      // Both tables must cover the same (task, size) grid.
      std::string missing;
      for (size_t s : sizes)
        if (!base_values.count({task, s}))
          missing += " baseline:" + task + "/" + std::to_string(s);
      for (const auto& [key, values] : base_values)
        if (key.task == task &&
            !std::count(sizes.begin(), sizes.end(), key.subset_size))
          missing += " pretrained:" + task + "/" + std::to_string(key.subset_size);
      if (!missing.empty())
        throw std::runtime_error("subset grids differ:" + missing);

      const std::string metric = metrics.at(task);
      double null_value;
      if (nulls.count(task)) {
        null_value = nulls.at(task);
      } else if (metric == "auc") {
        null_value = 0.5;
      } else {
        throw std::runtime_error("no null-performance row for regression task " + task);
      }

      GrowInputs inputs;
      inputs.epsilon = epsilon;
      const double sign = metric == "mae" ? -1.0 : 1.0;  // regression: higher is better
      inputs.null_performance = sign * null_value;
      for (size_t s : sizes) {
        const Aggregated p = aggregate(series.at({task, s}));
        const Aggregated r = aggregate(base_values.at({task, s}));
        inputs.pretrained.push_back(sign * p.mean);
        inputs.baseline.push_back(sign * r.mean);
        inputs.var_pretrained.push_back(p.var_of_mean);
        inputs.var_baseline.push_back(r.var_of_mean);
      }

      GrowReportRow row;
      row.variant = variant;
      row.task = task;
      row.grow = grow(inputs);
      row.grow_std = grow_std(inputs);
      row.clamped_terms = grow_clamped_terms(inputs);
      row.subset_count = sizes.size();
      report.push_back(std::move(row));
    }
  }
  return report;
}

Table grow_report_table(const std::vector<GrowReportRow>& rows) {
  Table t;
  t.header = {"variant", "task", "grow", "grow_std", "clamped_terms", "subset_count"};
  for (const auto& r : rows)
    t.rows.push_back({r.variant, r.task, fmt_double(r.grow), fmt_double(r.grow_std),
                      std::to_string(r.clamped_terms), std::to_string(r.subset_count)});
  return t;
}

}  // namespace melc
