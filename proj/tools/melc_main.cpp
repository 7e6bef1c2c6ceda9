// melc: metadata-enhanced contrastive pretraining for longitudinal imaging
// cohorts. Subcommands: synth, pairs, pretrain, probe, grow.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "melc/config.hpp"
#include "melc/csv.hpp"
#include "melc/evaluation.hpp"
#include "melc/relations.hpp"
#include "melc/synth.hpp"
#include "melc/trainer.hpp"

namespace fs = std::filesystem;
using namespace melc;

namespace {

// Exit codes: 2 usage (CLI11), 3 validation/contract, 4 i/o, 5 divergence.
constexpr int kExitValidation = 3;
constexpr int kExitIo = 4;
constexpr int kExitDiverged = 5;

struct CommonOptions {
  std::string preset = "desk";
  std::string config_path;
};

RunConfig resolve_config(const CommonOptions& common) {
  RunConfig cfg = preset_by_name(common.preset);
  if (!common.config_path.empty()) cfg = load_config_overrides(cfg, common.config_path);
  return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& common) {
  cmd->add_option("--preset", common.preset, "settings preset: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--config", common.config_path, "JSON config overriding the preset");
}

RelationConfig relation_from_flags(const RunConfig& cfg, double delta_min, double delta_max,
                                   bool unbounded) {
  RelationConfig rel = cfg.relation;
  if (delta_min >= 0) rel.delta_min_years = delta_min;
  if (unbounded) rel.delta_max_years.reset();
  else if (delta_max > 0) rel.delta_max_years = delta_max;
  rel.validate();
  return rel;
}

int run_synth(const CommonOptions& common, uint64_t seed, const std::string& out_dir,
              int patients, const std::string& image_format) {
  RunConfig cfg = resolve_config(common);
  if (patients > 0) cfg.synth.patients = patients;
  cfg.train.seed = seed;
  const std::string digest = config_digest(cfg);

  SynthOutput out = generate_cohort(cfg.synth, seed);
  fs::create_directories(fs::path(out_dir) / "images");

  std::vector<ScanRecord> records = out.cohort.records();
  if (image_format == "png")
    for (auto& r : records)
      r.image_ref = "images/" + r.scan_id + ".png";
  Cohort cohort(std::move(records));
  for (const auto& r : cohort.records())
    save_image((fs::path(out_dir) / r.image_ref).string(), out.images.at(r.scan_id));

  const std::string manifest_path = (fs::path(out_dir) / "manifest.csv").string();
  std::ofstream manifest(manifest_path);
  if (!manifest) throw std::runtime_error("cannot open for writing: " + manifest_path);
  manifest << "# config_digest=" << digest << "\n";
  emit_manifest(cohort, manifest);
  if (!manifest) throw std::runtime_error("write failed: " + manifest_path);

  std::cout << "config_digest=" << digest << "\n"
            << "manifest=" << manifest_path << "\n"
            << "scans=" << cohort.size() << "\n"
            << "eyes=" << cohort.eye_index().size() << "\n";
  return 0;
}

int run_pairs(const CommonOptions& common, const std::string& manifest, double delta_min,
              double delta_max, bool unbounded, const std::string& out_prefix) {
  RunConfig cfg = resolve_config(common);
  const RelationConfig rel = relation_from_flags(cfg, delta_min, delta_max, unbounded);
  cfg.relation = rel;
  const std::string digest = config_digest(cfg);

  Cohort cohort = ingest_manifest_file(manifest);
  PairIndex index = build_pair_index(cohort, rel);
  PairStats stats = pair_stats(index, cohort);

  if (!out_prefix.empty()) {
    std::ofstream pairs_out(out_prefix + ".pairs.csv");
    std::ofstream orphans_out(out_prefix + ".orphans.txt");
    std::ofstream stats_out(out_prefix + ".stats.csv");
    if (!pairs_out || !orphans_out || !stats_out)
      throw std::runtime_error("cannot open outputs with prefix: " + out_prefix);
    pairs_out << "# config_digest=" << digest << "\n";
    save_pair_index(index, cohort, pairs_out, orphans_out);
    stats_out << "# config_digest=" << digest << "\n";
    save_pair_stats(stats, stats_out);
  }
  std::cout << "config_digest=" << digest << "\n";
  save_pair_stats(stats, std::cout);
  return 0;
}

int run_pretrain(const CommonOptions& common, const std::string& manifest,
                 const std::string& method_text, double delta_min, double delta_max,
                 bool unbounded, uint64_t seed, long steps, const std::string& out_ckpt,
                 const std::string& trace_path, const std::string& snapshot_dir) {
  RunConfig cfg = resolve_config(common);
  const auto method = parse_method(method_text);
  if (!method) throw std::invalid_argument("unknown method: " + method_text);
  cfg.method = *method;
  cfg.relation = relation_from_flags(cfg, delta_min, delta_max, unbounded);
  cfg.train.seed = seed;
  if (steps > 0) cfg.train.total_steps = steps;
  const RunConfig resolved = cfg.resolved();
  const std::string digest = config_digest(cfg);

  Cohort cohort = ingest_manifest_file(manifest);
  ImageStore images = load_images(cohort, fs::path(manifest).parent_path().string());

  PretrainOptions opts;
  opts.method = resolved.method;
  opts.relation = resolved.relation;
  opts.encoder = resolved.encoder;
  opts.train = resolved.train;
  opts.augment = resolved.augment;

  ValidateCallback on_validate;
  if (!snapshot_dir.empty()) {
    fs::create_directories(snapshot_dir);
    on_validate = [&](long step, const TrainState& state) {
      save_checkpoint((fs::path(snapshot_dir) / ("ckpt-" + std::to_string(step) + ".bin")).string(),
                      state, resolved.method, digest);
    };
  }

  PretrainResult result = pretrain(cohort, images, opts, on_validate);
  save_checkpoint(out_ckpt, result.state, resolved.method, digest);
  if (!trace_path.empty()) write_trace_file(trace_path, result.trace, digest);

  std::cout << "config_digest=" << digest << "\n"
            << "variant=" << variant_name(resolved.method, resolved.relation) << "\n"
            << "final_loss=" << fmt_double(result.trace.back().loss) << "\n"
            << "checkpoint=" << out_ckpt << "\n";
  return 0;
}

int run_probe(const CommonOptions& common, const std::string& manifest,
              const std::string& checkpoint_path, bool random_init, const std::string& task,
              const std::string& kind_text, const std::string& variant_label,
              const std::vector<uint64_t>& seeds, int subset_count,
              const std::string& out_path) {
  RunConfig cfg = resolve_config(common);
  if (subset_count > 0) cfg.subset_count = subset_count;
  const RunConfig resolved = cfg.resolved();
  const std::string digest = config_digest(cfg);

  if (random_init == !checkpoint_path.empty())
    throw std::invalid_argument("pass exactly one of --checkpoint or --random-init");

  const TaskKind kind = kind_text.empty()
                            ? task_kind_for(task)
                            : (kind_text == "classification" ? TaskKind::BinaryClassification
                                                             : TaskKind::ScalarRegression);

  Cohort cohort = ingest_manifest_file(manifest);
  ImageStore images = load_images(cohort, fs::path(manifest).parent_path().string());
  SplitIndices split = split_cohort(cohort, resolved.split, task);
  if (split.train.size() < 20)
    throw std::invalid_argument("fewer than 20 labelled training records for task " + task);

  ModelWeights model;
  std::string variant = variant_label;
  if (random_init) {
    model = make_model(resolved.encoder, false, resolved.train.seed);
    if (variant.empty()) variant = "baseline";
  } else {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    model = std::move(ckpt.state.student);
    if (variant.empty())
      variant = method_name(ckpt.method);
  }

  const auto sizes = subset_sizes(split.train.size(), resolved.subset_count);

  std::vector<ProbeRow> rows;
  for (uint64_t seed : seeds) {
    for (size_t size : sizes) {
      std::vector<size_t> subset;
      if (kind == TaskKind::BinaryClassification) {
        std::vector<int> classes;
        classes.reserve(split.train.size());
        for (size_t idx : split.train)
          classes.push_back(cohort.record(idx).label(task).value() > 0.5 ? 1 : 0);
        for (size_t k : stratified_subset(classes, size, mix_seed(seed, 0x5135, size)))
          subset.push_back(split.train[k]);
      } else {
        for (size_t k : uniform_subset(split.train.size(), size, mix_seed(seed, 0x5135, size)))
          subset.push_back(split.train[k]);
      }
      FinetuneConfig fcfg = resolved.finetune;
      fcfg.seed = mix_seed(seed, 0xF1E7, size);
      fcfg.augment = resolved.augment;
      FinetuneResult result = attach_head_and_finetune(model, kind, task, cohort, images,
                                                       subset, split.val, split.test, fcfg);
      rows.push_back({variant, task, size, seed,
                      kind == TaskKind::BinaryClassification ? "auc" : "mae",
                      result.test_performance});
    }
  }

  // Null-model reference for the task (data-dependent for regression).
  std::vector<double> train_targets, test_targets;
  for (size_t idx : split.train) train_targets.push_back(cohort.record(idx).label(task).value());
  for (size_t idx : split.test) test_targets.push_back(cohort.record(idx).label(task).value());
  rows.push_back({variant, task, 0, 0, "null",
                  null_performance(kind, train_targets, test_targets)});

  write_table_file(out_path, probe_table(rows), {"config_digest=" + digest});
  std::cout << "config_digest=" << digest << "\n"
            << "results=" << out_path << "\n"
            << "rows=" << rows.size() << "\n";
  return 0;
}

int run_grow(const CommonOptions& common, const std::string& pretrained_path,
             const std::string& baseline_path, const std::string& task,
             const std::string& out_path) {
  RunConfig cfg = resolve_config(common);
  const std::string digest = config_digest(cfg);

  auto load_rows = [&](const std::string& path) {
    Table t = read_table_file(path);
    auto rows = parse_probe_table(t);
    if (!task.empty()) {
      std::vector<ProbeRow> filtered;
      for (auto& r : rows)
        if (r.task == task) filtered.push_back(std::move(r));
      return filtered;
    }
    return rows;
  };
  const auto pretrained = load_rows(pretrained_path);
  const auto baseline = load_rows(baseline_path);
  const auto report = compute_grow_report(pretrained, baseline, cfg.grow_epsilon);

  Table t = grow_report_table(report);
  if (!out_path.empty()) write_table_file(out_path, t, {"config_digest=" + digest});
  std::cout << "config_digest=" << digest << "\n";
  write_table(std::cout, t);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metadata-enhanced contrastive pretraining for longitudinal imaging"};
  app.require_subcommand(1);

  // synth
  CommonOptions synth_common;
  uint64_t synth_seed = 1;
  std::string synth_out = "synth_out";
  int synth_patients = 0;
  std::string synth_format = "f32";
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic longitudinal cohort");
  add_common(synth_cmd, synth_common);
  synth_cmd->add_option("--seed", synth_seed, "generation seed");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--patients", synth_patients, "override patient count");
  synth_cmd->add_option("--image-format", synth_format, "f32 or png")
      ->check(CLI::IsMember({"f32", "png"}));

  // pairs
  CommonOptions pairs_common;
  std::string pairs_manifest;
  double pairs_delta_min = -1, pairs_delta_max = -1;
  bool pairs_unbounded = false;
  std::string pairs_out;
  auto* pairs_cmd = app.add_subcommand("pairs", "build the positive-pair index and stats");
  add_common(pairs_cmd, pairs_common);
  pairs_cmd->add_option("--manifest", pairs_manifest, "cohort manifest")->required();
  pairs_cmd->add_option("--delta-min", pairs_delta_min, "minimum time gap in years");
  pairs_cmd->add_option("--delta-max", pairs_delta_max, "maximum time gap in years");
  pairs_cmd->add_flag("--unbounded", pairs_unbounded, "no upper time limit");
  pairs_cmd->add_option("--out", pairs_out, "output prefix (.pairs.csv, .orphans.txt, .stats.csv)");

  // pretrain
  CommonOptions pre_common;
  std::string pre_manifest, pre_method = "simclr_me", pre_ckpt = "checkpoint.bin";
  std::string pre_trace, pre_snapshots;
  double pre_delta_min = -1, pre_delta_max = -1;
  bool pre_unbounded = false;
  uint64_t pre_seed = 1;
  long pre_steps = 0;
  auto* pre_cmd = app.add_subcommand("pretrain", "run contrastive pretraining");
  add_common(pre_cmd, pre_common);
  pre_cmd->add_option("--manifest", pre_manifest, "cohort manifest")->required();
  pre_cmd->add_option("--method", pre_method, "simclr | simclr_me | byol | byol_me");
  pre_cmd->add_option("--delta-min", pre_delta_min, "minimum time gap in years");
  pre_cmd->add_option("--delta-max", pre_delta_max, "maximum time gap in years");
  pre_cmd->add_flag("--unbounded", pre_unbounded, "no upper time limit");
  pre_cmd->add_option("--seed", pre_seed, "training seed");
  pre_cmd->add_option("--steps", pre_steps, "override total steps");
  pre_cmd->add_option("--out", pre_ckpt, "checkpoint path");
  pre_cmd->add_option("--trace", pre_trace, "loss trace csv path");
  pre_cmd->add_option("--snapshots", pre_snapshots,
                      "directory for validation-cadence checkpoints");

  // probe
  CommonOptions probe_common;
  std::string probe_manifest, probe_ckpt, probe_task = "stage", probe_kind, probe_label;
  std::string probe_out = "results.csv";
  bool probe_random = false;
  std::vector<uint64_t> probe_seeds{1};
  int probe_subsets = 0;
  auto* probe_cmd = app.add_subcommand("probe", "finetune on labelled subsets and report metrics");
  add_common(probe_cmd, probe_common);
  probe_cmd->add_option("--manifest", probe_manifest, "cohort manifest")->required();
  probe_cmd->add_option("--checkpoint", probe_ckpt, "pretrained checkpoint");
  probe_cmd->add_flag("--random-init", probe_random, "probe a randomly initialised encoder");
  probe_cmd->add_option("--task", probe_task, "label task name (stage, age, sex, acuity)");
  probe_cmd->add_option("--task-kind", probe_kind, "classification or regression")
      ->check(CLI::IsMember({"classification", "regression", ""}));
  probe_cmd->add_option("--variant-label", probe_label, "variant name in the results table");
  probe_cmd->add_option("--seeds", probe_seeds, "finetuning seeds");
  probe_cmd->add_option("--subset-count", probe_subsets, "number of labelled subset sizes");
  probe_cmd->add_option("--out", probe_out, "results csv path");

  // grow
  CommonOptions grow_common;
  std::string grow_pre, grow_base, grow_task, grow_out;
  auto* grow_cmd = app.add_subcommand("grow", "aggregate results into %GROW scores");
  add_common(grow_cmd, grow_common);
  grow_cmd->add_option("--pretrained", grow_pre, "pretrained results csv")->required();
  grow_cmd->add_option("--baseline", grow_base, "baseline results csv")->required();
  grow_cmd->add_option("--task", grow_task, "restrict to one task");
  grow_cmd->add_option("--out", grow_out, "grow report csv path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed())
      return run_synth(synth_common, synth_seed, synth_out, synth_patients, synth_format);
    if (pairs_cmd->parsed())
      return run_pairs(pairs_common, pairs_manifest, pairs_delta_min, pairs_delta_max,
                       pairs_unbounded, pairs_out);
    if (pre_cmd->parsed())
      return run_pretrain(pre_common, pre_manifest, pre_method, pre_delta_min, pre_delta_max,
                          pre_unbounded, pre_seed, pre_steps, pre_ckpt, pre_trace,
                          pre_snapshots);
    if (probe_cmd->parsed())
      return run_probe(probe_common, probe_manifest, probe_ckpt, probe_random, probe_task,
                       probe_kind, probe_label, probe_seeds, probe_subsets, probe_out);
    if (grow_cmd->parsed())
      return run_grow(grow_common, grow_pre, grow_base, grow_task, grow_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error[validation]: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    if (what.find("diverged") != std::string::npos) {
      std::cerr << "error[diverged]: " << what << "\n";
      return kExitDiverged;
    }
    std::cerr << "error[io]: " << what << "\n";
    return kExitIo;
  }
  return 0;
}
