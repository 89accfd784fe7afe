#pragma once

// End-to-end drivers behind the CLI subcommands: dataset synthesis, cache
// warming, the two training stages, evaluation, prediction, and the k-fold
// cross-validation harness. Every driver writes its artifacts under the
// configured output directory and stamps reports with the config hash and
// seed.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "copa/config.hpp"
#include "copa/dataset.hpp"
#include "copa/distortion.hpp"
#include "copa/finetune.hpp"
#include "copa/manifest.hpp"
#include "copa/pretrain.hpp"
#include "copa/protocol.hpp"
#include "copa/synthetic.hpp"

namespace copa {

// ---- synth ----

struct SynthOptions {
  std::vector<std::string> reference_paths;  // existing reference PLYs
  int generate_shapes = 0;                   // or synthesize this many shapes
  std::size_t points_per_cloud = 4096;
  int kinds = kDistortionKindCount;
  int levels = kDistortionLevels;
  bool pseudo_mos = true;
  bool binary_ply = true;
  std::uint64_t seed = 0;
  std::string output_dir = "out/dataset";
};

struct SynthResult {
  std::string manifest_path;
  DatasetManifest manifest;
  int contents = 0;
  int rows = 0;
};

// mos = 1 + 4 (L - level)/(L - 1): best level maps to 5, worst to 1,
// strictly monotone in level.
inline double pseudo_mos(int level, int levels) {
  if (levels < 2) throw ConfigError("pseudo_mos: need at least 2 levels");
  if (level < 1 || level > levels) throw ConfigError("pseudo_mos: level outside [1,levels]");
  return 1.0 + 4.0 * static_cast<double>(levels - level) / static_cast<double>(levels - 1);
}

inline SynthResult run_synth(const SynthOptions& opt) {
  if (opt.kinds < 1 || opt.kinds > kDistortionKindCount)
    throw ConfigError("synth: kinds outside [1," + std::to_string(kDistortionKindCount) + "]");
  if (opt.levels < 1 || opt.levels > kDistortionLevels)
    throw ConfigError("synth: levels outside [1," + std::to_string(kDistortionLevels) + "]");
  if (opt.pseudo_mos && opt.levels < 2)
    throw ConfigError("synth: pseudo-MOS needs at least 2 levels");
  if (opt.reference_paths.empty() && opt.generate_shapes < 2)
    throw ConfigError("synth: need at least 2 reference clouds (paths or generated shapes)");
  if (!opt.reference_paths.empty() && opt.reference_paths.size() < 2)
    throw ConfigError("synth: need at least 2 reference clouds");

  const std::filesystem::path out(opt.output_dir);
  std::filesystem::create_directories(out / "dist");

  std::vector<PointCloud> references;
  if (opt.reference_paths.empty()) {
    std::filesystem::create_directories(out / "refs");
    for (int i = 0; i < opt.generate_shapes; ++i) {
      const ShapeKind kind = static_cast<ShapeKind>(i % kShapeKindCount);
      PointCloud cloud = make_shape_cloud(kind, opt.points_per_cloud,
                                          derive_seed(opt.seed, tag("shape"), i));
      const std::string rel = "refs/ref_" + std::to_string(i) + ".ply";
      save_ply(cloud, (out / rel).string(), opt.binary_ply);
      references.push_back(std::move(cloud));
    }
  } else {
    for (const auto& p : opt.reference_paths) references.push_back(load_ply(p));
  }

  SynthResult result;
  result.contents = static_cast<int>(references.size());
  for (int c = 0; c < result.contents; ++c) {
    for (int k = 0; k < opt.kinds; ++k) {
      for (int level = 1; level <= opt.levels; ++level) {
        DistortionSpec spec;
        spec.kind = static_cast<DistortionKind>(k);
        spec.level = level;
        spec.seed = derive_seed(opt.seed, tag("synth"), c);
        const PointCloud distorted = synth_distort(references[static_cast<std::size_t>(c)], spec);
        const std::string rel = "dist/c" + std::to_string(c) + "_d" + std::to_string(k) + "_l" +
                                std::to_string(level) + ".ply";
        save_ply(distorted, (out / rel).string(), opt.binary_ply);
        ManifestEntry e;
        e.path = rel;
        e.content_id = c;
        e.distortion_id = k;
        e.level = level;
        if (opt.pseudo_mos) e.mos = pseudo_mos(level, opt.levels);
        result.manifest.entries.push_back(std::move(e));
        ++result.rows;
      }
    }
  }
  result.manifest_path = (out / "manifest.csv").string();
  write_manifest(result.manifest, result.manifest_path);
  return result;
}

// ---- shared runner plumbing ----

namespace detail {

inline std::string pretrain_manifest_path(const ExperimentConfig& cfg) {
  if (!cfg.pretrain_manifest_path.empty()) return cfg.pretrain_manifest_path;
  if (cfg.manifest_path.empty()) throw ConfigError("config: manifest path is empty");
  return cfg.manifest_path;
}

inline std::string manifest_base_dir(const std::string& manifest_path) {
  return std::filesystem::path(manifest_path).parent_path().string();
}

inline void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

inline nlohmann::json run_stamp(const ExperimentConfig& cfg, const char* stage) {
  return {{"stage", stage}, {"config_hash", config_hash(cfg)}, {"seed", cfg.seed}};
}

}  // namespace detail

// ---- render-cache ----

struct RenderCacheResult {
  std::size_t rendered = 0;
  std::size_t reused = 0;
};

// Warms the on-disk cache with every image the two training stages will
// request: per-row rotation-slot renders and the six axis views.
inline RenderCacheResult run_render_cache(const ExperimentConfig& cfg) {
  validate(cfg);
  if (cfg.cache_dir.empty())
    throw ConfigError("render-cache: cache_dir must be set for a disk cache");
  RenderCache cache(cfg.cache_dir);
  RenderCacheResult result;

  const auto warm = [&](const DatasetManifest& manifest, const std::string& base,
                        bool rotations, bool axis_views) {
    CloudStore clouds(base);
    for (const auto& e : manifest.entries) {
      const PointCloud& cloud = clouds.get(e.path);
      if (rotations) {
        for (int r = 0; r < cfg.pretrain.rotations_per_cloud; ++r)
          cache.get(cloud,
                    random_rotation(derive_seed(cfg.pretrain.seed, tag("rot"), e.content_id, r)),
                    cfg.render);
      }
      if (axis_views) {
        for (int v = 1; v <= kNumViews; ++v) cache.get(cloud, view_rotation(v), cfg.render);
      }
    }
  };

  const std::string pre_path = detail::pretrain_manifest_path(cfg);
  const DatasetManifest pre_manifest = load_manifest(pre_path);
  warm(pre_manifest, detail::manifest_base_dir(pre_path), true, false);
  if (!cfg.manifest_path.empty()) {
    const DatasetManifest fine_manifest = load_manifest(cfg.manifest_path);
    warm(fine_manifest, detail::manifest_base_dir(cfg.manifest_path), false, true);
  }
  result.rendered = cache.misses();
  result.reused = cache.hits();
  return result;
}

// ---- pretrain ----

template <class T>
struct PretrainRun {
  PretrainState<T> state;
  std::vector<PretrainEpochStats> epochs;
};

inline nlohmann::json pretrain_epoch_json(const PretrainEpochStats& s) {
  return {{"epoch", s.epoch},
          {"lr", s.learning_rate},
          {"steps", s.steps},
          {"mean_loss", s.mean_loss},
          {"mean_distortion_loss", s.mean_distortion_loss},
          {"mean_content_loss", s.mean_content_loss},
          {"step_loss", s.step_loss}};
}

template <class T>
PretrainRun<T> pretrain_full(const ExperimentConfig& cfg, const DatasetManifest& manifest,
                             CloudStore& clouds, RenderCache& cache,
                             std::ostream* log = nullptr) {
  PretrainData data{&manifest, &clouds, &cache, cfg.render};
  PretrainRun<T> run{init_pretrain_state<T>(cfg.encoder, cfg.pretrain), {}};
  for (int e = 0; e < cfg.pretrain.epochs; ++e) {
    PretrainEpochStats stats = pretrain_epoch(run.state, data, cfg.pretrain);
    if (log) *log << pretrain_epoch_json(stats).dump() << "\n" << std::flush;
    run.epochs.push_back(std::move(stats));
  }
  return run;
}

struct PretrainSummary {
  std::string checkpoint_path;
  std::string log_path;
  int epochs = 0;
  double final_mean_loss = 0.0;
};

template <class T>
PretrainSummary run_pretrain_t(const ExperimentConfig& cfg) {
  validate(cfg);
  std::filesystem::create_directories(cfg.output_dir);
  const std::string pre_path = detail::pretrain_manifest_path(cfg);
  const DatasetManifest manifest = load_manifest(pre_path);
  CloudStore clouds(detail::manifest_base_dir(pre_path));
  RenderCache cache(cfg.cache_dir);

  PretrainSummary summary;
  summary.log_path = (std::filesystem::path(cfg.output_dir) / "pretrain_log.jsonl").string();
  std::ofstream log(summary.log_path);
  if (!log) throw IoError("cannot open " + summary.log_path + " for writing");
  log << detail::run_stamp(cfg, "pretrain").dump() << "\n";

  PretrainRun<T> run = pretrain_full<T>(cfg, manifest, clouds, cache, &log);
  summary.checkpoint_path = (std::filesystem::path(cfg.output_dir) / "pretrain.ckpt").string();
  save_pretrain_checkpoint(run.state, cfg.pretrain, summary.checkpoint_path);
  summary.epochs = static_cast<int>(run.epochs.size());
  if (!run.epochs.empty()) summary.final_mean_loss = run.epochs.back().mean_loss;
  return summary;
}

inline PretrainSummary run_pretrain(const ExperimentConfig& cfg) {
  return cfg.precision == "float32" ? run_pretrain_t<float>(cfg) : run_pretrain_t<double>(cfg);
}

// ---- finetune ----

template <class T>
struct FinetuneRun {
  FinetuneModel<T> best_model;
  int best_epoch = -1;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<FinetuneEpochStats> epochs;
};

inline nlohmann::json finetune_epoch_json(const FinetuneEpochStats& s) {
  return {{"epoch", s.epoch},
          {"lr", s.learning_rate},
          {"mean_loss", s.mean_loss},
          {"mean_mse", s.mean_mse},
          {"mean_rank", s.mean_rank},
          {"step_loss", s.step_loss}};
}

inline std::vector<std::size_t> rows_for_contents(const DatasetManifest& manifest,
                                                  const std::vector<int>& contents) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    if (std::find(contents.begin(), contents.end(), manifest.entries[i].content_id) !=
        contents.end())
      rows.push_back(i);
  return rows;
}

inline std::vector<std::size_t> all_rows(const DatasetManifest& manifest) {
  std::vector<std::size_t> rows(manifest.entries.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

// Fine-tunes on the given manifest rows, tracking the model snapshot with
// the lowest epoch-mean training loss. seed_salt separates fold models.
template <class T>
FinetuneRun<T> finetune_full(const ExperimentConfig& cfg, const DatasetManifest& manifest,
                             const std::vector<std::size_t>& rows, CloudStore& clouds,
                             RenderCache& cache, const PretrainState<T>* pretrained,
                             std::uint64_t seed_salt = 0, std::ostream* log = nullptr) {
  FinetuneModel<T> model = init_finetune_model<T>(
      cfg.encoder, cfg.fusion, cfg.head, derive_seed(cfg.seed, tag("model"), seed_salt));
  if (pretrained) attach_pretrained(model, *pretrained);

  const std::vector<SampleFeatures<T>> samples =
      prepare_finetune_dataset(manifest, rows, clouds, cache, cfg.render, model);

  FinetuneConfig fine = cfg.finetune;
  fine.seed = derive_seed(cfg.finetune.seed, tag("fold"), seed_salt);
  FinetuneState<T> state(std::move(model), fine);

  FinetuneRun<T> run;
  for (int e = 0; e < fine.epochs; ++e) {
    FinetuneEpochStats stats = finetune_epoch(state, samples, fine);
    if (log) *log << finetune_epoch_json(stats).dump() << "\n" << std::flush;
    if (stats.mean_loss < run.best_loss) {
      run.best_loss = stats.mean_loss;
      run.best_epoch = stats.epoch;
      run.best_model = state.model;
    }
    run.epochs.push_back(std::move(stats));
  }
  if (run.best_epoch < 0) run.best_model = state.model;  // zero-epoch run
  return run;
}

template <class T>
std::vector<double> predict_rows(const FinetuneModel<T>& model, const DatasetManifest& manifest,
                                 const std::vector<std::size_t>& rows, CloudStore& clouds,
                                 RenderCache& cache, const RenderConfig& render) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const std::size_t row : rows) {
    const ManifestEntry& e = manifest.entries.at(row);
    out.push_back(predict_score(model, cache, clouds.get(e.path), render));
  }
  return out;
}

struct FinetuneSummary {
  std::string checkpoint_path;
  std::string log_path;
  int epochs = 0;
  int best_epoch = -1;
  double best_loss = 0.0;
};

template <class T>
FinetuneSummary run_finetune_t(const ExperimentConfig& cfg,
                               const std::string& pretrain_checkpoint) {
  validate(cfg);
  if (cfg.manifest_path.empty()) throw ConfigError("config: manifest path is empty");
  std::filesystem::create_directories(cfg.output_dir);
  const DatasetManifest manifest = load_manifest(cfg.manifest_path);
  CloudStore clouds(detail::manifest_base_dir(cfg.manifest_path));
  RenderCache cache(cfg.cache_dir);

  PretrainState<T>* pretrained_ptr = nullptr;
  std::unique_ptr<LoadedPretrain<T>> loaded;
  if (!pretrain_checkpoint.empty()) {
    loaded = std::make_unique<LoadedPretrain<T>>(load_pretrain_checkpoint<T>(pretrain_checkpoint));
    pretrained_ptr = &loaded->state;
  }

  FinetuneSummary summary;
  summary.log_path = (std::filesystem::path(cfg.output_dir) / "finetune_log.jsonl").string();
  std::ofstream log(summary.log_path);
  if (!log) throw IoError("cannot open " + summary.log_path + " for writing");
  log << detail::run_stamp(cfg, "finetune").dump() << "\n";

  FinetuneRun<T> run = finetune_full<T>(cfg, manifest, all_rows(manifest), clouds, cache,
                                        pretrained_ptr, 0, &log);
  summary.checkpoint_path = (std::filesystem::path(cfg.output_dir) / "finetune.ckpt").string();
  save_finetune_checkpoint(run.best_model, cfg.finetune, summary.checkpoint_path);
  summary.epochs = static_cast<int>(run.epochs.size());
  summary.best_epoch = run.best_epoch;
  summary.best_loss = run.best_loss;
  return summary;
}

inline FinetuneSummary run_finetune(const ExperimentConfig& cfg,
                                    const std::string& pretrain_checkpoint) {
  return cfg.precision == "float32" ? run_finetune_t<float>(cfg, pretrain_checkpoint)
                                    : run_finetune_t<double>(cfg, pretrain_checkpoint);
}

// ---- eval ----

inline nlohmann::json eval_result_json(const EvalResult& r) {
  return {{"srocc", r.srocc},
          {"plcc", r.plcc},
          {"rmse", r.rmse},
          {"n_samples", r.n_samples},
          {"logistic_params", r.logistic.beta},
          {"logistic_converged", r.logistic_converged},
          {"degenerate", r.degenerate}};
}

// Predictor signature used by eval so tests can inject oracles.
using Predictor = std::function<double(const ManifestEntry&, const PointCloud&)>;

struct EvalSummary {
  EvalResult result;
  std::string report_path;
};

inline EvalSummary run_eval_with(const ExperimentConfig& cfg, const DatasetManifest& manifest,
                                 const Predictor& predictor) {
  if (!manifest.all_have_mos()) throw DatasetError("eval: manifest has rows without mos");
  std::filesystem::create_directories(cfg.output_dir);
  CloudStore clouds(detail::manifest_base_dir(cfg.manifest_path));
  std::vector<double> predictions, targets;
  for (const auto& e : manifest.entries) {
    predictions.push_back(predictor(e, clouds.get(e.path)));
    targets.push_back(*e.mos);
  }
  EvalSummary summary;
  summary.result = evaluate(predictions, targets);
  summary.report_path = (std::filesystem::path(cfg.output_dir) / "eval_report.json").string();
  nlohmann::json report = detail::run_stamp(cfg, "eval");
  report["result"] = eval_result_json(summary.result);
  detail::write_json(report, summary.report_path);
  return summary;
}

template <class T>
EvalSummary run_eval_t(const ExperimentConfig& cfg, const std::string& finetune_checkpoint) {
  validate(cfg);
  if (cfg.manifest_path.empty()) throw ConfigError("config: manifest path is empty");
  const DatasetManifest manifest = load_manifest(cfg.manifest_path);
  LoadedFinetune<T> loaded = load_finetune_checkpoint<T>(finetune_checkpoint);
  RenderCache cache(cfg.cache_dir);
  Predictor predictor = [&](const ManifestEntry&, const PointCloud& cloud) {
    return predict_score(loaded.model, cache, cloud, cfg.render);
  };
  return run_eval_with(cfg, manifest, predictor);
}

// oracle = true scores every row with its stored MOS; a protocol self-test.
inline EvalSummary run_eval(const ExperimentConfig& cfg, const std::string& finetune_checkpoint,
                            bool oracle = false) {
  if (oracle) {
    validate(cfg);
    if (cfg.manifest_path.empty()) throw ConfigError("config: manifest path is empty");
    const DatasetManifest manifest = load_manifest(cfg.manifest_path);
    return run_eval_with(cfg, manifest,
                         [](const ManifestEntry& e, const PointCloud&) { return *e.mos; });
  }
  return cfg.precision == "float32" ? run_eval_t<float>(cfg, finetune_checkpoint)
                                    : run_eval_t<double>(cfg, finetune_checkpoint);
}

// ---- predict ----

template <class T>
double run_predict_t(const ExperimentConfig& cfg, const std::string& finetune_checkpoint,
                     const std::string& ply_path) {
  LoadedFinetune<T> loaded = load_finetune_checkpoint<T>(finetune_checkpoint);
  RenderCache cache(cfg.cache_dir);
  return predict_score(loaded.model, cache, load_ply(ply_path), cfg.render);
}

inline double run_predict(const ExperimentConfig& cfg, const std::string& finetune_checkpoint,
                          const std::string& ply_path) {
  validate(cfg);
  return cfg.precision == "float32" ? run_predict_t<float>(cfg, finetune_checkpoint, ply_path)
                                    : run_predict_t<double>(cfg, finetune_checkpoint, ply_path);
}

// ---- crossval ----

struct CrossvalSummary {
  CrossvalResult result;
  std::vector<FoldSplit> folds;
  std::string report_path;
};

inline nlohmann::json crossval_report_json(const ExperimentConfig& cfg,
                                           const CrossvalSummary& summary) {
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t f = 0; f < summary.result.folds.size(); ++f) {
    nlohmann::json fold = eval_result_json(summary.result.folds[f]);
    fold["fold"] = summary.folds[f].fold_index;
    fold["test_contents"] = summary.folds[f].test_contents;
    folds.push_back(std::move(fold));
  }
  nlohmann::json report = detail::run_stamp(cfg, "crossval");
  report["folds"] = std::move(folds);
  report["mean"] = {{"srocc", summary.result.mean_srocc},
                    {"plcc", summary.result.mean_plcc},
                    {"rmse", summary.result.mean_rmse}};
  report["total_samples"] = summary.result.total_samples;
  return report;
}

template <class T>
CrossvalSummary run_crossval_t(const ExperimentConfig& cfg,
                               const std::string& pretrain_checkpoint) {
  validate(cfg);
  if (cfg.manifest_path.empty()) throw ConfigError("config: manifest path is empty");
  std::filesystem::create_directories(cfg.output_dir);
  const DatasetManifest manifest = load_manifest(cfg.manifest_path);
  if (!manifest.all_have_mos()) throw DatasetError("crossval: manifest has rows without mos");
  CloudStore clouds(detail::manifest_base_dir(cfg.manifest_path));
  RenderCache cache(cfg.cache_dir);

  PretrainState<T>* pretrained_ptr = nullptr;
  std::unique_ptr<LoadedPretrain<T>> loaded;
  if (!pretrain_checkpoint.empty()) {
    loaded = std::make_unique<LoadedPretrain<T>>(load_pretrain_checkpoint<T>(pretrain_checkpoint));
    pretrained_ptr = &loaded->state;
  }

  CrossvalSummary summary;
  summary.folds = kfold_split(manifest.content_ids(), cfg.folds, cfg.train_ratio, cfg.test_ratio,
                              derive_seed(cfg.seed, tag("protocol")));

  std::vector<EvalResult> fold_results;
  for (const FoldSplit& fold : summary.folds) {
    const std::vector<std::size_t> train_rows = rows_for_contents(manifest, fold.train_contents);
    const std::vector<std::size_t> test_rows = rows_for_contents(manifest, fold.test_contents);
    const std::string log_path =
        (std::filesystem::path(cfg.output_dir) /
         ("finetune_fold" + std::to_string(fold.fold_index) + ".jsonl"))
            .string();
    std::ofstream log(log_path);
    log << detail::run_stamp(cfg, "crossval-finetune").dump() << "\n";
    FinetuneRun<T> run =
        finetune_full<T>(cfg, manifest, train_rows, clouds, cache, pretrained_ptr,
                         static_cast<std::uint64_t>(fold.fold_index) + 1, &log);
    std::vector<double> predictions = predict_rows(run.best_model, manifest, test_rows, clouds,
                                                   cache, cfg.render);
    std::vector<double> targets;
    for (const std::size_t row : test_rows) targets.push_back(*manifest.entries[row].mos);
    fold_results.push_back(evaluate(predictions, targets));
  }
  summary.result = summarize_folds(std::move(fold_results));
  summary.report_path = (std::filesystem::path(cfg.output_dir) / "crossval_report.json").string();
  detail::write_json(crossval_report_json(cfg, summary), summary.report_path);
  return summary;
}

inline CrossvalSummary run_crossval(const ExperimentConfig& cfg,
                                    const std::string& pretrain_checkpoint) {
  return cfg.precision == "float32" ? run_crossval_t<float>(cfg, pretrain_checkpoint)
                                    : run_crossval_t<double>(cfg, pretrain_checkpoint);
}

}  // namespace copa
