// Command-line front end for the CoPA pipeline: synth, render-cache,
// pretrain, finetune, eval, predict, crossval. Exit codes: 0 success,
// 2 configuration error (with the offending field), 1 runtime failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "copa/config.hpp"
#include "copa/errors.hpp"
#include "copa/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config JSON file");
  cmd->add_option("--seed", args.seed, "override the experiment seed");
  cmd->add_option("--out", args.out, "override the output directory");
  cmd->add_option("--override", args.overrides,
                  "dotted-key override, e.g. pretrain.batch_size=16 (repeatable)");
}

copa::ExperimentConfig resolve_config(const CommonArgs& args) {
  copa::ExperimentConfig cfg = args.config_path.empty()
                                   ? copa::ExperimentConfig::desk()
                                   : copa::load_experiment_config(args.config_path);
  if (!args.overrides.empty()) cfg = copa::apply_overrides(cfg, args.overrides);
  if (args.seed) cfg.seed = *args.seed;
  if (!args.out.empty()) cfg.output_dir = args.out;
  copa::resolve_seeds(cfg);
  copa::validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CoPA: contrastive pre-training and semantic-guided fusion for "
               "no-reference point cloud quality assessment"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "synthesize a distorted dataset with a manifest");
  copa::SynthOptions synth_opt;
  std::vector<std::string> synth_refs;
  synth->add_option("--refs", synth_refs, "reference PLY files (at least 2)");
  synth->add_option("--shapes", synth_opt.generate_shapes,
                    "generate this many synthetic reference shapes instead");
  synth->add_option("--points", synth_opt.points_per_cloud, "points per generated shape");
  synth->add_option("--kinds", synth_opt.kinds, "number of distortion kinds (1-4)");
  synth->add_option("--levels", synth_opt.levels, "severity levels per kind (1-7)");
  synth->add_flag("!--no-mos", synth_opt.pseudo_mos, "omit pseudo-MOS labels");
  synth->add_option("--seed", synth_opt.seed, "synthesis seed");
  synth->add_option("--out", synth_opt.output_dir, "dataset output directory");

  CommonArgs cache_args, pre_args, fine_args, eval_args, predict_args, cross_args;

  auto* cache_cmd = app.add_subcommand("render-cache", "pre-render every training image to disk");
  add_common(cache_cmd, cache_args);

  auto* pretrain_cmd = app.add_subcommand("pretrain", "contrastive pre-training stage");
  add_common(pretrain_cmd, pre_args);

  auto* finetune_cmd = app.add_subcommand("finetune", "quality-regression fine-tuning stage");
  add_common(finetune_cmd, fine_args);
  std::string finetune_from;
  finetune_cmd->add_option("--from", finetune_from, "pretrain checkpoint to initialize from");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the manifest");
  add_common(eval_cmd, eval_args);
  std::string eval_ckpt;
  bool eval_oracle = false;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "finetune checkpoint");
  eval_cmd->add_flag("--oracle", eval_oracle,
                     "score rows with their stored MOS (protocol self-test)");

  auto* predict_cmd = app.add_subcommand("predict", "score one PLY file");
  add_common(predict_cmd, predict_args);
  std::string predict_ckpt, predict_ply;
  predict_cmd->add_option("--checkpoint", predict_ckpt, "finetune checkpoint")->required();
  predict_cmd->add_option("ply", predict_ply, "point cloud to score")->required();

  auto* crossval_cmd = app.add_subcommand("crossval", "content-disjoint k-fold cross-validation");
  add_common(crossval_cmd, cross_args);
  std::string crossval_from;
  crossval_cmd->add_option("--from", crossval_from, "pretrain checkpoint to initialize folds from");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      synth_opt.reference_paths = synth_refs;
      const copa::SynthResult r = copa::run_synth(synth_opt);
      std::cout << "wrote " << r.rows << " distorted clouds over " << r.contents
                << " contents\nmanifest: " << r.manifest_path << "\n";
    } else if (cache_cmd->parsed()) {
      const copa::ExperimentConfig cfg = resolve_config(cache_args);
      const copa::RenderCacheResult r = copa::run_render_cache(cfg);
      std::cout << "rendered " << r.rendered << " images (" << r.reused << " already cached)\n";
    } else if (pretrain_cmd->parsed()) {
      const copa::ExperimentConfig cfg = resolve_config(pre_args);
      std::cout << "config " << copa::config_hash(cfg) << " seed " << cfg.seed << "\n";
      const copa::PretrainSummary r = copa::run_pretrain(cfg);
      std::cout << "pretrained " << r.epochs << " epochs, final mean loss " << r.final_mean_loss
                << "\ncheckpoint: " << r.checkpoint_path << "\nlog: " << r.log_path << "\n";
    } else if (finetune_cmd->parsed()) {
      const copa::ExperimentConfig cfg = resolve_config(fine_args);
      std::cout << "config " << copa::config_hash(cfg) << " seed " << cfg.seed << "\n";
      const copa::FinetuneSummary r = copa::run_finetune(cfg, finetune_from);
      std::cout << "finetuned " << r.epochs << " epochs, best epoch " << r.best_epoch
                << " loss " << r.best_loss << "\ncheckpoint: " << r.checkpoint_path
                << "\nlog: " << r.log_path << "\n";
    } else if (eval_cmd->parsed()) {
      const copa::ExperimentConfig cfg = resolve_config(eval_args);
      if (!eval_oracle && eval_ckpt.empty())
        throw copa::UsageError("eval: need --checkpoint or --oracle");
      const copa::EvalSummary r = copa::run_eval(cfg, eval_ckpt, eval_oracle);
      std::cout << "srocc " << r.result.srocc << "  plcc " << r.result.plcc << "  rmse "
                << r.result.rmse << "  n " << r.result.n_samples
                << (r.result.degenerate ? "  (degenerate)" : "") << "\nreport: " << r.report_path
                << "\n";
    } else if (predict_cmd->parsed()) {
      const copa::ExperimentConfig cfg = resolve_config(predict_args);
      std::cout << copa::run_predict(cfg, predict_ckpt, predict_ply) << "\n";
    } else if (crossval_cmd->parsed()) {
      const copa::ExperimentConfig cfg = resolve_config(cross_args);
      std::cout << "config " << copa::config_hash(cfg) << " seed " << cfg.seed << "\n";
      const copa::CrossvalSummary r = copa::run_crossval(cfg, crossval_from);
      for (std::size_t f = 0; f < r.result.folds.size(); ++f)
        std::cout << "fold " << f << ": srocc " << r.result.folds[f].srocc << "  plcc "
                  << r.result.folds[f].plcc << "  rmse " << r.result.folds[f].rmse << "\n";
      std::cout << "mean: srocc " << r.result.mean_srocc << "  plcc " << r.result.mean_plcc
                << "  rmse " << r.result.mean_rmse << "\nreport: " << r.report_path << "\n";
    }
  } catch (const copa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
