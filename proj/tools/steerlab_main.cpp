// steerlab: train a toy conditional diffusion transformer over synthetic
// concept latents, localize functional cross-attention layers by K/V patching,
// and steer them with CAA or SAE feature directions.

#include "steerlab/acceptance.hpp"
#include "steerlab/commands.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

using namespace steerlab;

namespace {

struct GlobalArgs {
  std::string config_file;
  std::string store_root;
  std::vector<std::string> sets;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  std::string preset;

  ExperimentConfig resolve_config() const {
    ExperimentConfig cfg;
    if (!config_file.empty()) cfg = ExperimentConfig::load(config_file);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ConfigError("--set expects key=value, got: " + kv);
      cfg.set_path(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (workers) cfg.workers = *workers;
    if (!preset.empty()) {
      if (preset != "paper-grid") throw ConfigError("unknown preset: " + preset);
      cfg.steer.grid_preset = preset;
    }
    return cfg;
  }

  ArtifactStore resolve_store() const {
    std::string root = store_root;
    if (root.empty())
      if (const char* env = std::getenv("STEERLAB_STORE")) root = env;
    if (root.empty()) root = "steerlab-store";
    return ArtifactStore::open(root);
  }
};

void add_global_flags(CLI::App* app, GlobalArgs& g) {
  app->add_option("--config", g.config_file, "experiment config JSON file");
  app->add_option("--store", g.store_root, "artifact store root (default $STEERLAB_STORE)");
  app->add_option("--set", g.sets, "override a config key, dotted path: --set train.steps=500");
  app->add_option("--seed", g.seed, "override the experiment seed");
  app->add_option("--workers", g.workers, "worker threads (0 = hardware)");
  app->add_option("--preset", g.preset, "named preset, e.g. paper-grid");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"steerlab: localization and steering laboratory for a toy audio-style "
               "latent diffusion transformer"};
  app.require_subcommand(1);

  GlobalArgs g;

  auto* cmd_train = app.add_subcommand("train-model", "train the denoiser, write a checkpoint");
  add_global_flags(cmd_train, g);

  auto* cmd_trace = app.add_subcommand(
      "trace", "localize functional layers via K/V patching; impact matrix + heatmap");
  add_global_flags(cmd_trace, g);
  bool diagnostic = false;
  cmd_trace->add_flag("--diagnostic", diagnostic, "include the all-layers pseudo-row");

  auto* cmd_steer =
      app.add_subcommand("steer", "build steering vectors; optionally generate at alpha or sweep");
  add_global_flags(cmd_steer, g);
  std::string method = "caa", concept_name;
  double alpha_value = 0.0;
  bool has_alpha = false, sweep = false;
  cmd_steer->add_option("--method", method, "caa | sae (default caa)");
  cmd_steer->add_option("--concept", concept_name, "concept, e.g. tempo.fast or piano");
  auto* alpha_opt = cmd_steer->add_option("--alpha", alpha_value, "steering strength");
  cmd_steer->add_flag("--sweep", sweep, "sweep the alpha grid, write a curve CSV");

  auto* cmd_sae = app.add_subcommand("train-sae", "train the TopK SAE on the top layer");
  add_global_flags(cmd_sae, g);
  bool sae_sweep = false;
  cmd_sae->add_flag("--sweep", sae_sweep, "hyperparameter sweep over m x k before training");

  auto* cmd_eval = app.add_subcommand("eval", "steering sweeps under all layer policies");
  add_global_flags(cmd_eval, g);

  auto* cmd_report = app.add_subcommand("report", "combined markdown/HTML report");
  add_global_flags(cmd_report, g);

  auto* cmd_check = app.add_subcommand("check", "run the acceptance suite");
  add_global_flags(cmd_check, g);
  std::string check_workdir;
  cmd_check->add_option("--workdir", check_workdir, "scratch dir for the reproducibility runs");

  CLI11_PARSE(app, argc, argv);
  has_alpha = alpha_opt->count() > 0;

  return cmd::guard([&]() -> int {
    ExperimentConfig cfg = g.resolve_config();
    if (cmd_train->parsed()) {
      ArtifactStore store = g.resolve_store();
      cfg.save(store.root() / "config.json");
      return cmd::train_model_cmd(cfg, store);
    }
    if (cmd_trace->parsed()) {
      if (diagnostic) cfg.trace.diagnostic = true;
      ArtifactStore store = g.resolve_store();
      return cmd::trace_cmd(cfg, store);
    }
    if (cmd_steer->parsed()) {
      ArtifactStore store = g.resolve_store();
      if ((sweep || has_alpha) && concept_name.empty())
        throw ConfigError("--sweep/--alpha need --concept");
      return cmd::steer_cmd(cfg, store, method, concept_name,
                            has_alpha ? std::optional<double>(alpha_value) : std::nullopt, sweep);
    }
    if (cmd_sae->parsed()) {
      ArtifactStore store = g.resolve_store();
      return cmd::train_sae_cmd(cfg, store, sae_sweep);
    }
    if (cmd_eval->parsed()) {
      ArtifactStore store = g.resolve_store();
      return cmd::eval_cmd(cfg, store);
    }
    if (cmd_report->parsed()) {
      ArtifactStore store = g.resolve_store();
      return cmd::report_cmd(cfg, store);
    }
    if (cmd_check->parsed()) {
      acceptance::Options opts;
      opts.workers = cfg.workers;
      if (!check_workdir.empty()) opts.workdir = check_workdir;
      auto results = acceptance::run_all(cfg, opts, std::cout);
      return acceptance::all_passed(results) ? cmd::kOk : cmd::kAcceptanceFailure;
    }
    return 1;
  });
}
