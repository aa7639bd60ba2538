#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssev/harness.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string seed;
  std::string out;
  std::string guard;
  std::string scenario;
  std::string shield_mode;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "TOML config file");
  cmd->add_option("--set", args.overrides, "Override a config key, e.g. --set run.phi_steps=500");
  cmd->add_option("--seed", args.seed, "Master seed (u64)");
  cmd->add_option("--out", args.out, "Output directory");
  cmd->add_option("--guard", args.guard, "Guard mode: adaptive | fixed:<Tc> | off");
  cmd->add_option("--scenario", args.scenario, "Scenario: a | b");
  cmd->add_option("--shield-mode", args.shield_mode, "Shield aggregation: conservative | paper");
}

ssev::config::RunConfig resolve(const CommonArgs& args) {
  std::vector<std::string> overrides = args.overrides;
  if (!args.seed.empty()) overrides.push_back("run.seed=" + args.seed);
  if (!args.out.empty()) overrides.push_back("run.out=\"" + args.out + "\"");
  if (!args.guard.empty()) overrides.push_back("run.guard=\"" + args.guard + "\"");
  if (!args.scenario.empty()) overrides.push_back("run.scenario=\"" + args.scenario + "\"");
  if (!args.shield_mode.empty())
    overrides.push_back("run.shield_mode=\"" + args.shield_mode + "\"");
  return ssev::config::load_run_config(args.config_path, overrides);
}

void print_metrics(const ssev::harness::MetricsReport& m) {
  std::printf("stage=%s episodes=%d collision_rate=%.3f%% avg_speed=%.3f m/s "
              "intervention_ratio=%.3f%% avg_return=%.3f\n",
              m.stage.c_str(), m.episodes, m.collision_rate, m.avg_speed,
              m.intervention_ratio, m.avg_return);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe self-evolution driving stack: risk-aware shielded SAC on a three-lane "
               "highway simulator"};
  app.require_subcommand(1);

  CommonArgs targs, rqargs, oargs, eargs, pargs, rargs;

  CLI::App* train_phi = app.add_subcommand("train-phi", "Train the driving agent (scenario sim)");
  add_common(train_phi, targs);

  CLI::App* ctr = app.add_subcommand(
      "collect-train-rq", "Collect the behavior-cloning dataset and train the risk model");
  add_common(ctr, rqargs);
  std::string phi_ckpt;
  ctr->add_option("--phi-checkpoint", phi_ckpt, "Driving-agent checkpoint")->required();

  CLI::App* train_omega =
      app.add_subcommand("train-omega", "Train the deployment agent under the safety guard");
  add_common(train_omega, oargs);
  std::string rq_ckpt_train;
  train_omega->add_option("--rq-checkpoint", rq_ckpt_train, "Risk-model checkpoint");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Run evaluation episodes and export metrics");
  add_common(evaluate, eargs);
  std::string omega_ckpt, rq_ckpt_eval;
  evaluate->add_option("--omega-checkpoint", omega_ckpt, "Deployment-agent checkpoint")
      ->required();
  evaluate->add_option("--rq-checkpoint", rq_ckpt_eval, "Risk-model checkpoint");

  CLI::App* replay = app.add_subcommand("replay-trace", "Recompute metrics from trace files");
  add_common(replay, rargs);
  std::vector<std::string> trace_paths;
  replay->add_option("traces", trace_paths, "Trace .jsonl files or a directory")->required();

  CLI::App* plot = app.add_subcommand("plot-trace", "Render a spatio-temporal SVG from a trace");
  add_common(plot, pargs);
  std::string plot_in, plot_out;
  plot->add_option("trace", plot_in, "Trace .jsonl file")->required();
  plot->add_option("--svg", plot_out, "Output SVG path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_phi->parsed()) {
      const auto cfg = resolve(targs);
      const auto summary = ssev::harness::cmd_train_phi(cfg);
      std::printf("checkpoint: %s\n", summary.checkpoint_path.c_str());
      print_metrics(summary.metrics);
    } else if (ctr->parsed()) {
      const auto cfg = resolve(rqargs);
      const auto summary = ssev::harness::cmd_collect_train_rq(cfg, phi_ckpt);
      std::printf("dataset: %s (%zu records)\ncheckpoint: %s\nval_mse: %.6f\n",
                  summary.dataset_path.c_str(), summary.records,
                  summary.checkpoint_path.c_str(), summary.val_mse);
    } else if (train_omega->parsed()) {
      const auto cfg = resolve(oargs);
      const auto summary = ssev::harness::cmd_train_omega(cfg, rq_ckpt_train);
      std::printf("checkpoint: %s\n", summary.checkpoint_path.c_str());
      print_metrics(summary.metrics);
    } else if (evaluate->parsed()) {
      const auto cfg = resolve(eargs);
      const auto metrics = ssev::harness::cmd_evaluate(cfg, omega_ckpt, rq_ckpt_eval);
      print_metrics(metrics);
    } else if (replay->parsed()) {
      const auto cfg = resolve(rargs);
      std::vector<std::string> files;
      for (const std::string& p : trace_paths) {
        if (std::filesystem::is_directory(p)) {
          for (const auto& entry : std::filesystem::directory_iterator(p))
            if (entry.path().extension() == ".jsonl") files.push_back(entry.path().string());
        } else {
          files.push_back(p);
        }
      }
      std::sort(files.begin(), files.end());
      const auto metrics = ssev::harness::replay_traces(cfg, files);
      std::filesystem::create_directories(cfg.out_dir);
      ssev::harness::write_metrics_json(cfg.out_dir + "/replay_metrics.json", metrics);
      print_metrics(metrics);
    } else if (plot->parsed()) {
      const auto tr = ssev::trace::read_trace_jsonl(plot_in);
      ssev::trace::write_trace_svg(plot_out, tr);
      std::printf("wrote %s\n", plot_out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
