#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ssev/agent.hpp"
#include "ssev/config.hpp"
#include "ssev/guard.hpp"
#include "ssev/rq.hpp"
#include "ssev/trace.hpp"

namespace ssev::harness {

struct MetricsReport {
  double collision_rate = 0.0;      // % of episodes
  double avg_speed = 0.0;           // mean ego v_s over all steps, m/s
  double intervention_ratio = 0.0;  // % of control steps with the guard active
  double avg_return = 0.0;          // mean episode return
  int episodes = 0;
  std::string stage = "A";  // T = training, A = application
  int collisions = 0;
  int preceding_gap_collisions = 0;
  int side_swipe_collisions = 0;
  int rear_end_collisions = 0;
  int pedestrian_collisions = 0;
  long total_steps = 0;
};

void write_metrics_json(const std::string& path, const MetricsReport& m);
MetricsReport read_metrics_json(const std::string& path);

enum class CollisionKind { none, preceding_gap, side_swipe, rear_end, pedestrian };

// Geometry-based tag for the first collision contact of an episode.
CollisionKind classify_collision(const sim::WorldState& world);

// ---- checkpoints ----

void save_sac_checkpoint(const std::string& path, const agent::SacNets& nets,
                         const std::string& which);
agent::SacNets load_sac_checkpoint(const std::string& path);
void save_rq_checkpoint(const std::string& path, const rq::RqModel& model);
rq::RqModel load_rq_checkpoint(const std::string& path);

// ---- episode execution ----

struct EpisodeOutcome {
  bool collided = false;
  CollisionKind kind = CollisionKind::none;
  bool reached_end = false;
  int steps = 0;
  double speed_sum = 0.0;
  double episode_return = 0.0;
  int gamma_steps = 0;
};

// One deployment-agent episode under the configured guard; deterministic
// policy unless stochastic is requested. Optionally fills a trace.
EpisodeOutcome run_omega_episode(const agent::SacNets& nets, const rq::RqModel* rq_model,
                                 const config::RunConfig& cfg, std::uint64_t episode_seed,
                                 bool stochastic, Rng* action_rng,
                                 trace::EpisodeTrace* out_trace);

// Same episode loop with an arbitrary action source (e.g. a random policy).
using OmegaPolicy = std::function<agent::ActionOmega(const sim::Observation&, Rng&)>;
EpisodeOutcome run_omega_episode_with_policy(const OmegaPolicy& policy,
                                             const rq::RqModel* rq_model,
                                             const config::RunConfig& cfg,
                                             std::uint64_t episode_seed, Rng* action_rng,
                                             trace::EpisodeTrace* out_trace);

// ---- pipeline commands ----

struct TrainCurveRow {
  long step = 0;
  int episode = 0;
  double episode_return = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;
};

struct TrainSummary {
  std::vector<TrainCurveRow> rows;
  MetricsReport metrics;  // stage "T"
  std::vector<std::pair<long, double>> intervention_windows;  // (window end step, ratio %)
  std::string checkpoint_path;
  std::string curve_path;
};

TrainSummary cmd_train_phi(const config::RunConfig& cfg);
TrainSummary cmd_train_omega(const config::RunConfig& cfg, const std::string& rq_ckpt_path);

struct RqSummary {
  double val_mse = 0.0;
  size_t records = 0;
  std::vector<double> epoch_loss;
  std::string dataset_path;
  std::string checkpoint_path;
};

RqSummary cmd_collect_train_rq(const config::RunConfig& cfg, const std::string& phi_ckpt_path);

MetricsReport cmd_evaluate(const config::RunConfig& cfg, const std::string& omega_ckpt_path,
                           const std::string& rq_ckpt_path);

// Recomputes the metrics report purely from trace files.
MetricsReport replay_traces(const config::RunConfig& cfg,
                            const std::vector<std::string>& trace_paths);

}  // namespace ssev::harness
