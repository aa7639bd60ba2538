#include "ssev/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ssev/checkpoint.hpp"

namespace ssev::harness {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

}  // namespace

void write_metrics_json(const std::string& path, const MetricsReport& m) {
  json j;
  j["collision_rate"] = m.collision_rate;
  j["avg_speed"] = m.avg_speed;
  j["intervention_ratio"] = m.intervention_ratio;
  j["avg_return"] = m.avg_return;
  j["episodes"] = m.episodes;
  j["stage"] = m.stage;
  j["collisions"] = m.collisions;
  j["preceding_gap_collisions"] = m.preceding_gap_collisions;
  j["side_swipe_collisions"] = m.side_swipe_collisions;
  j["rear_end_collisions"] = m.rear_end_collisions;
  j["pedestrian_collisions"] = m.pedestrian_collisions;
  j["total_steps"] = m.total_steps;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_metrics_json: cannot open " + path);
  os << j.dump(2) << "\n";
}

MetricsReport read_metrics_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_metrics_json: cannot open " + path);
  json j;
  is >> j;
  MetricsReport m;
  m.collision_rate = j.at("collision_rate").get<double>();
  m.avg_speed = j.at("avg_speed").get<double>();
  m.intervention_ratio = j.at("intervention_ratio").get<double>();
  m.avg_return = j.at("avg_return").get<double>();
  m.episodes = j.at("episodes").get<int>();
  m.stage = j.at("stage").get<std::string>();
  m.collisions = j.at("collisions").get<int>();
  m.preceding_gap_collisions = j.at("preceding_gap_collisions").get<int>();
  m.side_swipe_collisions = j.at("side_swipe_collisions").get<int>();
  m.rear_end_collisions = j.at("rear_end_collisions").get<int>();
  m.pedestrian_collisions = j.at("pedestrian_collisions").get<int>();
  m.total_steps = j.at("total_steps").get<long>();
  return m;
}

CollisionKind classify_collision(const sim::WorldState& world) {
  const sim::Obb ego = sim::vehicle_obb(world.ego);
  for (const auto& ped : world.pedestrians)
    if (ped.active && sim::obb_disc_overlap(ego, ped.s, ped.d, sim::kPedestrianRadius))
      return CollisionKind::pedestrian;
  for (const auto& tv : world.traffic) {
    if (!sim::obb_overlap(ego, sim::vehicle_obb(tv.st))) continue;
    const double delta_s = tv.st.s - world.ego.s;
    const double delta_d = std::abs(tv.st.d - world.ego.d);
    // Substantial lateral overlap means a longitudinal (bumper) contact;
    // a grazing lateral touch is a side swipe.
    if (delta_d < world.ego.half_width + tv.st.half_width - 0.05)
      return delta_s > 0.0 ? CollisionKind::preceding_gap : CollisionKind::rear_end;
    return CollisionKind::side_swipe;
  }
  return CollisionKind::none;
}

// ---- checkpoints ----

void save_sac_checkpoint(const std::string& path, const agent::SacNets& nets,
                         const std::string& which) {
  nn::ParamStore combined;
  auto add_all = [&](const std::string& prefix, const nn::ParamStore& store) {
    for (const auto& e : store.entries) combined.add(prefix + e.name, e.value);
  };
  add_all("actor.", nets.actor);
  add_all("q1.", nets.q1);
  add_all("q2.", nets.q2);
  add_all("temperature.", nets.temperature);

  json arch;
  arch["kind"] = which;
  arch["state_dim"] = nets.cfg.state_dim;
  arch["action_dim"] = nets.cfg.action_dim;
  arch["hidden_width"] = nets.cfg.hidden_width;
  arch["actor_layers"] = nets.cfg.actor_layers;
  arch["critic_layers"] = nets.cfg.critic_layers;
  arch["gamma"] = nets.cfg.gamma;
  arch["tau"] = nets.cfg.tau;
  arch["lr"] = nets.cfg.lr;
  arch["temp_lr"] = nets.cfg.temp_lr;
  arch["box_lo"] = nets.box.lo;
  arch["box_hi"] = nets.box.hi;
  nn::checkpoint_save(path, "sac_" + which, arch, combined);
}

agent::SacNets load_sac_checkpoint(const std::string& path) {
  nn::Checkpoint ck = nn::checkpoint_load(path);
  agent::SacConfig cfg;
  cfg.state_dim = ck.arch.at("state_dim").get<int>();
  cfg.action_dim = ck.arch.at("action_dim").get<int>();
  cfg.hidden_width = ck.arch.at("hidden_width").get<int>();
  cfg.actor_layers = ck.arch.at("actor_layers").get<int>();
  cfg.critic_layers = ck.arch.at("critic_layers").get<int>();
  cfg.gamma = ck.arch.at("gamma").get<double>();
  cfg.tau = ck.arch.at("tau").get<double>();
  cfg.lr = ck.arch.at("lr").get<double>();
  cfg.temp_lr = ck.arch.at("temp_lr").get<double>();
  agent::ActionBox box;
  box.lo = ck.arch.at("box_lo").get<std::vector<double>>();
  box.hi = ck.arch.at("box_hi").get<std::vector<double>>();

  agent::SacNets nets = agent::SacNets::init(cfg, box, /*seed=*/0);
  auto restore = [&](const std::string& prefix, nn::ParamStore& store) {
    for (auto& e : store.entries) {
      const nn::Tensor& src = ck.store.at(prefix + e.name);
      if (src.rows != e.value.rows || src.cols != e.value.cols)
        throw nn::NnError("checkpoint shape mismatch for " + prefix + e.name);
      e.value = src;
    }
  };
  restore("actor.", nets.actor);
  restore("q1.", nets.q1);
  restore("q2.", nets.q2);
  restore("temperature.", nets.temperature);
  nets.q1_targ = nets.q1;
  nets.q2_targ = nets.q2;
  return nets;
}

void save_rq_checkpoint(const std::string& path, const rq::RqModel& model) {
  json arch;
  arch["token_width"] = model.cfg.token_width;
  arch["tokens"] = model.cfg.tokens;
  arch["embed_dim"] = model.cfg.embed_dim;
  arch["blocks"] = model.cfg.blocks;
  arch["heads"] = model.cfg.heads;
  arch["mlp_hidden"] = model.cfg.mlp_hidden;
  arch["tc_min"] = model.cfg.tc_min;
  arch["tc_max"] = model.cfg.tc_max;
  nn::checkpoint_save(path, "rq", arch, model.params);
}

rq::RqModel load_rq_checkpoint(const std::string& path) {
  nn::Checkpoint ck = nn::checkpoint_load(path);
  rq::RqConfig cfg;
  cfg.token_width = ck.arch.at("token_width").get<int>();
  cfg.tokens = ck.arch.at("tokens").get<int>();
  cfg.embed_dim = ck.arch.at("embed_dim").get<int>();
  cfg.blocks = ck.arch.at("blocks").get<int>();
  cfg.heads = ck.arch.at("heads").get<int>();
  cfg.mlp_hidden = ck.arch.at("mlp_hidden").get<int>();
  cfg.tc_min = ck.arch.at("tc_min").get<double>();
  cfg.tc_max = ck.arch.at("tc_max").get<double>();
  rq::RqModel model = rq::rq_init(cfg, 0);
  for (auto& e : model.params.entries) e.value = ck.store.at(e.name);
  return model;
}

// ---- episode execution ----

namespace {

struct StepRecord {
  rewards::ActionSnapshot executed;
  double reward = 0.0;
  bool collision = false;
  bool done = false;
  bool gamma = false;
  guard::ShieldDecision decision;
  bool has_decision = false;
};

// Applies one deployment-agent action (possibly shielded) and advances the
// world by one control step.
StepRecord omega_step(sim::WorldState& world, const sim::Observation& obs,
                      const agent::ActionOmega& raw, const rq::RqModel* rq_model,
                      const config::RunConfig& cfg, const guard::GuardMode& mode,
                      planner::PidState& pid, const rewards::ActionSnapshot& prev) {
  StepRecord rec;
  agent::ActionOmega act = raw;
  if (mode.kind != guard::GuardMode::off) {
    rec.decision = guard::shield(obs, world, rq_model, raw, cfg.shield, mode);
    rec.has_decision = true;
    rec.gamma = rec.decision.gamma;
    act = rec.decision.final_action;
  }
  const agent::PlanRequest req = agent::act_to_plan(act, world.ego, world.lanes);
  const planner::Trajectory traj = planner::make_trajectory(req.lat, req.lon, req.horizon);
  const planner::Controls ctrl = planner::pid_track(traj, world.ego, cfg.gains.preview,
                                                    cfg.gains, pid, req.mode, sim::kDt);
  sim::step_world(world, {ctrl.steer, ctrl.accel}, sim::kDt);

  rec.executed = {act.d_fn, act.a_x};
  rec.collision = sim::detect_collision(world);
  const rewards::RewardComponents comp =
      rewards::reward_components(world, prev, rec.executed, rec.gamma, cfg.rewards);
  rec.reward = rewards::total_reward_omega(comp);
  rec.done = rec.collision || world.ego.s >= world.lanes.road_length;
  return rec;
}

StepRecord phi_step(sim::WorldState& world, const agent::ActionPhi& act,
                    const config::RunConfig& cfg, planner::PidState& pid,
                    const rewards::ActionSnapshot& prev) {
  StepRecord rec;
  const agent::PlanRequest req = agent::act_to_plan(act, world.ego, world.lanes);
  const planner::Trajectory traj = planner::make_trajectory(req.lat, req.lon, req.horizon);
  const planner::Controls ctrl = planner::pid_track(traj, world.ego, cfg.gains.preview,
                                                    cfg.gains, pid, req.mode, sim::kDt);
  sim::step_world(world, {ctrl.steer, ctrl.accel}, sim::kDt);

  rec.executed = {act.d_fn, 0.0};
  rec.collision = sim::detect_collision(world);
  const rewards::RewardComponents comp =
      rewards::reward_components(world, prev, rec.executed, false, cfg.rewards);
  rec.reward = rewards::total_reward_phi(comp);
  rec.done = rec.collision || world.ego.s >= world.lanes.road_length;
  return rec;
}

void append_trace_step(trace::EpisodeTrace& tr, const sim::WorldState& world,
                       const StepRecord& rec) {
  trace::TraceStep st;
  st.t = world.time;
  st.ego = world.ego;
  for (const auto& tv : world.traffic) st.traffic.emplace_back(tv.id, tv.st);
  st.pedestrians = world.pedestrians;
  st.collision = rec.collision;
  st.action = rec.executed;
  st.reward = rec.reward;
  if (rec.has_decision) {
    trace::ShieldLog sl;
    sl.gamma = rec.decision.gamma;
    sl.lateral_overridden = rec.decision.lateral_overridden;
    sl.longitudinal_overridden = rec.decision.longitudinal_overridden;
    sl.a_safe_pre = rec.decision.a_safe_pre;
    sl.a_safe_follow = rec.decision.a_safe_follow;
    sl.t_c_used = rec.decision.t_c_used;
    sl.binding_pre = rec.decision.binding_pre;
    sl.binding_follow = rec.decision.binding_follow;
    st.shield = sl;
  }
  tr.push_back(std::move(st));
}

}  // namespace

EpisodeOutcome run_omega_episode_with_policy(const OmegaPolicy& policy,
                                             const rq::RqModel* rq_model,
                                             const config::RunConfig& cfg,
                                             std::uint64_t episode_seed, Rng* action_rng,
                                             trace::EpisodeTrace* out_trace) {
  const guard::GuardMode mode = cfg.guard_mode();
  sim::WorldState world = sim::spawn_scenario(episode_seed, cfg.scenario_enum(), cfg.traffic);
  planner::PidState pid;
  rewards::ActionSnapshot prev{};
  Rng dummy(episode_seed);
  Rng& arng = action_rng ? *action_rng : dummy;

  EpisodeOutcome out;
  for (int step = 0; step < cfg.max_episode_steps; ++step) {
    const sim::Observation obs = sim::observe_full(world);
    const agent::ActionOmega raw = policy(obs, arng);
    const StepRecord rec = omega_step(world, obs, raw, rq_model, cfg, mode, pid, prev);
    prev = rec.executed;

    out.steps += 1;
    out.speed_sum += world.ego.v_s;
    out.episode_return += rec.reward;
    if (rec.gamma) out.gamma_steps += 1;
    if (out_trace) append_trace_step(*out_trace, world, rec);

    if (rec.collision) {
      out.collided = true;
      out.kind = classify_collision(world);
      break;
    }
    if (rec.done) {
      out.reached_end = true;
      break;
    }
  }
  return out;
}

EpisodeOutcome run_omega_episode(const agent::SacNets& nets, const rq::RqModel* rq_model,
                                 const config::RunConfig& cfg, std::uint64_t episode_seed,
                                 bool stochastic, Rng* action_rng,
                                 trace::EpisodeTrace* out_trace) {
  const OmegaPolicy policy = [&](const sim::Observation& obs, Rng& rng) {
    const agent::PolicySample ps = agent::sample_action(nets, obs.x, stochastic, rng);
    return agent::ActionOmega{ps.action[0], ps.action[1]};
  };
  return run_omega_episode_with_policy(policy, rq_model, cfg, episode_seed, action_rng,
                                       out_trace);
}

// ---- training ----

namespace {

void write_curve_csv(const std::string& path, const std::vector<TrainCurveRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "step,episode,return,critic_loss,actor_loss,alpha\n";
  for (const auto& r : rows)
    os << r.step << "," << r.episode << "," << fmt_double(r.episode_return) << ","
       << fmt_double(r.critic_loss) << "," << fmt_double(r.actor_loss) << ","
       << fmt_double(r.alpha) << "\n";
}

void write_interventions_csv(const std::string& path,
                             const std::vector<std::pair<long, double>>& windows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "window_end_step,intervention_ratio\n";
  for (const auto& [step, ratio] : windows) os << step << "," << fmt_double(ratio) << "\n";
}

std::vector<double> random_box_action(const agent::ActionBox& box, Rng& rng) {
  std::vector<double> a(static_cast<size_t>(box.dim()));
  for (int i = 0; i < box.dim(); ++i)
    a[static_cast<size_t>(i)] =
        rng.uniform(box.lo[static_cast<size_t>(i)], box.hi[static_cast<size_t>(i)]);
  return a;
}

struct TrainAccumulator {
  int episodes = 0;
  int collisions = 0;
  int preceding = 0, side = 0, rear = 0, ped = 0;
  long steps = 0;
  double speed_sum = 0.0;
  double return_sum = 0.0;
  long gamma_steps = 0;

  MetricsReport finish() const {
    MetricsReport m;
    m.stage = "T";
    m.episodes = episodes;
    m.collisions = collisions;
    m.preceding_gap_collisions = preceding;
    m.side_swipe_collisions = side;
    m.rear_end_collisions = rear;
    m.pedestrian_collisions = ped;
    m.total_steps = steps;
    m.collision_rate = episodes > 0 ? 100.0 * collisions / episodes : 0.0;
    m.avg_speed = steps > 0 ? speed_sum / static_cast<double>(steps) : 0.0;
    m.intervention_ratio = steps > 0 ? 100.0 * static_cast<double>(gamma_steps) /
                                           static_cast<double>(steps)
                                     : 0.0;
    m.avg_return = episodes > 0 ? return_sum / episodes : 0.0;
    return m;
  }
};

}  // namespace

TrainSummary cmd_train_phi(const config::RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  const agent::ActionBox box = cfg.phi_box();
  agent::SacNets nets = agent::SacNets::init(cfg.sac_config(3), box, Rng::splitmix64(cfg.seed));
  agent::ReplayBuffer buffer(static_cast<size_t>(cfg.buffer_capacity));
  Rng env_rng(Rng::splitmix64(cfg.seed ^ 0x1111));
  Rng action_rng(Rng::splitmix64(cfg.seed ^ 0x2222));
  Rng learner_rng(Rng::splitmix64(cfg.seed ^ 0x3333));

  TrainSummary summary;
  TrainAccumulator acc;
  agent::SacDiagnostics diag;
  long global_step = 0;
  int episode = 0;

  while (global_step < cfg.phi_steps) {
    sim::WorldState world =
        sim::spawn_scenario(env_rng.next_u64(), cfg.scenario_enum(), cfg.traffic);
    planner::PidState pid;
    rewards::ActionSnapshot prev{};
    double ep_return = 0.0;
    bool ended = false;

    for (int step = 0; step < cfg.max_episode_steps && global_step < cfg.phi_steps; ++step) {
      const sim::StateVector x = sim::observe(world);
      std::vector<double> a;
      if (global_step < cfg.warmup_steps) {
        a = random_box_action(box, action_rng);
      } else {
        a = agent::sample_action(nets, x, /*stochastic=*/true, action_rng).action;
      }
      const agent::ActionPhi act{a[0], a[1], a[2]};
      const StepRecord rec = phi_step(world, act, cfg, pid, prev);
      prev = rec.executed;
      const sim::StateVector x2 = sim::observe(world);

      buffer.push({std::vector<double>(x.begin(), x.end()), a, rec.reward,
                   std::vector<double>(x2.begin(), x2.end()), rec.done});
      ep_return += rec.reward;
      acc.steps += 1;
      acc.speed_sum += world.ego.v_s;
      global_step += 1;

      if (global_step > cfg.warmup_steps &&
          buffer.size() >= static_cast<size_t>(cfg.batch_size) &&
          global_step % cfg.update_every == 0) {
        const auto batch = buffer.sample(static_cast<size_t>(cfg.batch_size), learner_rng);
        diag = agent::sac_update(nets, batch, learner_rng);
      }

      if (rec.done || step + 1 == cfg.max_episode_steps) {
        ended = true;
        acc.episodes += 1;
        acc.return_sum += ep_return;
        if (rec.collision) {
          acc.collisions += 1;
          switch (classify_collision(world)) {
            case CollisionKind::preceding_gap: acc.preceding += 1; break;
            case CollisionKind::side_swipe: acc.side += 1; break;
            case CollisionKind::rear_end: acc.rear += 1; break;
            case CollisionKind::pedestrian: acc.ped += 1; break;
            default: break;
          }
        }
        break;
      }
    }
    if (ended)
      summary.rows.push_back({global_step, episode, ep_return, diag.critic_loss,
                              diag.actor_loss, diag.alpha});
    episode += 1;
  }

  summary.metrics = acc.finish();
  summary.checkpoint_path = cfg.out_dir + "/phi.ckpt";
  summary.curve_path = cfg.out_dir + "/phi_curve.csv";
  save_sac_checkpoint(summary.checkpoint_path, nets, "phi");
  write_curve_csv(summary.curve_path, summary.rows);
  write_metrics_json(cfg.out_dir + "/phi_metrics.json", summary.metrics);
  return summary;
}

TrainSummary cmd_train_omega(const config::RunConfig& cfg, const std::string& rq_ckpt_path) {
  ensure_dir(cfg.out_dir);
  const guard::GuardMode mode = cfg.guard_mode();
  std::optional<rq::RqModel> rq_model;
  if (!rq_ckpt_path.empty())
    rq_model = load_rq_checkpoint(rq_ckpt_path);
  else if (mode.kind == guard::GuardMode::adaptive)
    throw std::runtime_error("train-omega: adaptive guard requires an RQ checkpoint");

  const agent::ActionBox box = cfg.omega_box();
  agent::SacNets nets =
      agent::SacNets::init(cfg.sac_config(2), box, Rng::splitmix64(cfg.seed ^ 0xa5a5));
  agent::ReplayBuffer buffer(static_cast<size_t>(cfg.buffer_capacity));
  Rng env_rng(Rng::splitmix64(cfg.seed ^ 0x4444));
  Rng action_rng(Rng::splitmix64(cfg.seed ^ 0x5555));
  Rng learner_rng(Rng::splitmix64(cfg.seed ^ 0x6666));

  TrainSummary summary;
  TrainAccumulator acc;
  agent::SacDiagnostics diag;
  long global_step = 0;
  int episode = 0;
  long window_gamma = 0;
  constexpr long kWindow = 1000;

  while (global_step < cfg.omega_steps) {
    sim::WorldState world =
        sim::spawn_scenario(env_rng.next_u64(), cfg.scenario_enum(), cfg.traffic);
    planner::PidState pid;
    rewards::ActionSnapshot prev{};
    double ep_return = 0.0;

    for (int step = 0; step < cfg.max_episode_steps && global_step < cfg.omega_steps; ++step) {
      const sim::Observation obs = sim::observe_full(world);
      std::vector<double> a;
      if (global_step < cfg.warmup_steps) {
        a = random_box_action(box, action_rng);
      } else {
        a = agent::sample_action(nets, obs.x, /*stochastic=*/true, action_rng).action;
      }
      const agent::ActionOmega raw{a[0], a[1]};
      const StepRecord rec =
          omega_step(world, obs, raw, rq_model ? &*rq_model : nullptr, cfg, mode, pid, prev);
      prev = rec.executed;
      const sim::StateVector x2 = sim::observe(world);

      // The executed (post-shield) action is what produced the next state.
      buffer.push({std::vector<double>(obs.x.begin(), obs.x.end()),
                   {rec.executed.d_fn, rec.executed.a_x}, rec.reward,
                   std::vector<double>(x2.begin(), x2.end()), rec.done});
      ep_return += rec.reward;
      acc.steps += 1;
      acc.speed_sum += world.ego.v_s;
      if (rec.gamma) {
        acc.gamma_steps += 1;
        window_gamma += 1;
      }
      global_step += 1;
      if (global_step % kWindow == 0) {
        summary.intervention_windows.emplace_back(global_step,
                                                  100.0 * window_gamma / kWindow);
        window_gamma = 0;
      }

      if (global_step > cfg.warmup_steps &&
          buffer.size() >= static_cast<size_t>(cfg.batch_size) &&
          global_step % cfg.update_every == 0) {
        const auto batch = buffer.sample(static_cast<size_t>(cfg.batch_size), learner_rng);
        diag = agent::sac_update(nets, batch, learner_rng);
      }

      if (rec.done || step + 1 == cfg.max_episode_steps) {
        acc.episodes += 1;
        acc.return_sum += ep_return;
        if (rec.collision) {
          acc.collisions += 1;
          switch (classify_collision(world)) {
            case CollisionKind::preceding_gap: acc.preceding += 1; break;
            case CollisionKind::side_swipe: acc.side += 1; break;
            case CollisionKind::rear_end: acc.rear += 1; break;
            case CollisionKind::pedestrian: acc.ped += 1; break;
            default: break;
          }
        }
        summary.rows.push_back({global_step, episode, ep_return, diag.critic_loss,
                                diag.actor_loss, diag.alpha});
        break;
      }
    }
    episode += 1;
  }

  summary.metrics = acc.finish();
  summary.checkpoint_path = cfg.out_dir + "/omega.ckpt";
  summary.curve_path = cfg.out_dir + "/omega_curve.csv";
  save_sac_checkpoint(summary.checkpoint_path, nets, "omega");
  write_curve_csv(summary.curve_path, summary.rows);
  write_interventions_csv(cfg.out_dir + "/omega_interventions.csv",
                          summary.intervention_windows);
  write_metrics_json(cfg.out_dir + "/omega_metrics.json", summary.metrics);
  return summary;
}

RqSummary cmd_collect_train_rq(const config::RunConfig& cfg, const std::string& phi_ckpt_path) {
  ensure_dir(cfg.out_dir);
  const agent::SacNets phi = load_sac_checkpoint(phi_ckpt_path);

  rq::CollectConfig cc;
  cc.base_traffic = cfg.traffic;
  cc.scenario = cfg.scenario_enum();
  cc.gains = cfg.gains;
  cc.max_episode_steps = cfg.max_episode_steps;

  RqSummary out;
  const rq::DaDataset data = rq::collect_da_dataset(
      phi.actor, phi.cfg, phi.box, cc, cfg.n_da, Rng::splitmix64(cfg.seed ^ 0x7777));
  out.records = data.size();
  out.dataset_path = cfg.out_dir + "/da.jsonl";
  rq::save_dataset_jsonl(out.dataset_path, data);

  rq::RqModel model = rq::rq_init(cfg.rq, Rng::splitmix64(cfg.seed ^ 0x8888));
  const rq::TrainResult tr = rq::train_rq(data, model, cfg.rq_epochs, cfg.rq_batch, cfg.rq_lr,
                                          Rng::splitmix64(cfg.seed ^ 0x9999));
  out.val_mse = tr.val_mse;
  out.epoch_loss = tr.epoch_loss;
  out.checkpoint_path = cfg.out_dir + "/rq.ckpt";
  save_rq_checkpoint(out.checkpoint_path, model);

  json j;
  j["records"] = out.records;
  j["val_mse"] = out.val_mse;
  j["epoch_loss"] = out.epoch_loss;
  std::ofstream os(cfg.out_dir + "/rq_summary.json");
  os << j.dump(2) << "\n";
  return out;
}

MetricsReport cmd_evaluate(const config::RunConfig& cfg, const std::string& omega_ckpt_path,
                           const std::string& rq_ckpt_path) {
  ensure_dir(cfg.out_dir);
  const agent::SacNets nets = load_sac_checkpoint(omega_ckpt_path);
  std::optional<rq::RqModel> rq_model;
  if (!rq_ckpt_path.empty()) rq_model = load_rq_checkpoint(rq_ckpt_path);
  if (cfg.guard_mode().kind == guard::GuardMode::adaptive && !rq_model)
    throw std::runtime_error("evaluate: adaptive guard requires an RQ checkpoint");

  if (cfg.write_traces) ensure_dir(cfg.out_dir + "/traces");
  if (cfg.write_svg) ensure_dir(cfg.out_dir + "/plots");

  TrainAccumulator acc;
  for (int ep = 0; ep < cfg.eval_episodes; ++ep) {
    const std::uint64_t ep_seed =
        Rng::splitmix64(cfg.seed ^ (0xe0e0ULL + static_cast<std::uint64_t>(ep)));
    trace::EpisodeTrace tr;
    const EpisodeOutcome outcome =
        run_omega_episode(nets, rq_model ? &*rq_model : nullptr, cfg, ep_seed,
                          /*stochastic=*/false, nullptr, cfg.write_traces ? &tr : nullptr);
    acc.episodes += 1;
    acc.steps += outcome.steps;
    acc.speed_sum += outcome.speed_sum;
    acc.return_sum += outcome.episode_return;
    acc.gamma_steps += outcome.gamma_steps;
    if (outcome.collided) {
      acc.collisions += 1;
      switch (outcome.kind) {
        case CollisionKind::preceding_gap: acc.preceding += 1; break;
        case CollisionKind::side_swipe: acc.side += 1; break;
        case CollisionKind::rear_end: acc.rear += 1; break;
        case CollisionKind::pedestrian: acc.ped += 1; break;
        default: break;
      }
    }
    if (cfg.write_traces) {
      char name[64];
      std::snprintf(name, sizeof(name), "/traces/ep_%04d.jsonl", ep);
      trace::write_trace_jsonl(cfg.out_dir + name, tr);
      if (cfg.write_svg) {
        std::snprintf(name, sizeof(name), "/plots/ep_%04d.svg", ep);
        trace::write_trace_svg(cfg.out_dir + name, tr);
      }
    }
  }

  MetricsReport m = acc.finish();
  m.stage = "A";
  write_metrics_json(cfg.out_dir + "/metrics.json", m);
  return m;
}

MetricsReport replay_traces(const config::RunConfig& cfg,
                            const std::vector<std::string>& trace_paths) {
  const sim::LaneGeometry lanes = sim::LaneGeometry::make();
  TrainAccumulator acc;
  for (const std::string& path : trace_paths) {
    const trace::EpisodeTrace tr = trace::read_trace_jsonl(path);
    acc.episodes += 1;
    rewards::ActionSnapshot prev{};
    bool collided = false;
    double ep_return = 0.0;
    for (const trace::TraceStep& st : tr) {
      acc.steps += 1;
      acc.speed_sum += st.ego.v_s;
      const bool gamma = st.shield && st.shield->gamma;
      if (gamma) acc.gamma_steps += 1;
      if (st.collision) collided = true;

      // Reward terms re-derived from raw trace fields.
      const double v = st.ego.v_s;
      const double v_sp = std::min(v, cfg.rewards.v_smin) / cfg.rewards.v_smin;
      const double v_mp = std::clamp(
          (v - cfg.rewards.v_smin) / (cfg.rewards.v_smax - cfg.rewards.v_smin), 0.0, 1.0);
      double d_ld = std::numeric_limits<double>::infinity();
      for (double c : lanes.lane_centers) d_ld = std::min(d_ld, std::abs(st.ego.d - c));
      double r = cfg.rewards.rho_sp * v_sp + cfg.rewards.rho_mp * v_mp;
      r += st.collision ? cfg.rewards.rho_coll : 0.0;
      r += cfg.rewards.rho_ld * d_ld;
      r += gamma ? cfg.rewards.rho_risk : 0.0;
      r += cfg.rewards.rho_cf *
           (std::abs(st.action.d_fn - prev.d_fn) / (2.0 * cfg.rewards.lane_width) +
            std::abs(st.action.a_x - prev.a_x) / cfg.rewards.a_bar);
      ep_return += r;
      prev = st.action;
    }
    if (collided) acc.collisions += 1;
    acc.return_sum += ep_return;
  }
  MetricsReport m = acc.finish();
  m.stage = "A";
  return m;
}

}  // namespace ssev::harness
