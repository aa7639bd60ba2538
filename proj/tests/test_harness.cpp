#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ssev/harness.hpp"

using namespace ssev;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string fresh_dir(const std::string& name) {
  const std::string dir = "/tmp/ssev_harness/" + name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

config::RunConfig tiny_config(const std::string& out_dir) {
  config::RunConfig cfg;
  cfg.out_dir = out_dir;
  cfg.hidden_width = 8;
  cfg.actor_layers = 2;
  cfg.critic_layers = 2;
  cfg.batch_size = 16;
  cfg.warmup_steps = 32;
  cfg.buffer_capacity = 4096;
  cfg.max_episode_steps = 60;
  cfg.eval_episodes = 3;
  cfg.rq.embed_dim = 8;
  cfg.rq.blocks = 1;
  cfg.rq.heads = 2;
  cfg.rq.mlp_hidden = 8;
  return cfg;
}

}  // namespace

TEST_CASE("toml subset: values, sections, comments") {
  const auto kv = config::parse_toml_string(R"(
# top comment
[run]
scenario = "b"   # trailing comment
seed = 42
write_svg = true

[traffic]
speed_low = 7.5
)");
  CHECK(std::get<std::string>(kv.at("run.scenario")) == "b");
  CHECK(std::get<std::int64_t>(kv.at("run.seed")) == 42);
  CHECK(std::get<bool>(kv.at("run.write_svg")) == true);
  CHECK(std::get<double>(kv.at("traffic.speed_low")) == doctest::Approx(7.5));
}

TEST_CASE("toml subset: malformed lines are rejected") {
  CHECK_THROWS_AS((void)config::parse_toml_string("key"), config::ConfigError);
  CHECK_THROWS_AS((void)config::parse_toml_string("[sec\nkey = 1"), config::ConfigError);
  CHECK_THROWS_AS((void)config::parse_toml_string("key = \"unterminated"), config::ConfigError);
  CHECK_THROWS_AS((void)config::parse_toml_string("key = what"), config::ConfigError);
}

TEST_CASE("run config: file values, overrides, and unknown-key rejection") {
  const std::string dir = fresh_dir("config");
  {
    std::ofstream os(dir + "/cfg.toml");
    os << "[run]\nscenario = \"b\"\nseed = 7\n[sac]\nhidden_width = 32\n";
  }
  const config::RunConfig cfg =
      config::load_run_config(dir + "/cfg.toml", {"run.seed=9", "sac.batch_size=64"});
  CHECK(cfg.scenario == "b");
  CHECK(cfg.seed == 9);  // override wins
  CHECK(cfg.hidden_width == 32);
  CHECK(cfg.batch_size == 64);

  {
    std::ofstream os(dir + "/bad.toml");
    os << "[run]\nnot_a_key = 1\n";
  }
  CHECK_THROWS_AS((void)config::load_run_config(dir + "/bad.toml", {}), config::ConfigError);
}

TEST_CASE("run config: guard modes parse") {
  config::RunConfig cfg;
  cfg.guard = "off";
  CHECK(cfg.guard_mode().kind == guard::GuardMode::off);
  cfg.guard = "adaptive";
  CHECK(cfg.guard_mode().kind == guard::GuardMode::adaptive);
  cfg.guard = "fixed:3.5";
  CHECK(cfg.guard_mode().kind == guard::GuardMode::fixed);
  CHECK(cfg.guard_mode().fixed_tc == doctest::Approx(3.5));
  cfg.guard = "sometimes";
  CHECK_THROWS_AS((void)cfg.guard_mode(), config::ConfigError);
}

TEST_CASE("sac checkpoint round trip is bit-exact") {
  const std::string dir = fresh_dir("sac_ckpt");
  agent::SacConfig scfg;
  scfg.action_dim = 2;
  scfg.hidden_width = 8;
  scfg.actor_layers = 2;
  scfg.critic_layers = 2;
  const agent::SacNets nets = agent::SacNets::init(scfg, agent::omega_action_box(), 31);
  harness::save_sac_checkpoint(dir + "/omega.ckpt", nets, "omega");
  const agent::SacNets loaded = harness::load_sac_checkpoint(dir + "/omega.ckpt");

  CHECK(loaded.cfg.action_dim == 2);
  CHECK(loaded.box.lo == nets.box.lo);
  REQUIRE(loaded.actor.entries.size() == nets.actor.entries.size());
  for (size_t i = 0; i < nets.actor.entries.size(); ++i)
    CHECK(loaded.actor.entries[i].value.data == nets.actor.entries[i].value.data);
  for (size_t i = 0; i < nets.q1.entries.size(); ++i)
    CHECK(loaded.q1.entries[i].value.data == nets.q1.entries[i].value.data);
  CHECK(loaded.temperature.at("log_alpha").item() == nets.temperature.at("log_alpha").item());
}

TEST_CASE("rq checkpoint round trip is bit-exact") {
  const std::string dir = fresh_dir("rq_ckpt");
  rq::RqConfig rcfg;
  rcfg.embed_dim = 8;
  rcfg.blocks = 1;
  rcfg.heads = 2;
  rcfg.mlp_hidden = 8;
  const rq::RqModel model = rq::rq_init(rcfg, 32);
  harness::save_rq_checkpoint(dir + "/rq.ckpt", model);
  const rq::RqModel loaded = harness::load_rq_checkpoint(dir + "/rq.ckpt");
  REQUIRE(loaded.params.entries.size() == model.params.entries.size());
  for (size_t i = 0; i < model.params.entries.size(); ++i)
    CHECK(loaded.params.entries[i].value.data == model.params.entries[i].value.data);
  CHECK(loaded.cfg.embed_dim == 8);
}

TEST_CASE("trace jsonl round trip") {
  const std::string dir = fresh_dir("trace");
  trace::EpisodeTrace tr;
  trace::TraceStep st;
  st.t = 0.1;
  st.ego.s = 1.0;
  st.ego.v_s = 3.0;
  sim::VehicleState tv;
  tv.s = 20.0;
  tv.d = 3.5;
  st.traffic.emplace_back(4, tv);
  sim::PedestrianState ped;
  ped.s = 30.0;
  ped.active = true;
  st.pedestrians.push_back(ped);
  st.collision = false;
  st.action = {1.0, -0.5};
  st.reward = 0.25;
  trace::ShieldLog sl;
  sl.gamma = true;
  sl.a_safe_pre = -0.5;
  sl.t_c_used = 2.0;
  st.shield = sl;
  tr.push_back(st);

  trace::write_trace_jsonl(dir + "/t.jsonl", tr);
  const trace::EpisodeTrace rt = trace::read_trace_jsonl(dir + "/t.jsonl");
  REQUIRE(rt.size() == 1);
  CHECK(rt[0].t == 0.1);
  CHECK(rt[0].ego.s == 1.0);
  CHECK(rt[0].traffic[0].first == 4);
  CHECK(rt[0].traffic[0].second.d == 3.5);
  CHECK(rt[0].pedestrians[0].active);
  CHECK(rt[0].action.d_fn == 1.0);
  CHECK(rt[0].reward == 0.25);
  REQUIRE(rt[0].shield.has_value());
  CHECK(rt[0].shield->gamma);
  CHECK(rt[0].shield->t_c_used == 2.0);
}

TEST_CASE("classify_collision distinguishes contact geometries") {
  sim::TrafficParams params;
  params.vehicle_count_min = params.vehicle_count_max = 0;
  sim::WorldState w = sim::spawn_scenario(1, sim::Scenario::a, params);
  w.ego.d = 0.0;

  SUBCASE("preceding") {
    sim::TrafficVehicle tv;
    tv.st.s = w.ego.s + 4.0;
    tv.st.d = w.ego.d + 0.3;
    w.traffic.push_back(tv);
    REQUIRE(sim::detect_collision(w));
    CHECK(harness::classify_collision(w) == harness::CollisionKind::preceding_gap);
  }
  SUBCASE("rear end") {
    sim::TrafficVehicle tv;
    tv.st.s = w.ego.s - 4.0;
    tv.st.d = w.ego.d;
    w.traffic.push_back(tv);
    REQUIRE(sim::detect_collision(w));
    CHECK(harness::classify_collision(w) == harness::CollisionKind::rear_end);
  }
  SUBCASE("side swipe") {
    sim::TrafficVehicle tv;
    tv.st.s = w.ego.s + 1.0;
    tv.st.d = w.ego.d + 1.9;  // laterally offset contact
    w.traffic.push_back(tv);
    REQUIRE(sim::detect_collision(w));
    CHECK(harness::classify_collision(w) == harness::CollisionKind::side_swipe);
  }
  SUBCASE("pedestrian") {
    sim::PedestrianState ped;
    ped.s = w.ego.s + 1.0;
    ped.d = w.ego.d;
    ped.active = true;
    w.pedestrians.push_back(ped);
    REQUIRE(sim::detect_collision(w));
    CHECK(harness::classify_collision(w) == harness::CollisionKind::pedestrian);
  }
}

TEST_CASE("evaluate on an empty road: no collisions, no interventions") {
  const std::string dir = fresh_dir("eval_empty");
  config::RunConfig cfg = tiny_config(dir);
  cfg.traffic.vehicle_count_min = cfg.traffic.vehicle_count_max = 0;
  cfg.eval_episodes = 1;
  cfg.guard = "fixed:3.0";

  const agent::SacNets nets =
      agent::SacNets::init(cfg.sac_config(2), cfg.omega_box(), 33);
  harness::save_sac_checkpoint(dir + "/omega.ckpt", nets, "omega");
  const harness::MetricsReport m = harness::cmd_evaluate(cfg, dir + "/omega.ckpt", "");
  CHECK(m.episodes == 1);
  CHECK(m.collision_rate == 0.0);
  CHECK(m.intervention_ratio == 0.0);
  CHECK(m.avg_speed >= 0.0);
}

TEST_CASE("replay recomputes the evaluation metrics exactly") {
  const std::string dir = fresh_dir("replay");
  config::RunConfig cfg = tiny_config(dir);
  cfg.guard = "fixed:2.0";
  cfg.eval_episodes = 4;
  cfg.max_episode_steps = 80;

  const agent::SacNets nets =
      agent::SacNets::init(cfg.sac_config(2), cfg.omega_box(), 34);
  harness::save_sac_checkpoint(dir + "/omega.ckpt", nets, "omega");
  const harness::MetricsReport reported = harness::cmd_evaluate(cfg, dir + "/omega.ckpt", "");

  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir + "/traces"))
    files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  const harness::MetricsReport replayed = harness::replay_traces(cfg, files);

  CHECK(replayed.episodes == reported.episodes);
  CHECK(replayed.total_steps == reported.total_steps);
  CHECK(replayed.collision_rate == doctest::Approx(reported.collision_rate).epsilon(1e-9));
  CHECK(replayed.avg_speed == doctest::Approx(reported.avg_speed).epsilon(1e-9));
  CHECK(replayed.intervention_ratio ==
        doctest::Approx(reported.intervention_ratio).epsilon(1e-9));
  CHECK(replayed.avg_return == doctest::Approx(reported.avg_return).epsilon(1e-9));
}

TEST_CASE("metrics json round trip") {
  const std::string dir = fresh_dir("metrics");
  harness::MetricsReport m;
  m.collision_rate = 12.5;
  m.avg_speed = 11.25;
  m.intervention_ratio = 3.75;
  m.avg_return = -4.5;
  m.episodes = 8;
  m.stage = "T";
  m.collisions = 1;
  m.total_steps = 123;
  harness::write_metrics_json(dir + "/m.json", m);
  const harness::MetricsReport r = harness::read_metrics_json(dir + "/m.json");
  CHECK(r.collision_rate == m.collision_rate);
  CHECK(r.avg_speed == m.avg_speed);
  CHECK(r.intervention_ratio == m.intervention_ratio);
  CHECK(r.avg_return == m.avg_return);
  CHECK(r.episodes == m.episodes);
  CHECK(r.stage == m.stage);
  CHECK(r.total_steps == m.total_steps);
}

TEST_CASE("train-phi with zero steps writes an initialized checkpoint and empty curve") {
  const std::string dir = fresh_dir("phi0");
  config::RunConfig cfg = tiny_config(dir);
  cfg.phi_steps = 0;
  const harness::TrainSummary summary = harness::cmd_train_phi(cfg);
  CHECK(summary.rows.empty());
  CHECK(fs::exists(summary.checkpoint_path));
  const agent::SacNets loaded = harness::load_sac_checkpoint(summary.checkpoint_path);
  CHECK(loaded.cfg.action_dim == 3);
  CHECK(slurp(summary.curve_path) == "step,episode,return,critic_loss,actor_loss,alpha\n");
}

TEST_CASE("deterministic rerun: training curve and evaluation artifacts byte-identical") {
  auto run_once = [&](const std::string& name) {
    const std::string dir = fresh_dir(name);
    config::RunConfig cfg = tiny_config(dir);
    cfg.phi_steps = 400;
    cfg.seed = 77;
    const harness::TrainSummary s = harness::cmd_train_phi(cfg);
    return std::pair{slurp(s.curve_path), slurp(dir + "/phi_metrics.json")};
  };
  const auto a = run_once("det_a");
  const auto b = run_once("det_b");
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("evaluation artifacts are byte-identical across reruns") {
  auto run_once = [&](const std::string& name) {
    const std::string dir = fresh_dir(name);
    config::RunConfig cfg = tiny_config(dir);
    cfg.guard = "fixed:2.0";
    cfg.eval_episodes = 2;
    cfg.seed = 5;
    const agent::SacNets nets =
        agent::SacNets::init(cfg.sac_config(2), cfg.omega_box(), 36);
    harness::save_sac_checkpoint(dir + "/omega.ckpt", nets, "omega");
    harness::cmd_evaluate(cfg, dir + "/omega.ckpt", "");
    return std::pair{slurp(dir + "/metrics.json"), slurp(dir + "/traces/ep_0001.jsonl")};
  };
  const auto a = run_once("eval_det_a");
  const auto b = run_once("eval_det_b");
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("svg plot renders non-trivial content") {
  const std::string dir = fresh_dir("svg");
  config::RunConfig cfg = tiny_config(dir);
  cfg.guard = "off";
  cfg.eval_episodes = 1;
  cfg.write_svg = true;
  const agent::SacNets nets =
      agent::SacNets::init(cfg.sac_config(2), cfg.omega_box(), 37);
  harness::save_sac_checkpoint(dir + "/omega.ckpt", nets, "omega");
  harness::cmd_evaluate(cfg, dir + "/omega.ckpt", "");
  const std::string svg = slurp(dir + "/plots/ep_0000.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("<rect") != std::string::npos);
}
