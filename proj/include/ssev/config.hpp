#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>

#include "ssev/agent.hpp"
#include "ssev/guard.hpp"
#include "ssev/planner.hpp"
#include "ssev/rewards.hpp"
#include "ssev/rq.hpp"
#include "ssev/sim.hpp"

namespace ssev::config {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

using TomlValue = std::variant<bool, std::int64_t, double, std::string>;

// Minimal TOML reader: [sections], key = value with string/bool/integer/float
// values and # comments. Returns dotted keys ("section.key") in file order.
std::map<std::string, TomlValue> parse_toml_file(const std::string& path);
std::map<std::string, TomlValue> parse_toml_string(const std::string& text);

struct RunConfig {
  // [run]
  std::string scenario = "a";          // a | b
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string guard = "adaptive";      // adaptive | fixed:<tc> | off
  std::string shield_mode = "conservative";  // conservative | paper
  int phi_steps = 150000;              // desk scale; paper scale 1000000
  int omega_steps = 100000;
  int n_da = 50000;                    // desk scale; paper scale 300000
  int rq_epochs = 30;
  int eval_episodes = 200;
  int max_episode_steps = 600;
  bool write_traces = true;
  bool write_svg = false;

  sim::TrafficParams traffic;
  rewards::RewardConfig rewards;
  planner::PidGains gains;
  guard::ShieldConfig shield;
  rq::RqConfig rq;

  // [sac]
  int hidden_width = 64;  // paper scale: 256
  int actor_layers = 4;
  int critic_layers = 3;
  double gamma = 0.99;
  double tau = 5e-3;
  double lr = 3e-4;
  double temp_lr = 3e-4;
  int batch_size = 256;
  int warmup_steps = 1000;
  int update_every = 1;
  int buffer_capacity = 150000;

  // [rq_train]
  int rq_batch = 256;
  double rq_lr = 3e-4;

  sim::Scenario scenario_enum() const;
  guard::GuardMode guard_mode() const;
  agent::SacConfig sac_config(int action_dim) const;
  agent::ActionBox phi_box() const;
  agent::ActionBox omega_box() const;
};

// Defaults, then file values, then "section.key=value" overrides; unknown
// keys are rejected.
RunConfig load_run_config(const std::string& path_or_empty,
                          const std::vector<std::string>& overrides = {});

void apply_key(RunConfig& cfg, const std::string& key, const TomlValue& value);

}  // namespace ssev::config
