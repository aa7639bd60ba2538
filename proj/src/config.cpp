#include "ssev/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace ssev::config {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

TomlValue parse_value(const std::string& raw, int line_no) {
  const std::string v = trim(raw);
  if (v.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty value");
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"')
      throw ConfigError("line " + std::to_string(line_no) + ": unterminated string");
    return v.substr(1, v.size() - 2);
  }
  if (v == "true") return true;
  if (v == "false") return false;
  const bool is_float = v.find_first_of(".eE") != std::string::npos &&
                        v.find_first_not_of("+-0123456789.eE") == std::string::npos;
  try {
    size_t used = 0;
    if (is_float) {
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } else {
      const std::int64_t i = std::stoll(v, &used, 10);
      if (used == v.size()) return i;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("line " + std::to_string(line_no) + ": cannot parse value '" + v + "'");
}

}  // namespace

std::map<std::string, TomlValue> parse_toml_string(const std::string& text) {
  std::map<std::string, TomlValue> out;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    out[full] = parse_value(line.substr(eq + 1), line_no);
  }
  return out;
}

std::map<std::string, TomlValue> parse_toml_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_toml_string(ss.str());
}

namespace {

double as_double(const TomlValue& v, const std::string& key) {
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  if (std::holds_alternative<std::int64_t>(v))
    return static_cast<double>(std::get<std::int64_t>(v));
  throw ConfigError(key + ": expected a number");
}

std::int64_t as_int(const TomlValue& v, const std::string& key) {
  if (std::holds_alternative<std::int64_t>(v)) return std::get<std::int64_t>(v);
  throw ConfigError(key + ": expected an integer");
}

bool as_bool(const TomlValue& v, const std::string& key) {
  if (std::holds_alternative<bool>(v)) return std::get<bool>(v);
  throw ConfigError(key + ": expected true/false");
}

std::string as_string(const TomlValue& v, const std::string& key) {
  if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
  throw ConfigError(key + ": expected a string");
}

}  // namespace

void apply_key(RunConfig& c, const std::string& key, const TomlValue& v) {
  // [run]
  if (key == "run.scenario") c.scenario = as_string(v, key);
  else if (key == "run.seed") c.seed = static_cast<std::uint64_t>(as_int(v, key));
  else if (key == "run.out") c.out_dir = as_string(v, key);
  else if (key == "run.guard") c.guard = as_string(v, key);
  else if (key == "run.shield_mode") c.shield_mode = as_string(v, key);
  else if (key == "run.phi_steps") c.phi_steps = static_cast<int>(as_int(v, key));
  else if (key == "run.omega_steps") c.omega_steps = static_cast<int>(as_int(v, key));
  else if (key == "run.n_da") c.n_da = static_cast<int>(as_int(v, key));
  else if (key == "run.rq_epochs") c.rq_epochs = static_cast<int>(as_int(v, key));
  else if (key == "run.eval_episodes") c.eval_episodes = static_cast<int>(as_int(v, key));
  else if (key == "run.max_episode_steps") c.max_episode_steps = static_cast<int>(as_int(v, key));
  else if (key == "run.write_traces") c.write_traces = as_bool(v, key);
  else if (key == "run.write_svg") c.write_svg = as_bool(v, key);
  // [traffic]
  else if (key == "traffic.spawn_range") c.traffic.spawn_range = as_double(v, key);
  else if (key == "traffic.speed_low") c.traffic.speed_low = as_double(v, key);
  else if (key == "traffic.speed_high") c.traffic.speed_high = as_double(v, key);
  else if (key == "traffic.vehicle_count_min") c.traffic.vehicle_count_min = static_cast<int>(as_int(v, key));
  else if (key == "traffic.vehicle_count_max") c.traffic.vehicle_count_max = static_cast<int>(as_int(v, key));
  else if (key == "traffic.pedestrian_rate") c.traffic.pedestrian_rate = as_double(v, key);
  else if (key == "traffic.min_spawn_gap") c.traffic.min_spawn_gap = as_double(v, key);
  else if (key == "traffic.ego_front_margin") c.traffic.ego_front_margin = as_double(v, key);
  else if (key == "traffic.idm_min_gap") c.traffic.idm.min_gap = as_double(v, key);
  else if (key == "traffic.idm_time_headway") c.traffic.idm.time_headway = as_double(v, key);
  else if (key == "traffic.idm_max_accel") c.traffic.idm.max_accel = as_double(v, key);
  else if (key == "traffic.idm_comfortable_decel") c.traffic.idm.comfortable_decel = as_double(v, key);
  else if (key == "traffic.idm_exponent") c.traffic.idm.exponent = as_double(v, key);
  // [rewards]
  else if (key == "rewards.rho_sp") c.rewards.rho_sp = as_double(v, key);
  else if (key == "rewards.rho_mp") c.rewards.rho_mp = as_double(v, key);
  else if (key == "rewards.rho_coll") c.rewards.rho_coll = as_double(v, key);
  else if (key == "rewards.rho_ld") c.rewards.rho_ld = as_double(v, key);
  else if (key == "rewards.rho_risk") c.rewards.rho_risk = as_double(v, key);
  else if (key == "rewards.rho_cf") c.rewards.rho_cf = as_double(v, key);
  else if (key == "rewards.v_smin") c.rewards.v_smin = as_double(v, key);
  else if (key == "rewards.v_smax") c.rewards.v_smax = as_double(v, key);
  else if (key == "rewards.a_bar") c.rewards.a_bar = as_double(v, key);
  // [pid]
  else if (key == "pid.lat_kp") c.gains.lat_kp = as_double(v, key);
  else if (key == "pid.lat_ki") c.gains.lat_ki = as_double(v, key);
  else if (key == "pid.lat_kd") c.gains.lat_kd = as_double(v, key);
  else if (key == "pid.heading_weight") c.gains.heading_weight = as_double(v, key);
  else if (key == "pid.speed_kp") c.gains.speed_kp = as_double(v, key);
  else if (key == "pid.speed_ki") c.gains.speed_ki = as_double(v, key);
  else if (key == "pid.speed_kd") c.gains.speed_kd = as_double(v, key);
  else if (key == "pid.preview") c.gains.preview = as_double(v, key);
  // [shield]
  else if (key == "shield.k1") c.shield.k1 = as_double(v, key);
  else if (key == "shield.b1") c.shield.b1 = as_double(v, key);
  else if (key == "shield.k2") c.shield.k2 = as_double(v, key);
  else if (key == "shield.b2") c.shield.b2 = as_double(v, key);
  else if (key == "shield.a_max") c.shield.a_max = as_double(v, key);
  else if (key == "shield.a_min") c.shield.a_min = as_double(v, key);
  else if (key == "shield.lane_overlap_margin") c.shield.lane_overlap_margin = as_double(v, key);
  // [rq]
  else if (key == "rq.embed_dim") c.rq.embed_dim = static_cast<int>(as_int(v, key));
  else if (key == "rq.blocks") c.rq.blocks = static_cast<int>(as_int(v, key));
  else if (key == "rq.heads") c.rq.heads = static_cast<int>(as_int(v, key));
  else if (key == "rq.mlp_hidden") c.rq.mlp_hidden = static_cast<int>(as_int(v, key));
  // [rq_train]
  else if (key == "rq_train.batch") c.rq_batch = static_cast<int>(as_int(v, key));
  else if (key == "rq_train.lr") c.rq_lr = as_double(v, key);
  // [sac]
  else if (key == "sac.hidden_width") c.hidden_width = static_cast<int>(as_int(v, key));
  else if (key == "sac.actor_layers") c.actor_layers = static_cast<int>(as_int(v, key));
  else if (key == "sac.critic_layers") c.critic_layers = static_cast<int>(as_int(v, key));
  else if (key == "sac.gamma") c.gamma = as_double(v, key);
  else if (key == "sac.tau") c.tau = as_double(v, key);
  else if (key == "sac.lr") c.lr = as_double(v, key);
  else if (key == "sac.temp_lr") c.temp_lr = as_double(v, key);
  else if (key == "sac.batch_size") c.batch_size = static_cast<int>(as_int(v, key));
  else if (key == "sac.warmup_steps") c.warmup_steps = static_cast<int>(as_int(v, key));
  else if (key == "sac.update_every") c.update_every = static_cast<int>(as_int(v, key));
  else if (key == "sac.buffer_capacity") c.buffer_capacity = static_cast<int>(as_int(v, key));
  else throw ConfigError("unknown config key: " + key);
}

sim::Scenario RunConfig::scenario_enum() const {
  if (scenario == "a") return sim::Scenario::a;
  if (scenario == "b") return sim::Scenario::b;
  throw ConfigError("run.scenario must be \"a\" or \"b\"");
}

guard::GuardMode RunConfig::guard_mode() const {
  if (guard == "off") return guard::GuardMode::make_off();
  if (guard == "adaptive") return guard::GuardMode::make_adaptive();
  if (guard.rfind("fixed:", 0) == 0) {
    const double tc = std::stod(guard.substr(6));
    if (tc <= 0.0) throw ConfigError("run.guard fixed horizon must be positive");
    return guard::GuardMode::make_fixed(tc);
  }
  throw ConfigError("run.guard must be adaptive, off, or fixed:<tc>");
}

agent::SacConfig RunConfig::sac_config(int action_dim) const {
  agent::SacConfig sc;
  sc.state_dim = sim::kStateDim;
  sc.action_dim = action_dim;
  sc.hidden_width = hidden_width;
  sc.actor_layers = actor_layers;
  sc.critic_layers = critic_layers;
  sc.gamma = gamma;
  sc.tau = tau;
  sc.lr = lr;
  sc.temp_lr = temp_lr;
  return sc;
}

agent::ActionBox RunConfig::phi_box() const {
  return agent::phi_action_box(shield.tc_min, shield.tc_max, 3.5, rewards.v_smax);
}

agent::ActionBox RunConfig::omega_box() const {
  return agent::omega_action_box(3.5, shield.a_max);
}

RunConfig load_run_config(const std::string& path_or_empty,
                          const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!path_or_empty.empty()) {
    for (const auto& [key, value] : parse_toml_file(path_or_empty)) apply_key(cfg, key, value);
  }
  for (const std::string& ov : overrides) {
    const size_t eq = ov.find('=');
    if (eq == std::string::npos) throw ConfigError("override must look like section.key=value: " + ov);
    apply_key(cfg, trim(ov.substr(0, eq)), parse_value(ov.substr(eq + 1), 0));
  }
  // Shield mode is a string in the file; resolve it once here.
  if (cfg.shield_mode == "conservative") cfg.shield.mode = guard::ShieldConfig::Mode::conservative;
  else if (cfg.shield_mode == "paper") cfg.shield.mode = guard::ShieldConfig::Mode::paper;
  else throw ConfigError("run.shield_mode must be conservative or paper");
  return cfg;
}

}  // namespace ssev::config
