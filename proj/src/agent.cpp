#include "ssev/agent.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace ssev::agent {

using nn::BoundParams;
using nn::Graph;
using nn::ParamStore;
using nn::Tensor;

ActionBox phi_action_box(double tc_min, double tc_max, double lane_width, double v_max) {
  return ActionBox{{tc_min, -lane_width, 0.0}, {tc_max, lane_width, v_max}};
}

ActionBox omega_action_box(double lane_width, double a_max) {
  return ActionBox{{-lane_width, -a_max}, {lane_width, a_max}};
}

namespace {

constexpr double kLogSqrt2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)
constexpr double kLog2 = 0.6931471805599453;

void init_mlp(ParamStore& store, const std::string& prefix, int in_dim,
              const std::vector<int>& hidden, int out_dim, Rng& rng) {
  int d = in_dim;
  for (size_t i = 0; i < hidden.size(); ++i) {
    const std::string name = prefix + "h" + std::to_string(i);
    store.add(name + ".W", nn::glorot_uniform(d, hidden[i], rng));
    store.add(name + ".b", nn::zeros(1, hidden[i]));
    d = hidden[i];
  }
  store.add(prefix + "out.W", nn::glorot_uniform(d, out_dim, rng));
  store.add(prefix + "out.b", nn::zeros(1, out_dim));
}

int mlp_forward(Graph& g, const BoundParams& p, const std::string& prefix, int layers, int x) {
  int h = x;
  for (int i = 0; i < layers; ++i) {
    const std::string name = prefix + "h" + std::to_string(i);
    h = g.relu(nn::dense(g, h, p.id(name + ".W"), p.id(name + ".b")));
  }
  return nn::dense(g, h, p.id(prefix + "out.W"), p.id(prefix + "out.b"));
}

}  // namespace

SacNets SacNets::init(const SacConfig& cfg, const ActionBox& box, std::uint64_t seed) {
  SacNets nets;
  nets.cfg = cfg;
  nets.box = box;
  Rng rng(seed);

  const std::vector<int> actor_hidden(static_cast<size_t>(cfg.actor_layers), cfg.hidden_width);
  const std::vector<int> critic_hidden(static_cast<size_t>(cfg.critic_layers),
                                       cfg.hidden_width);
  // Actor head emits [mean | raw log-std] side by side.
  init_mlp(nets.actor, "", cfg.state_dim, actor_hidden, 2 * cfg.action_dim, rng);
  const int critic_in = cfg.state_dim + cfg.action_dim;
  init_mlp(nets.q1, "", critic_in, critic_hidden, 1, rng);
  init_mlp(nets.q2, "", critic_in, critic_hidden, 1, rng);
  nets.q1_targ = nets.q1;
  nets.q2_targ = nets.q2;
  nets.temperature.add("log_alpha", Tensor::scalar(std::log(cfg.init_alpha)));
  return nets;
}

double SacNets::alpha() const { return std::exp(temperature.at("log_alpha").item()); }

namespace detail {

ActorForward actor_forward(Graph& g, const BoundParams& actor, const SacConfig& cfg, int x) {
  const int head = mlp_forward(g, actor, "", cfg.actor_layers, x);
  const int mean = g.slice_cols(head, 0, cfg.action_dim);
  const int raw = g.slice_cols(head, cfg.action_dim, 2 * cfg.action_dim);
  // Soft clamp keeps the gradient alive at the bounds.
  const double lo = cfg.log_std_min, hi = cfg.log_std_max;
  const int log_std = g.add_const(g.scale(g.add_const(g.tanh_(raw), 1.0), 0.5 * (hi - lo)), lo);
  return {mean, log_std};
}

int critic_forward(Graph& g, const BoundParams& critic, const SacConfig& cfg, int x,
                   int a_pre) {
  return mlp_forward(g, critic, "", cfg.critic_layers, g.concat_cols(x, a_pre));
}

int log_prob_rows(Graph& g, int z, int mean, int log_std) {
  // Gaussian log-density at z plus the tanh-squash correction
  // -log(1 - tanh(z)^2), the latter in the stable softplus form.
  const int std_ = g.exp_(log_std);
  const int unit = g.div(g.sub(z, mean), std_);
  const int gauss = g.add_const(g.sub(g.scale(g.square(unit), -0.5), log_std), -kLogSqrt2Pi);
  const int sp = g.softplus(g.scale(z, -2.0));
  const int squash = g.add_const(g.scale(g.add(z, sp), 2.0), -2.0 * kLog2);
  return g.add(gauss, squash);
}

BatchTensors pack_batch(const std::vector<const Transition*>& batch, const ActionBox& box) {
  const int n = static_cast<int>(batch.size());
  const int sd = static_cast<int>(batch[0]->state.size());
  const int ad = box.dim();
  BatchTensors bt{Tensor(n, sd), Tensor(n, ad), Tensor(n, 1), Tensor(n, 1), Tensor(n, sd)};
  for (int i = 0; i < n; ++i) {
    const Transition& t = *batch[static_cast<size_t>(i)];
    for (int j = 0; j < sd; ++j) {
      bt.states.at(i, j) = t.state[static_cast<size_t>(j)];
      bt.next_states.at(i, j) = t.next_state[static_cast<size_t>(j)];
    }
    for (int j = 0; j < ad; ++j) {
      // Critics consume the normalized (pre-squash-range) action.
      const double norm = (t.action[static_cast<size_t>(j)] - box.mid(j)) / box.half(j);
      bt.actions_pre.at(i, j) = std::clamp(norm, -1.0, 1.0);
    }
    bt.rewards.at(i, 0) = t.reward;
    bt.not_done.at(i, 0) = t.done ? 0.0 : 1.0;
  }
  return bt;
}

CriticGraph build_critic_loss(const SacNets& nets, const BatchTensors& bt,
                              const Tensor& eps_next) {
  CriticGraph cg;
  Graph& g = cg.g;
  const SacConfig& cfg = nets.cfg;

  // Target side: everything constant, no gradients tracked.
  const BoundParams actor_c = [&] {
    BoundParams b;
    b.store = &nets.actor;
    for (const auto& e : nets.actor.entries) b.ids.push_back(g.constant(e.value));
    return b;
  }();
  const BoundParams q1t_c = [&] {
    BoundParams b;
    b.store = &nets.q1_targ;
    for (const auto& e : nets.q1_targ.entries) b.ids.push_back(g.constant(e.value));
    return b;
  }();
  const BoundParams q2t_c = [&] {
    BoundParams b;
    b.store = &nets.q2_targ;
    for (const auto& e : nets.q2_targ.entries) b.ids.push_back(g.constant(e.value));
    return b;
  }();

  const int x2 = g.constant(bt.next_states);
  const ActorForward af = actor_forward(g, actor_c, cfg, x2);
  const int z2 = g.add(af.mean, g.mul(g.exp_(af.log_std), g.constant(eps_next)));
  const int a2 = g.tanh_(z2);
  const int logp2 = g.row_sum(log_prob_rows(g, z2, af.mean, af.log_std));
  const int q1n = critic_forward(g, q1t_c, cfg, x2, a2);
  const int q2n = critic_forward(g, q2t_c, cfg, x2, a2);
  const int qmin = g.minimum(q1n, q2n);
  const double alpha = nets.alpha();
  const int soft_v = g.sub(qmin, g.scale(logp2, alpha));
  const int y = g.add(g.constant(bt.rewards),
                      g.mul(g.scale(g.constant(bt.not_done), cfg.gamma), soft_v));

  // Online critics regress to y.
  cg.q1 = nn::bind_params(g, nets.q1);
  cg.q2 = nn::bind_params(g, nets.q2);
  const int x = g.constant(bt.states);
  const int a = g.constant(bt.actions_pre);
  const int q1p = critic_forward(g, cg.q1, cfg, x, a);
  const int q2p = critic_forward(g, cg.q2, cfg, x, a);
  cg.loss = g.add(g.mean(g.square(g.sub(q1p, y))), g.mean(g.square(g.sub(q2p, y))));

  double acc = 0.0;
  for (double v : g.value(q1p).data) acc += v;
  cg.mean_q = acc / bt.states.rows;
  return cg;
}

ActorGraph build_actor_loss(const SacNets& nets, const BatchTensors& bt,
                            const Tensor& eps_cur) {
  ActorGraph ag;
  Graph& g = ag.g;
  const SacConfig& cfg = nets.cfg;

  ag.actor = nn::bind_params(g, nets.actor);
  const BoundParams q1_c = [&] {
    BoundParams b;
    b.store = &nets.q1;
    for (const auto& e : nets.q1.entries) b.ids.push_back(g.constant(e.value));
    return b;
  }();
  const BoundParams q2_c = [&] {
    BoundParams b;
    b.store = &nets.q2;
    for (const auto& e : nets.q2.entries) b.ids.push_back(g.constant(e.value));
    return b;
  }();

  const int x = g.constant(bt.states);
  const ActorForward af = actor_forward(g, ag.actor, cfg, x);
  const int z = g.add(af.mean, g.mul(g.exp_(af.log_std), g.constant(eps_cur)));
  const int a_pre = g.tanh_(z);
  const int logp = g.row_sum(log_prob_rows(g, z, af.mean, af.log_std));
  const int q1p = critic_forward(g, q1_c, cfg, x, a_pre);
  const int q2p = critic_forward(g, q2_c, cfg, x, a_pre);
  const int qmin = g.minimum(q1p, q2p);
  const double alpha = nets.alpha();
  ag.loss = g.mean(g.sub(g.scale(logp, alpha), qmin));

  double acc = 0.0;
  for (double v : g.value(logp).data) acc += v;
  ag.mean_logp = acc / bt.states.rows;
  return ag;
}

double temperature_loss(double log_alpha, double mean_logp, double target_entropy) {
  return -log_alpha * (mean_logp + target_entropy);
}

double temperature_grad(double mean_logp, double target_entropy) {
  return -(mean_logp + target_entropy);
}

void soft_update(ParamStore& target, const ParamStore& online, double tau) {
  for (size_t i = 0; i < target.entries.size(); ++i) {
    auto& tv = target.entries[i].value.data;
    const auto& ov = online.entries[i].value.data;
    for (size_t j = 0; j < tv.size(); ++j) tv[j] = tau * ov[j] + (1.0 - tau) * tv[j];
  }
}

}  // namespace detail

PolicySample sample_action(const ParamStore& actor, const SacConfig& cfg, const ActionBox& box,
                           std::span<const double> state, bool stochastic, Rng& rng) {
  Graph g;
  BoundParams bound;
  bound.store = &actor;
  for (const auto& e : actor.entries) bound.ids.push_back(g.constant(e.value));
  Tensor x(1, cfg.state_dim);
  std::copy(state.begin(), state.end(), x.data.begin());
  const detail::ActorForward af = detail::actor_forward(g, bound, cfg, g.constant(std::move(x)));

  const Tensor& mean = g.value(af.mean);
  const Tensor& log_std = g.value(af.log_std);
  PolicySample out;
  out.action.resize(static_cast<size_t>(cfg.action_dim));
  out.pre_tanh.resize(static_cast<size_t>(cfg.action_dim));
  out.log_prob = 0.0;
  for (int i = 0; i < cfg.action_dim; ++i) {
    const double mu = mean.data[static_cast<size_t>(i)];
    const double ls = log_std.data[static_cast<size_t>(i)];
    const double sd = std::exp(ls);
    const double z = stochastic ? mu + sd * rng.normal() : mu;
    out.pre_tanh[static_cast<size_t>(i)] = z;
    const double u = (z - mu) / sd;
    const double gauss = -0.5 * u * u - ls - kLogSqrt2Pi;
    const double sp = z < 0.0 ? std::log1p(std::exp(2.0 * z)) - 2.0 * z
                              : std::log1p(std::exp(-2.0 * z));
    const double squash = 2.0 * (z + sp) - 2.0 * kLog2;  // -log(1 - tanh(z)^2)
    out.log_prob += gauss + squash;
    out.action[static_cast<size_t>(i)] = box.mid(i) + box.half(i) * std::tanh(z);
  }
  return out;
}

PolicySample sample_action(const SacNets& nets, std::span<const double> state, bool stochastic,
                           Rng& rng) {
  return sample_action(nets.actor, nets.cfg, nets.box, state, stochastic, rng);
}

ReplayBuffer::ReplayBuffer(size_t capacity) : cap_(capacity) {
  if (capacity == 0) throw nn::NnError("replay buffer capacity must be positive");
  store_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
  if (store_.size() < cap_) {
    store_.push_back(std::move(t));
    next_ = store_.size() % cap_;
    full_ = store_.size() == cap_;
  } else {
    store_[next_] = std::move(t);
    next_ = (next_ + 1) % cap_;
    full_ = true;
  }
}

std::vector<const Transition*> ReplayBuffer::sample(size_t k, Rng& rng) const {
  const size_t n = size();
  if (k > n) throw nn::NnError("replay sample: k exceeds stored transitions");
  // Floyd's algorithm: k distinct uniform indices.
  std::unordered_set<size_t> chosen;
  std::vector<const Transition*> out;
  out.reserve(k);
  for (size_t j = n - k; j < n; ++j) {
    const size_t t = static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(j)));
    if (chosen.insert(t).second)
      out.push_back(&store_[t]);
    else {
      chosen.insert(j);
      out.push_back(&store_[j]);
    }
  }
  return out;
}

SacDiagnostics sac_update(SacNets& nets, const std::vector<const Transition*>& batch,
                          Rng& rng) {
  SacDiagnostics diag;
  if (batch.empty()) throw nn::NnError("sac_update: empty batch");
  const detail::BatchTensors bt = detail::pack_batch(batch, nets.box);
  const int n = bt.states.rows;

  Tensor eps_next(n, nets.cfg.action_dim);
  for (double& v : eps_next.data) v = rng.normal();
  Tensor eps_cur(n, nets.cfg.action_dim);
  for (double& v : eps_cur.data) v = rng.normal();

  const nn::AdamConfig adam{nets.cfg.lr, 0.9, 0.999, 1e-8};
  const nn::AdamConfig adam_temp{nets.cfg.temp_lr, 0.9, 0.999, 1e-8};

  // Critics.
  {
    detail::CriticGraph cg = detail::build_critic_loss(nets, bt, eps_next);
    diag.critic_loss = cg.g.value(cg.loss).item();
    diag.mean_q = cg.mean_q;
    if (!std::isfinite(diag.critic_loss)) {
      diag.skipped = true;
      return diag;
    }
    cg.g.backward(cg.loss);
    bool ok = nn::adam_step_from_graph(nets.q1, cg.g, cg.q1, adam);
    ok = nn::adam_step_from_graph(nets.q2, cg.g, cg.q2, adam) && ok;
    if (!ok) {
      diag.skipped = true;
      return diag;
    }
  }

  // Actor.
  {
    detail::ActorGraph ag = detail::build_actor_loss(nets, bt, eps_cur);
    diag.actor_loss = ag.g.value(ag.loss).item();
    diag.mean_logp = ag.mean_logp;
    if (!std::isfinite(diag.actor_loss)) {
      diag.skipped = true;
      return diag;
    }
    ag.g.backward(ag.loss);
    if (!nn::adam_step_from_graph(nets.actor, ag.g, ag.actor, adam)) {
      diag.skipped = true;
      return diag;
    }
  }

  // Temperature.
  {
    Tensor grad = Tensor::scalar(
        detail::temperature_grad(diag.mean_logp, nets.cfg.resolved_target_entropy()));
    nn::adam_step(nets.temperature, {&grad}, adam_temp);
  }

  detail::soft_update(nets.q1_targ, nets.q1, nets.cfg.tau);
  detail::soft_update(nets.q2_targ, nets.q2, nets.cfg.tau);

  diag.alpha = nets.alpha();
  return diag;
}

namespace {

// Frenet plans assume mostly-forward motion; a runaway lateral rate would
// otherwise be copied into the boundary and chased by the tracker.
double bounded_lateral_rate(const sim::VehicleState& ego) {
  const double limit = 0.4 * std::max(ego.v_s, 2.0);
  return std::clamp(ego.v_d, -limit, limit);
}

}  // namespace

PlanRequest act_to_plan(const ActionPhi& a, const sim::VehicleState& ego,
                        const sim::LaneGeometry& lanes) {
  PlanRequest req;
  const double lane_center = lanes.nearest_center(ego.d);
  req.lat = {ego.d, bounded_lateral_rate(ego), 0.0, lane_center + a.d_fn, 0.0, 0.0};
  req.lon = {ego.s, ego.v_s, 0.0, a.s_dot_f, 0.0};
  req.horizon = a.t_c;
  req.mode = planner::TrackMode::speed();
  return req;
}

PlanRequest act_to_plan(const ActionOmega& a, const sim::VehicleState& ego,
                        const sim::LaneGeometry& lanes, double path_horizon) {
  PlanRequest req;
  const double lane_center = lanes.nearest_center(ego.d);
  req.lat = {ego.d, bounded_lateral_rate(ego), 0.0, lane_center + a.d_fn, 0.0, 0.0};
  const double sf_dot = std::max(0.0, ego.v_s + a.a_x * path_horizon);
  req.lon = {ego.s, ego.v_s, 0.0, sf_dot, 0.0};
  req.horizon = path_horizon;
  req.mode = planner::TrackMode::direct(a.a_x);
  return req;
}

}  // namespace ssev::agent
