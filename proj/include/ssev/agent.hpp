#pragma once

#include <span>
#include <vector>

#include "ssev/nn.hpp"
#include "ssev/planner.hpp"
#include "ssev/sim.hpp"

namespace ssev::agent {

struct ActionBox {
  std::vector<double> lo, hi;
  int dim() const { return static_cast<int>(lo.size()); }
  double mid(int i) const { return 0.5 * (lo[static_cast<size_t>(i)] + hi[static_cast<size_t>(i)]); }
  double half(int i) const { return 0.5 * (hi[static_cast<size_t>(i)] - lo[static_cast<size_t>(i)]); }
};

// Simulation-domain agent action: [T_c, d_fn, s_dot_f].
struct ActionPhi {
  double t_c = 2.25;
  double d_fn = 0.0;
  double s_dot_f = 0.0;
};

// Deployment agent action: [d_fn, a_x].
struct ActionOmega {
  double d_fn = 0.0;
  double a_x = 0.0;
};

ActionBox phi_action_box(double tc_min = 0.5, double tc_max = 4.0, double lane_width = 3.5,
                         double v_max = 15.0);
ActionBox omega_action_box(double lane_width = 3.5, double a_max = 2.0);

struct SacConfig {
  int state_dim = sim::kStateDim;
  int action_dim = 2;
  int hidden_width = 64;
  int actor_layers = 4;
  int critic_layers = 3;
  double gamma = 0.99;
  double tau = 5e-3;        // target soft-update rate
  double lr = 3e-4;
  double temp_lr = 3e-4;
  double init_alpha = 1.0;
  double target_entropy = 0.0;  // 0 -> use -action_dim
  double log_std_min = -20.0;
  double log_std_max = 2.0;

  double resolved_target_entropy() const {
    return target_entropy != 0.0 ? target_entropy : -static_cast<double>(action_dim);
  }
};

struct SacNets {
  SacConfig cfg;
  ActionBox box;
  nn::ParamStore actor;
  nn::ParamStore q1, q2;
  nn::ParamStore q1_targ, q2_targ;
  nn::ParamStore temperature;  // single entry "log_alpha"

  static SacNets init(const SacConfig& cfg, const ActionBox& box, std::uint64_t seed);
  double alpha() const;
};

struct PolicySample {
  std::vector<double> action;    // env scale, strictly inside the box
  std::vector<double> pre_tanh;  // the Gaussian draw
  double log_prob = 0.0;
};

// Squashed diagonal Gaussian; stochastic=false returns the squashed mean.
PolicySample sample_action(const nn::ParamStore& actor, const SacConfig& cfg,
                           const ActionBox& box, std::span<const double> state,
                           bool stochastic, Rng& rng);
PolicySample sample_action(const SacNets& nets, std::span<const double> state, bool stochastic,
                           Rng& rng);

struct Transition {
  std::vector<double> state;
  std::vector<double> action;  // env scale
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity);
  void push(Transition t);
  // Uniform without replacement; k must not exceed size().
  std::vector<const Transition*> sample(size_t k, Rng& rng) const;
  size_t size() const { return full_ ? store_.size() : next_; }
  size_t capacity() const { return store_.capacity(); }

 private:
  std::vector<Transition> store_;
  size_t cap_;
  size_t next_ = 0;
  bool full_ = false;
};

struct SacDiagnostics {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;
  double mean_q = 0.0;
  double mean_logp = 0.0;
  bool skipped = false;
};

SacDiagnostics sac_update(SacNets& nets, const std::vector<const Transition*>& batch,
                          Rng& rng);

// ---- planning bridge ----

struct PlanRequest {
  planner::LateralBoundary lat;
  planner::LongitudinalBoundary lon;
  double horizon = 0.0;
  planner::TrackMode mode;
};

PlanRequest act_to_plan(const ActionPhi& a, const sim::VehicleState& ego,
                        const sim::LaneGeometry& lanes);
// The lateral path of the deployment agent still needs a horizon; a_x drives
// the longitudinal axis directly.
PlanRequest act_to_plan(const ActionOmega& a, const sim::VehicleState& ego,
                        const sim::LaneGeometry& lanes, double path_horizon = 4.0);

// ---- internals shared with the gradient test-suite ----
namespace detail {

struct ActorForward {
  int mean;     // n x A
  int log_std;  // n x A (soft-clamped)
};
ActorForward actor_forward(nn::Graph& g, const nn::BoundParams& actor, const SacConfig& cfg,
                           int x);

int critic_forward(nn::Graph& g, const nn::BoundParams& critic, const SacConfig& cfg, int x,
                   int a_pre);

// logp columns before the row-sum, built from (z, mean, log_std).
int log_prob_rows(nn::Graph& g, int z, int mean, int log_std);

struct BatchTensors {
  nn::Tensor states, actions_pre, rewards, not_done, next_states;
};
BatchTensors pack_batch(const std::vector<const Transition*>& batch, const ActionBox& box);

struct CriticGraph {
  nn::Graph g;
  nn::BoundParams q1, q2;
  int loss = -1;
  double mean_q = 0.0;
};
CriticGraph build_critic_loss(const SacNets& nets, const BatchTensors& bt,
                              const nn::Tensor& eps_next);

struct ActorGraph {
  nn::Graph g;
  nn::BoundParams actor;
  int loss = -1;
  double mean_logp = 0.0;
};
ActorGraph build_actor_loss(const SacNets& nets, const BatchTensors& bt,
                            const nn::Tensor& eps_cur);

double temperature_loss(double log_alpha, double mean_logp, double target_entropy);
double temperature_grad(double mean_logp, double target_entropy);

void soft_update(nn::ParamStore& target, const nn::ParamStore& online, double tau);

}  // namespace detail

}  // namespace ssev::agent
