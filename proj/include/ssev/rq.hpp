#pragma once

#include <array>
#include <string>
#include <vector>

#include "ssev/agent.hpp"
#include "ssev/nn.hpp"
#include "ssev/sim.hpp"

namespace ssev::rq {

inline constexpr int kParticipants = sim::kVehicleSlots + sim::kPedestrianSlots;  // non-ego

struct RqConfig {
  int token_width = 5;
  int tokens = 1 + kParticipants;  // ego first, then vehicle slots, then pedestrians
  int embed_dim = 64;
  int blocks = 2;
  int heads = 2;
  int mlp_hidden = 128;
  double tc_min = 0.5;
  double tc_max = 4.0;
};

struct RqModel {
  RqConfig cfg;
  nn::ParamStore params;
};

RqModel rq_init(const RqConfig& cfg, std::uint64_t seed);

// Slices the 36-entry state into the 8 x 5 token matrix; pedestrian tokens
// are zero-padded from 3 to 5 features.
nn::Tensor tokenize(const sim::StateVector& x);

struct ForwardIds {
  int y = -1;      // encoded ego token after the final layer norm, 1 x D
  int tc = -1;     // regression head output, 1 x 1 (unclamped)
  int theta = -1;  // final-block attention, token x token, averaged over heads
};
ForwardIds rq_forward(nn::Graph& g, const nn::BoundParams& params, const RqConfig& cfg,
                      int tokens_id);

// Risk percentage from the predicted horizon: short horizon = high risk.
double rq_from_tc(double tc, double tc_min = 0.5, double tc_max = 4.0);

struct ImportanceResult {
  std::vector<double> scores;  // per participant, sums to 1
  std::vector<int> ranking;    // 1-based participant token indices, most important first
};
ImportanceResult importance_ranking(const nn::Tensor& theta);

struct RqEval {
  double tc_raw = 0.0;
  double tc = 0.0;  // clamped to [tc_min, tc_max]
  double rq_percent = 0.0;
  std::array<double, kParticipants> importance{};
  std::array<int, kParticipants> ranking{};
  nn::Tensor theta;
};
RqEval rq_evaluate(const RqModel& model, const sim::StateVector& x);

// Unclamped during training, clamped at inference.
double predict_tc(const RqModel& model, const sim::StateVector& x, bool clamp_output = true);

// ---- behavior-cloning dataset ----

struct DaRecord {
  sim::StateVector x{};
  double tc = 0.0;
};
using DaDataset = std::vector<DaRecord>;

void save_dataset_jsonl(const std::string& path, const DaDataset& data);
DaDataset load_dataset_jsonl(const std::string& path);

struct CollectConfig {
  sim::TrafficParams base_traffic;
  sim::Scenario scenario = sim::Scenario::a;
  planner::PidGains gains;
  int max_episode_steps = 600;
  double dt = sim::kDt;
};

// Rolls out the deterministic driving agent over freshly randomized traffic
// parameters each episode and records (state, T_c) pairs. sigmas_out, when
// given, receives the per-episode traffic parameters actually used.
DaDataset collect_da_dataset(const nn::ParamStore& actor, const agent::SacConfig& actor_cfg,
                             const agent::ActionBox& box, const CollectConfig& cc,
                             int n_target, std::uint64_t seed,
                             std::vector<sim::TrafficParams>* sigmas_out = nullptr);

struct TrainResult {
  std::vector<double> epoch_loss;  // mean training MSE per epoch
  double val_mse = 0.0;            // held-out MSE after the final epoch
};

TrainResult train_rq(const DaDataset& data, RqModel& model, int epochs, int batch_size,
                     double lr, std::uint64_t seed, double val_fraction = 0.1);

}  // namespace ssev::rq
