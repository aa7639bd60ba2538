#include "ssev/rq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace ssev::rq {

using nn::BoundParams;
using nn::Graph;
using nn::Tensor;

RqModel rq_init(const RqConfig& cfg, std::uint64_t seed) {
  if (cfg.embed_dim % cfg.heads != 0) throw nn::NnError("rq_init: embed_dim % heads != 0");
  RqModel m;
  m.cfg = cfg;
  Rng rng(seed);
  const int d = cfg.embed_dim;

  m.params.add("embed.E", nn::glorot_uniform(cfg.token_width, d, rng));
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string p = "blk" + std::to_string(b) + ".";
    m.params.add(p + "ln1.gain", nn::ones(1, d));
    m.params.add(p + "ln1.bias", nn::zeros(1, d));
    m.params.add(p + "qkv.W", nn::glorot_uniform(d, 3 * d, rng));
    m.params.add(p + "qkv.b", nn::zeros(1, 3 * d));
    m.params.add(p + "attn_out.W", nn::glorot_uniform(d, d, rng));
    m.params.add(p + "attn_out.b", nn::zeros(1, d));
    m.params.add(p + "ln2.gain", nn::ones(1, d));
    m.params.add(p + "ln2.bias", nn::zeros(1, d));
    m.params.add(p + "mlp.h.W", nn::glorot_uniform(d, cfg.mlp_hidden, rng));
    m.params.add(p + "mlp.h.b", nn::zeros(1, cfg.mlp_hidden));
    m.params.add(p + "mlp.out.W", nn::glorot_uniform(cfg.mlp_hidden, d, rng));
    m.params.add(p + "mlp.out.b", nn::zeros(1, d));
  }
  m.params.add("final_ln.gain", nn::ones(1, d));
  m.params.add("final_ln.bias", nn::zeros(1, d));
  m.params.add("head.W", nn::glorot_uniform(d, 1, rng));
  m.params.add("head.b", nn::zeros(1, 1));
  return m;
}

nn::Tensor tokenize(const sim::StateVector& x) {
  Tensor t(1 + kParticipants, 5);
  for (int c = 0; c < 5; ++c) t.at(0, c) = x[static_cast<size_t>(c)];
  for (int v = 0; v < sim::kVehicleSlots; ++v)
    for (int c = 0; c < 5; ++c) t.at(1 + v, c) = x[static_cast<size_t>(5 + 5 * v + c)];
  for (int p = 0; p < sim::kPedestrianSlots; ++p) {
    const int base = 5 + 5 * sim::kVehicleSlots + 3 * p;
    for (int c = 0; c < 3; ++c)
      t.at(1 + sim::kVehicleSlots + p, c) = x[static_cast<size_t>(base + c)];
    // remaining two feature columns stay zero
  }
  return t;
}

ForwardIds rq_forward(Graph& g, const BoundParams& params, const RqConfig& cfg,
                      int tokens_id) {
  const int d = cfg.embed_dim;
  const int dh = d / cfg.heads;

  int z = g.matmul(tokens_id, params.id("embed.E"));  // h0, tokens x D
  int theta = -1;
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string p = "blk" + std::to_string(b) + ".";
    const int normed = nn::layer_norm(g, z, params.id(p + "ln1.gain"), params.id(p + "ln1.bias"));
    const int qkv = nn::dense(g, normed, params.id(p + "qkv.W"), params.id(p + "qkv.b"));

    int concat = -1;
    int theta_sum = -1;
    for (int h = 0; h < cfg.heads; ++h) {
      const int q = g.slice_cols(qkv, h * dh, (h + 1) * dh);
      const int k = g.slice_cols(qkv, d + h * dh, d + (h + 1) * dh);
      const int v = g.slice_cols(qkv, 2 * d + h * dh, 2 * d + (h + 1) * dh);
      const nn::AttentionOut att = nn::scaled_dot_attention(g, q, k, v);
      concat = concat < 0 ? att.output : g.concat_cols(concat, att.output);
      theta_sum = theta_sum < 0 ? att.scores : g.add(theta_sum, att.scores);
    }
    const int msa =
        nn::dense(g, concat, params.id(p + "attn_out.W"), params.id(p + "attn_out.b"));
    const int z1 = g.add(msa, z);

    const int normed2 =
        nn::layer_norm(g, z1, params.id(p + "ln2.gain"), params.id(p + "ln2.bias"));
    const int hidden = g.relu(nn::dense(g, normed2, params.id(p + "mlp.h.W"), params.id(p + "mlp.h.b")));
    const int mlp = nn::dense(g, hidden, params.id(p + "mlp.out.W"), params.id(p + "mlp.out.b"));
    z = g.add(mlp, z1);

    if (b == cfg.blocks - 1) theta = g.scale(theta_sum, 1.0 / cfg.heads);
  }
  if (theta < 0) {  // degenerate zero-block config: uniform attention
    const int n = g.value(z).rows;
    nn::Tensor uniform(n, n);
    for (double& v : uniform.data) v = 1.0 / n;
    theta = g.constant(std::move(uniform));
  }

  ForwardIds out;
  // Ego token = first row, taken via a row-selection matrix.
  Tensor sel(1, g.value(z).rows);
  sel.at(0, 0) = 1.0;
  const int ego = g.matmul(g.constant(std::move(sel)), z);  // 1 x D
  out.y = nn::layer_norm(g, ego, params.id("final_ln.gain"), params.id("final_ln.bias"));
  out.tc = nn::dense(g, out.y, params.id("head.W"), params.id("head.b"));
  out.theta = theta;
  return out;
}

double rq_from_tc(double tc, double tc_min, double tc_max) {
  const double t = std::clamp(tc, tc_min, tc_max);
  return (tc_max - t) / (tc_max - tc_min) * 100.0;
}

ImportanceResult importance_ranking(const Tensor& theta) {
  if (theta.rows != theta.cols || theta.rows < 2)
    throw nn::NnError("importance_ranking: expected square attention with >= 2 tokens");
  const int n = theta.cols - 1;
  ImportanceResult out;
  out.scores.resize(static_cast<size_t>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    out.scores[static_cast<size_t>(i)] = theta.at(0, i + 1);
    total += out.scores[static_cast<size_t>(i)];
  }
  if (total > 0.0)
    for (double& s : out.scores) s /= total;

  out.ranking.resize(static_cast<size_t>(n));
  std::iota(out.ranking.begin(), out.ranking.end(), 1);
  std::stable_sort(out.ranking.begin(), out.ranking.end(), [&](int a, int b) {
    return out.scores[static_cast<size_t>(a - 1)] > out.scores[static_cast<size_t>(b - 1)];
  });
  return out;
}

RqEval rq_evaluate(const RqModel& model, const sim::StateVector& x) {
  Graph g;
  BoundParams bound;
  bound.store = &model.params;
  for (const auto& e : model.params.entries) bound.ids.push_back(g.constant(e.value));
  const ForwardIds ids = rq_forward(g, bound, model.cfg, g.constant(tokenize(x)));

  RqEval ev;
  ev.tc_raw = g.value(ids.tc).item();
  ev.tc = std::clamp(ev.tc_raw, model.cfg.tc_min, model.cfg.tc_max);
  ev.rq_percent = rq_from_tc(ev.tc, model.cfg.tc_min, model.cfg.tc_max);
  ev.theta = g.value(ids.theta);
  const ImportanceResult ir = importance_ranking(ev.theta);
  for (int i = 0; i < kParticipants; ++i) {
    ev.importance[static_cast<size_t>(i)] = ir.scores[static_cast<size_t>(i)];
    ev.ranking[static_cast<size_t>(i)] = ir.ranking[static_cast<size_t>(i)];
  }
  return ev;
}

double predict_tc(const RqModel& model, const sim::StateVector& x, bool clamp_output) {
  Graph g;
  BoundParams bound;
  bound.store = &model.params;
  for (const auto& e : model.params.entries) bound.ids.push_back(g.constant(e.value));
  const ForwardIds ids = rq_forward(g, bound, model.cfg, g.constant(tokenize(x)));
  const double raw = g.value(ids.tc).item();
  return clamp_output ? std::clamp(raw, model.cfg.tc_min, model.cfg.tc_max) : raw;
}

void save_dataset_jsonl(const std::string& path, const DaDataset& data) {
  std::ofstream os(path);
  if (!os) throw nn::NnError("save_dataset_jsonl: cannot open " + path);
  for (const auto& rec : data) {
    nlohmann::json j;
    j["x"] = rec.x;
    j["tc"] = rec.tc;
    os << j.dump() << "\n";
  }
}

DaDataset load_dataset_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw nn::NnError("load_dataset_jsonl: cannot open " + path);
  DaDataset data;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    DaRecord rec;
    const auto& xs = j.at("x");
    if (xs.size() != rec.x.size()) throw nn::NnError("load_dataset_jsonl: bad state length");
    for (size_t i = 0; i < rec.x.size(); ++i) rec.x[i] = xs[i].get<double>();
    rec.tc = j.at("tc").get<double>();
    data.push_back(rec);
  }
  return data;
}

DaDataset collect_da_dataset(const nn::ParamStore& actor, const agent::SacConfig& actor_cfg,
                             const agent::ActionBox& box, const CollectConfig& cc,
                             int n_target, std::uint64_t seed,
                             std::vector<sim::TrafficParams>* sigmas_out) {
  DaDataset data;
  data.reserve(static_cast<size_t>(std::max(0, n_target)));
  Rng master(seed);
  Rng policy_rng(master.next_u64());  // unused by the deterministic policy

  int episode = 0;
  while (static_cast<int>(data.size()) < n_target) {
    // Fresh sigma per episode: jitter the traffic distribution.
    Rng sigma_rng = master.split(static_cast<std::uint64_t>(episode) + 1);
    sim::TrafficParams sigma = cc.base_traffic;
    const double lo = sigma_rng.uniform(6.0, 9.0);
    sigma.speed_low = lo;
    sigma.speed_high = lo + sigma_rng.uniform(2.0, 5.0);
    sigma.vehicle_count_min =
        static_cast<int>(sigma_rng.uniform_int(cc.base_traffic.vehicle_count_min - 2,
                                               cc.base_traffic.vehicle_count_min + 2));
    sigma.vehicle_count_min = std::max(0, sigma.vehicle_count_min);
    sigma.vehicle_count_max = sigma.vehicle_count_min +
                              static_cast<int>(sigma_rng.uniform_int(2, 6));
    sigma.idm.time_headway = cc.base_traffic.idm.time_headway * sigma_rng.uniform(0.8, 1.2);
    sigma.idm.max_accel = cc.base_traffic.idm.max_accel * sigma_rng.uniform(0.8, 1.2);

    if (sigmas_out) sigmas_out->push_back(sigma);
    sim::WorldState world = sim::spawn_scenario(sigma_rng.next_u64(), cc.scenario, sigma);
    planner::PidState pid;
    for (int step = 0; step < cc.max_episode_steps; ++step) {
      const sim::StateVector x = sim::observe(world);
      const agent::PolicySample ps =
          agent::sample_action(actor, actor_cfg, box, x, /*stochastic=*/false, policy_rng);
      const agent::ActionPhi act{ps.action[0], ps.action[1], ps.action[2]};
      data.push_back({x, act.t_c});
      if (static_cast<int>(data.size()) >= n_target) break;

      const agent::PlanRequest req = agent::act_to_plan(act, world.ego, world.lanes);
      const planner::Trajectory traj = planner::make_trajectory(req.lat, req.lon, req.horizon);
      const planner::Controls ctrl = planner::pid_track(traj, world.ego, cc.gains.preview,
                                                        cc.gains, pid, req.mode, cc.dt);
      sim::step_world(world, {ctrl.steer, ctrl.accel}, cc.dt);
      if (sim::detect_collision(world) || world.ego.s >= world.lanes.road_length) break;
    }
    ++episode;
  }
  return data;
}

TrainResult train_rq(const DaDataset& data, RqModel& model, int epochs, int batch_size,
                     double lr, std::uint64_t seed, double val_fraction) {
  if (data.empty()) throw nn::NnError("train_rq: empty dataset");
  Rng rng(seed);

  // Fixed-seed shuffle, then a 90/10 style split.
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (size_t i = order.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
    std::swap(order[i - 1], order[j]);
  }
  size_t val_count = static_cast<size_t>(std::floor(val_fraction * data.size()));
  if (data.size() > 1 && val_count == 0 && val_fraction > 0.0) val_count = 1;
  if (val_count >= data.size()) val_count = data.size() - 1;
  const size_t train_count = data.size() - val_count;

  const nn::AdamConfig adam{lr, 0.9, 0.999, 1e-8};

  auto batch_loss = [&](const std::vector<size_t>& idx, bool update) -> double {
    Graph g;
    BoundParams bound;
    if (update) {
      bound = nn::bind_params(g, model.params);
    } else {
      bound.store = &model.params;
      for (const auto& e : model.params.entries) bound.ids.push_back(g.constant(e.value));
    }
    int preds = -1;
    for (size_t i : idx) {
      const ForwardIds ids = rq_forward(g, bound, model.cfg, g.constant(tokenize(data[i].x)));
      preds = preds < 0 ? ids.tc : g.concat_cols(preds, ids.tc);
    }
    Tensor labels(1, static_cast<int>(idx.size()));
    for (size_t i = 0; i < idx.size(); ++i)
      labels.data[i] = data[idx[i]].tc;
    const int loss = g.mean(g.square(g.sub(preds, g.constant(std::move(labels)))));
    const double value = g.value(loss).item();
    if (update) {
      g.backward(loss);
      nn::adam_step_from_graph(model.params, g, bound, adam);
    }
    return value;
  };

  TrainResult result;
  std::vector<size_t> perm(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_count));
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (size_t i = perm.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(perm[i - 1], perm[j]);
    }
    double acc = 0.0;
    size_t batches = 0;
    for (size_t start = 0; start < perm.size(); start += static_cast<size_t>(batch_size)) {
      const size_t end = std::min(perm.size(), start + static_cast<size_t>(batch_size));
      std::vector<size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(start),
                              perm.begin() + static_cast<std::ptrdiff_t>(end));
      acc += batch_loss(idx, /*update=*/true);
      ++batches;
    }
    result.epoch_loss.push_back(batches > 0 ? acc / static_cast<double>(batches) : 0.0);
  }

  // Held-out MSE (plain forward, no clamping: measures cloning fidelity).
  if (val_count > 0) {
    double acc = 0.0;
    size_t n = 0;
    for (size_t start = train_count; start < data.size(); start += 256) {
      const size_t end = std::min(data.size(), start + 256);
      std::vector<size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                              order.begin() + static_cast<std::ptrdiff_t>(end));
      acc += batch_loss(idx, /*update=*/false) * static_cast<double>(idx.size());
      n += idx.size();
    }
    result.val_mse = acc / static_cast<double>(n);
  } else {
    result.val_mse = 0.0;
  }
  return result;
}

}  // namespace ssev::rq
