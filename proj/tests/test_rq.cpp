#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssev/rq.hpp"

using namespace ssev;
using namespace ssev::rq;

namespace {

sim::StateVector random_state(Rng& rng) {
  sim::StateVector x;
  for (double& v : x) v = rng.uniform(-1, 1);
  return x;
}

nn::BoundParams bind_const(nn::Graph& g, const nn::ParamStore& store) {
  nn::BoundParams b;
  b.store = &store;
  for (const auto& e : store.entries) b.ids.push_back(g.constant(e.value));
  return b;
}

}  // namespace

TEST_CASE("tokenize: layout and pedestrian zero-padding") {
  sim::StateVector x;
  std::iota(x.begin(), x.end(), 0.0);
  const nn::Tensor t = tokenize(x);
  REQUIRE(t.rows == 8);
  REQUIRE(t.cols == 5);
  for (int c = 0; c < 5; ++c) CHECK(t.at(0, c) == c);           // ego
  for (int c = 0; c < 5; ++c) CHECK(t.at(1, c) == 5 + c);       // vehicle slot 1
  for (int c = 0; c < 5; ++c) CHECK(t.at(5, c) == 25 + c);      // vehicle slot 5
  for (int c = 0; c < 3; ++c) CHECK(t.at(6, c) == 30 + c);      // pedestrian 1
  CHECK(t.at(6, 3) == 0.0);
  CHECK(t.at(6, 4) == 0.0);
  for (int c = 0; c < 3; ++c) CHECK(t.at(7, c) == 33 + c);      // pedestrian 2
  CHECK(t.at(7, 3) == 0.0);
  CHECK(t.at(7, 4) == 0.0);
}

TEST_CASE("embed: zero projection gives zero embeddings") {
  RqConfig cfg;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  RqModel m = rq_init(cfg, 1);
  for (double& v : m.params.at("embed.E").data) v = 0.0;
  Rng rng(2);
  nn::Graph g;
  const nn::BoundParams bound = bind_const(g, m.params);
  const int tokens = g.constant(tokenize(random_state(rng)));
  const int h0 = g.matmul(tokens, bound.id("embed.E"));
  for (double v : g.value(h0).data) CHECK(v == 0.0);
}

TEST_CASE("embed: identical tokens embed identically and match a matmul oracle") {
  RqConfig cfg;
  cfg.embed_dim = 16;
  RqModel m = rq_init(cfg, 3);
  Rng rng(4);
  sim::StateVector x = random_state(rng);
  for (int c = 0; c < 5; ++c) x[static_cast<size_t>(10 + c)] = x[static_cast<size_t>(5 + c)];

  const nn::Tensor tokens = tokenize(x);
  nn::Graph g;
  const nn::BoundParams bound = bind_const(g, m.params);
  const int h0 = g.matmul(g.constant(tokens), bound.id("embed.E"));
  const nn::Tensor& E = m.params.at("embed.E");
  const nn::Tensor& h = g.value(h0);

  for (int c = 0; c < 16; ++c) CHECK(h.at(1, c) == h.at(2, c));
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 16; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 5; ++k) acc += tokens.at(r, k) * E.at(k, c);
      CHECK(std::abs(h.at(r, c) - acc) < 1e-12);
    }
}

TEST_CASE("encoder: zero blocks reduce to the layer-normed ego embedding") {
  RqConfig cfg;
  cfg.blocks = 0;
  cfg.embed_dim = 8;
  RqModel m = rq_init(cfg, 5);
  Rng rng(6);
  const sim::StateVector x = random_state(rng);

  nn::Graph g;
  const nn::BoundParams bound = bind_const(g, m.params);
  const ForwardIds ids = rq_forward(g, bound, cfg, g.constant(tokenize(x)));

  // Oracle: embed, take the ego row, layer-norm it.
  nn::Graph g2;
  const nn::BoundParams b2 = bind_const(g2, m.params);
  const int h0 = g2.matmul(g2.constant(tokenize(x)), b2.id("embed.E"));
  nn::Tensor sel(1, 8);
  sel.at(0, 0) = 1.0;
  const int ego = g2.matmul(g2.constant(std::move(sel)), h0);
  const int y = nn::layer_norm(g2, ego, b2.id("final_ln.gain"), b2.id("final_ln.bias"));
  for (int c = 0; c < cfg.embed_dim; ++c)
    CHECK(g.value(ids.y).data[static_cast<size_t>(c)] ==
          doctest::Approx(g2.value(y).data[static_cast<size_t>(c)]).epsilon(1e-12));
}

TEST_CASE("encoder: attention rows sum to one after head averaging") {
  RqModel m = rq_init({}, 7);
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const RqEval ev = rq_evaluate(m, random_state(rng));
    REQUIRE(ev.theta.rows == 8);
    for (int r = 0; r < ev.theta.rows; ++r) {
      double acc = 0.0;
      for (int c = 0; c < ev.theta.cols; ++c) acc += ev.theta.at(r, c);
      CHECK(acc == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("encoder: single-block single-head micro-config matches a hand composition") {
  RqConfig cfg;
  cfg.embed_dim = 4;
  cfg.blocks = 1;
  cfg.heads = 1;
  cfg.mlp_hidden = 6;
  RqModel m = rq_init(cfg, 9);
  Rng rng(10);
  const sim::StateVector x = random_state(rng);
  const nn::Tensor tokens = tokenize(x);

  nn::Graph g;
  const nn::BoundParams bound = bind_const(g, m.params);
  const ForwardIds ids = rq_forward(g, bound, cfg, g.constant(tokens));

  // Independent composition of the same primitives, step by step.
  nn::Graph o;
  const nn::BoundParams p = bind_const(o, m.params);
  const int d = cfg.embed_dim;
  const int h0 = o.matmul(o.constant(tokens), p.id("embed.E"));
  const int n1 = nn::layer_norm(o, h0, p.id("blk0.ln1.gain"), p.id("blk0.ln1.bias"));
  const int qkv = nn::dense(o, n1, p.id("blk0.qkv.W"), p.id("blk0.qkv.b"));
  const int q = o.slice_cols(qkv, 0, d);
  const int k = o.slice_cols(qkv, d, 2 * d);
  const int v = o.slice_cols(qkv, 2 * d, 3 * d);
  const int logits = o.scale(o.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  const int theta = o.softmax_rows(logits);
  const int att = o.matmul(theta, v);
  const int msa = nn::dense(o, att, p.id("blk0.attn_out.W"), p.id("blk0.attn_out.b"));
  const int z1 = o.add(msa, h0);
  const int n2 = nn::layer_norm(o, z1, p.id("blk0.ln2.gain"), p.id("blk0.ln2.bias"));
  const int hidden = o.relu(nn::dense(o, n2, p.id("blk0.mlp.h.W"), p.id("blk0.mlp.h.b")));
  const int mlp = nn::dense(o, hidden, p.id("blk0.mlp.out.W"), p.id("blk0.mlp.out.b"));
  const int z = o.add(mlp, z1);
  nn::Tensor sel(1, 8);
  sel.at(0, 0) = 1.0;
  const int ego = o.matmul(o.constant(std::move(sel)), z);
  const int y = nn::layer_norm(o, ego, p.id("final_ln.gain"), p.id("final_ln.bias"));
  const int tc = nn::dense(o, y, p.id("head.W"), p.id("head.b"));

  CHECK(g.value(ids.tc).item() == doctest::Approx(o.value(tc).item()).epsilon(1e-10));
  for (int c = 0; c < d; ++c)
    CHECK(g.value(ids.y).data[static_cast<size_t>(c)] ==
          doctest::Approx(o.value(y).data[static_cast<size_t>(c)]).epsilon(1e-10));
  for (int i = 0; i < 64; ++i)
    CHECK(g.value(ids.theta).data[static_cast<size_t>(i)] ==
          doctest::Approx(o.value(theta).data[static_cast<size_t>(i)]).epsilon(1e-10));
}

TEST_CASE("predict_tc: zero-initialized head returns its bias, clamped at inference") {
  RqModel m = rq_init({}, 11);
  for (double& v : m.params.at("head.W").data) v = 0.0;
  m.params.at("head.b").data[0] = 5.1;
  Rng rng(12);
  const sim::StateVector x = random_state(rng);
  CHECK(predict_tc(m, x, /*clamp_output=*/false) == doctest::Approx(5.1).epsilon(1e-12));
  CHECK(predict_tc(m, x, /*clamp_output=*/true) == doctest::Approx(4.0).epsilon(1e-12));
  m.params.at("head.b").data[0] = 0.1;
  CHECK(predict_tc(m, x, /*clamp_output=*/true) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("rq_from_tc: endpoints, midpoint, strict monotonicity") {
  CHECK(rq_from_tc(0.5) == doctest::Approx(100.0));
  CHECK(rq_from_tc(4.0) == doctest::Approx(0.0));
  CHECK(rq_from_tc(2.25) == doctest::Approx(50.0));
  double last = 101.0;
  for (double tc = 0.5; tc <= 4.0; tc += 0.05) {
    const double rq = rq_from_tc(tc);
    CHECK(rq < last);
    last = rq;
  }
}

TEST_CASE("importance_ranking: ties break toward the lower participant index") {
  nn::Tensor theta(3, 3);
  theta.at(0, 0) = 0.5;
  theta.at(0, 1) = 0.25;
  theta.at(0, 2) = 0.25;
  const ImportanceResult ir = importance_ranking(theta);
  CHECK(ir.ranking == std::vector<int>{1, 2});
  CHECK(ir.scores[0] == doctest::Approx(0.5));
  CHECK(ir.scores[1] == doctest::Approx(0.5));
}

TEST_CASE("importance_ranking: highest-attention participant leads") {
  nn::Tensor theta(6, 6);
  const double row[6] = {0.0, 0.1, 0.5, 0.2, 0.15, 0.05};
  for (int c = 0; c < 6; ++c) theta.at(0, c) = row[c];
  const ImportanceResult ir = importance_ranking(theta);
  CHECK(ir.ranking.front() == 2);
  CHECK(ir.ranking == std::vector<int>{2, 3, 4, 1, 5});
}

TEST_CASE("importance_ranking: matches a brute-force stable sort oracle") {
  Rng rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 7;
    nn::Tensor theta(n + 1, n + 1);
    for (int c = 0; c <= n; ++c) theta.at(0, c) = rng.uniform(0.0, 1.0);
    if (trial % 7 == 0) theta.at(0, 2) = theta.at(0, 5);  // force occasional ties
    const ImportanceResult ir = importance_ranking(theta);

    std::vector<int> oracle(static_cast<size_t>(n));
    std::iota(oracle.begin(), oracle.end(), 1);
    std::stable_sort(oracle.begin(), oracle.end(), [&](int a, int b) {
      return theta.at(0, a) > theta.at(0, b);
    });
    CHECK(ir.ranking == oracle);

    double total = 0.0;
    for (double s : ir.scores) {
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
      total += s;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("permutation consistency: vehicle-slot swap permutes scores only") {
  RqModel m = rq_init({}, 14);
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    sim::StateVector x = random_state(rng);
    const RqEval base = rq_evaluate(m, x);

    sim::StateVector swapped = x;
    for (int c = 0; c < 5; ++c) std::swap(swapped[static_cast<size_t>(5 + c)], swapped[static_cast<size_t>(15 + c)]);
    const RqEval perm = rq_evaluate(m, swapped);

    CHECK(perm.rq_percent == doctest::Approx(base.rq_percent).epsilon(1e-9));
    CHECK(perm.importance[0] == doctest::Approx(base.importance[2]).epsilon(1e-9));
    CHECK(perm.importance[2] == doctest::Approx(base.importance[0]).epsilon(1e-9));
    for (int i : {1, 3, 4, 5, 6})
      CHECK(perm.importance[static_cast<size_t>(i)] ==
            doctest::Approx(base.importance[static_cast<size_t>(i)]).epsilon(1e-9));
  }
}

TEST_CASE("train_rq: constant labels are learned quickly") {
  RqConfig cfg;
  cfg.embed_dim = 16;
  cfg.blocks = 1;
  cfg.heads = 2;
  cfg.mlp_hidden = 16;
  RqModel m = rq_init(cfg, 16);
  Rng rng(17);
  DaDataset data;
  for (int i = 0; i < 400; ++i) data.push_back({random_state(rng), 2.0});
  const TrainResult tr = train_rq(data, m, 50, 32, 1e-2, 18);
  CHECK(tr.val_mse <= 1e-3);
}

TEST_CASE("train_rq: loss on a frozen batch decreases over the first updates") {
  RqConfig cfg;
  cfg.embed_dim = 16;
  cfg.blocks = 1;
  cfg.mlp_hidden = 16;
  RqModel m = rq_init(cfg, 19);
  Rng rng(20);
  DaDataset data;
  for (int i = 0; i < 32; ++i)
    data.push_back({random_state(rng), rng.uniform(0.5, 4.0)});
  // One epoch at batch == dataset size is exactly one update on the frozen batch.
  std::vector<double> losses;
  for (int i = 0; i < 10; ++i) {
    const TrainResult tr = train_rq(data, m, 1, 32, 1e-3, 21, /*val_fraction=*/0.0);
    losses.push_back(tr.epoch_loss.at(0));
  }
  CHECK(losses.back() < losses.front());
}

TEST_CASE("train_rq: a single record is overfit to machine precision") {
  RqConfig cfg;
  cfg.embed_dim = 16;
  cfg.blocks = 1;
  cfg.mlp_hidden = 16;
  RqModel m = rq_init(cfg, 22);
  Rng rng(23);
  DaDataset data{{random_state(rng), 1.7}};
  const TrainResult tr = train_rq(data, m, 400, 1, 1e-2, 24, /*val_fraction=*/0.0);
  CHECK(tr.epoch_loss.back() <= 1e-6);
}

TEST_CASE("dataset jsonl round trip") {
  Rng rng(25);
  DaDataset data;
  for (int i = 0; i < 10; ++i) data.push_back({random_state(rng), rng.uniform(0.5, 4.0)});
  const std::string path = "/tmp/ssev_test_da.jsonl";
  save_dataset_jsonl(path, data);
  const DaDataset loaded = load_dataset_jsonl(path);
  REQUIRE(loaded.size() == data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    CHECK(loaded[i].tc == data[i].tc);
    for (size_t j = 0; j < data[i].x.size(); ++j) CHECK(loaded[i].x[j] == data[i].x[j]);
  }
}

TEST_CASE("collect_da_dataset: contract on count, labels, and per-episode sigma") {
  const agent::ActionBox box = agent::phi_action_box();
  agent::SacConfig cfg;
  cfg.action_dim = 3;
  cfg.hidden_width = 16;
  cfg.actor_layers = 2;
  cfg.critic_layers = 2;
  const agent::SacNets nets = agent::SacNets::init(cfg, box, 26);

  CollectConfig cc;
  cc.max_episode_steps = 40;  // force several episodes

  SUBCASE("zero target yields an empty dataset") {
    const DaDataset data = collect_da_dataset(nets.actor, cfg, box, cc, 0, 1);
    CHECK(data.empty());
  }

  SUBCASE("exact count, boxed labels, episode-wise sigma variation") {
    std::vector<sim::TrafficParams> sigmas;
    const DaDataset data = collect_da_dataset(nets.actor, cfg, box, cc, 150, 2, &sigmas);
    CHECK(data.size() == 150);
    for (const auto& rec : data) {
      CHECK(rec.tc >= 0.5);
      CHECK(rec.tc <= 4.0);
    }
    REQUIRE(sigmas.size() >= 2);
    bool varies = false;
    for (size_t i = 1; i < sigmas.size(); ++i)
      if (sigmas[i].speed_low != sigmas[0].speed_low ||
          sigmas[i].vehicle_count_max != sigmas[0].vehicle_count_max)
        varies = true;
    CHECK(varies);
  }
}
