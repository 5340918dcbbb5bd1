#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "mqgrad/cluster.hpp"
#include "mqgrad/codec.hpp"
#include "mqgrad/policy.hpp"
#include "mqgrad/reference.hpp"

using namespace mqgrad;

namespace {

const kern::KernelTable& kt() { return kern::parallel_kernels(); }

ModelSpec small_spec() {
  ModelSpec spec;
  spec.layer_sizes = {6, 8, 3};
  spec.l2_coeff = 1e-4f;
  return spec;
}

ClusterConfig small_cluster(long long iters, int workers = 4) {
  ClusterConfig c;
  c.workers = workers;
  c.max_iters = iters;
  return c;
}

bool trace_equal(const TraceRecord& a, const TraceRecord& b) {
  return a.iter == b.iter && a.sim_time_ms == b.sim_time_ms &&
         a.loss == b.loss && a.bits == b.bits && a.bytes == b.bytes &&
         a.has_mdp == b.has_mdp && a.mdp_t == b.mdp_t &&
         a.action == b.action && a.has_reward == b.has_reward &&
         a.reward == b.reward;
}

}  // namespace

TEST_SUITE("cluster") {

TEST_CASE("loss aggregation is the worker mean") {
  CHECK(aggregate_losses({1.0, 2.0, 3.0}, 3) == 2.0);
  CHECK_THROWS_AS(aggregate_losses({1.0, 2.0}, 3), std::runtime_error);
}

TEST_CASE("gradient aggregation averages in worker order") {
  ParamVector a, b;
  a.values = {1.0f, 3.0f};
  a.shapes = {{1, 2}};
  b.values = {3.0f, 5.0f};
  b.shapes = {{1, 2}};
  ParamVector m = aggregate_gradients({a, b}, kt());
  CHECK(m.values == std::vector<float>{2.0f, 4.0f});

  b.values = {1.0f};
  CHECK_THROWS_AS(aggregate_gradients({a, b}, kt()), std::runtime_error);
}

TEST_CASE("link time is latency plus bytes over bandwidth") {
  ClusterConfig cfg;
  cfg.bandwidth = 1e7;
  cfg.latency_ms = 1.0;
  CHECK(comm_time_ms(1000000, cfg) == 101.0);
  CHECK(comm_time_ms(0, cfg) == 1.0);
  // linear in bytes once latency is removed
  double t1 = comm_time_ms(1000, cfg) - cfg.latency_ms;
  double t2 = comm_time_ms(3000, cfg) - cfg.latency_ms;
  CHECK(t2 == doctest::Approx(3.0 * t1).epsilon(1e-12));
  CHECK_THROWS_AS(comm_time_ms(-1, cfg), std::invalid_argument);
}

TEST_CASE("clock: one worker, bare links, 517-byte messages") {
  ClusterConfig cfg;
  cfg.workers = 1;
  cfg.bandwidth = 1e7;
  cfg.latency_ms = 0.0;
  cfg.compute_ms_per_iter = 0.0;
  cfg.quantize_ms_per_kelem = 0.0;
  IterTiming t = advance_clock(cfg, 517, 517, 0, false);
  CHECK(t.total() == doctest::Approx(0.1034).epsilon(1e-12));
  CHECK(t.push_ms == doctest::Approx(0.0517).epsilon(1e-12));
  CHECK(t.broadcast_ms == doctest::Approx(0.0517).epsilon(1e-12));
}

TEST_CASE("clock: zero-size messages leave compute plus pure latency") {
  ClusterConfig cfg;
  cfg.workers = 3;
  cfg.latency_ms = 0.02;
  cfg.compute_ms_per_iter = 0.3;
  cfg.quantize_ms_per_kelem = 0.0;
  IterTiming t = advance_clock(cfg, 0, 0, 0, false);
  // P pushes + 1 broadcast + (P+1) control hops = 2(P+1) latency terms
  CHECK(t.total() == doctest::Approx(0.3 + 2 * (3 + 1) * 0.02).epsilon(1e-12));
}

TEST_CASE("clock: transfer time ratio of K=8 to K=2 approaches 4") {
  ClusterConfig cfg;
  cfg.latency_ms = 0.0;
  const long long len = 1000;
  IterTiming t8 = advance_clock(cfg, encoded_size_bytes(len, 8),
                                encoded_size_bytes(len, 8), 0, false);
  IterTiming t2 = advance_clock(cfg, encoded_size_bytes(len, 2),
                                encoded_size_bytes(len, 2), 0, false);
  double r = (t8.push_ms + t8.broadcast_ms) / (t2.push_ms + t2.broadcast_ms);
  CHECK(r > 3.5);
  CHECK(r <= 4.0);
}

TEST_CASE("clock: codec work scales with P+3 passes and the mdp flag") {
  ClusterConfig cfg;
  cfg.workers = 5;
  cfg.quantize_ms_per_kelem = 0.02;
  cfg.mdp_ms = 1.5;
  IterTiming t = advance_clock(cfg, 0, 0, 2000, true);
  CHECK(t.codec_ms == doctest::Approx(0.02 * 2.0 * (5 + 3)).epsilon(1e-12));
  CHECK(t.mdp_ms == 1.5);
  CHECK(advance_clock(cfg, 0, 0, 2000, false).mdp_ms == 0.0);
}

TEST_CASE("serial ingress queues the pushes; parallel links do not") {
  ClusterConfig cfg;
  cfg.workers = 4;
  cfg.latency_ms = 0.0;
  IterTiming serial = advance_clock(cfg, 1000, 0, 0, false);
  cfg.serial_ingress = false;
  IterTiming parallel = advance_clock(cfg, 1000, 0, 0, false);
  CHECK(serial.push_ms == doctest::Approx(4.0 * parallel.push_ms).epsilon(1e-12));
}

TEST_CASE("workers walk their row shards cyclically") {
  DataSplit train;
  train.rows = 10;
  train.dim = 2;
  train.x.resize(20);
  train.y.resize(10);
  for (int r = 0; r < 10; ++r) {
    train.x[r * 2] = static_cast<float>(r);
    train.x[r * 2 + 1] = static_cast<float>(-r);
    train.y[r] = r;
  }

  std::vector<float> bx;
  std::vector<int> by;
  gather_batch(train, 2, 0, 0, 3, bx, by);
  CHECK(by == std::vector<int>{0, 2, 4});
  CHECK(bx[0] == 0.0f);
  CHECK(bx[2] == 2.0f);
  CHECK(bx[4] == 4.0f);
  gather_batch(train, 2, 0, 1, 3, bx, by);
  CHECK(by == std::vector<int>{6, 8, 0});  // wraps around the shard
  gather_batch(train, 2, 1, 0, 3, bx, by);
  CHECK(by == std::vector<int>{1, 3, 5});  // odd rows belong to worker 1
}

TEST_CASE("passthrough run reproduces the single-process reference exactly") {
  Dataset data = gen_synthetic(5, 400, 6, 3);
  ModelSpec spec = small_spec();
  TrainConfig train;
  ClusterConfig cluster = small_cluster(100);

  RunResult sim = run_training(cluster, spec, train, data, nullptr, 5, 0, kt());
  ReferenceResult ref = run_reference(spec, train, data, cluster.workers, 100, 5);

  REQUIRE(sim.trace.size() == 100);
  for (int m = 0; m < 100; ++m) {
    CHECK(sim.trace[m].loss == ref.losses[m]);
    CHECK(sim.trace[m].bits == 32);
  }
  CHECK(sim.final_params.values == ref.params.values);
  CHECK(sim.trace.back().loss < sim.trace.front().loss);
}

TEST_CASE("simulated run is bitwise reproducible") {
  Dataset data = gen_synthetic(6, 400, 6, 3);
  ModelSpec spec = small_spec();
  TrainConfig train;
  ClusterConfig cluster = small_cluster(60);

  MqgradPolicy p1(MdpHyper{}, 6), p2(MdpHyper{}, 6);
  RunResult r1 = run_training(cluster, spec, train, data, &p1, 6, 20, kt());
  RunResult r2 = run_training(cluster, spec, train, data, &p2, 6, 20, kt());
  REQUIRE(r1.trace.size() == r2.trace.size());
  for (std::size_t i = 0; i < r1.trace.size(); ++i)
    CHECK(trace_equal(r1.trace[i], r2.trace[i]));
  CHECK(r1.final_params.values == r2.final_params.values);
  CHECK(r1.total_bytes == r2.total_bytes);
  REQUIRE(r1.probes.size() == r2.probes.size());
  for (std::size_t i = 0; i < r1.probes.size(); ++i) {
    CHECK(r1.probes[i].test_accuracy == r2.probes[i].test_accuracy);
    CHECK(r1.probes[i].train_full_loss == r2.probes[i].train_full_loss);
  }
}

TEST_CASE("bits change only on the consultation cadence") {
  Dataset data = gen_synthetic(7, 400, 6, 3);
  ModelSpec spec = small_spec();
  TrainConfig train;
  ClusterConfig cluster = small_cluster(80);
  cluster.T = 5;

  MqgradPolicy policy(MdpHyper{}, 7);
  RunResult res = run_training(cluster, spec, train, data, &policy, 7, 0, kt());
  int prev_bits = res.trace[0].bits;
  for (const TraceRecord& r : res.trace) {
    CHECK(r.bits >= 2);
    CHECK(r.bits <= 8);
    if (r.iter % cluster.T != 0) {
      CHECK(r.bits == prev_bits);
      CHECK_FALSE(r.has_mdp);
    } else {
      CHECK(r.bits >= prev_bits);
      CHECK(r.has_mdp);
      CHECK(r.mdp_t == r.iter / cluster.T);
      if (r.iter > 0) CHECK(r.has_reward);
    }
    prev_bits = r.bits;
  }
}

TEST_CASE("fixed-bit run keeps a constant bits column and exact byte account") {
  Dataset data = gen_synthetic(8, 400, 6, 3);
  ModelSpec spec = small_spec();
  TrainConfig train;
  ClusterConfig cluster = small_cluster(40);

  FixedPolicy policy(6);
  RunResult res = run_training(cluster, spec, train, data, &policy, 8, 0, kt());
  const long long n_params = spec.param_count();
  const int P = cluster.workers;
  const long long msg = encoded_size_bytes(n_params, 6);
  long long expect_total = 0;
  for (const TraceRecord& r : res.trace) {
    CHECK(r.bits == 6);
    CHECK(r.bytes == (P + 1) * msg + 5 * P);
    expect_total += r.bytes;
  }
  CHECK(res.total_bytes == expect_total);
  CHECK(res.total_payload_bytes ==
        (P + 1) * payload_bytes(n_params, 6) * res.iters_completed);
  CHECK(res.total_mdp_ms == 0.0);

  // clock recomputation from the config reproduces the trace timestamps
  double now = 0.0;
  for (const TraceRecord& r : res.trace) {
    now += advance_clock(cluster, msg, msg, n_params, false).total();
    CHECK(r.sim_time_ms == now);
  }
}

TEST_CASE("learned-policy consultations are charged controller time") {
  Dataset data = gen_synthetic(9, 400, 6, 3);
  ModelSpec spec = small_spec();
  TrainConfig train;
  ClusterConfig cluster = small_cluster(20);
  cluster.T = 5;

  MqgradPolicy mq(MdpHyper{}, 9);
  RunResult r1 = run_training(cluster, spec, train, data, &mq, 9, 0, kt());
  CHECK(r1.total_mdp_ms == 4 * cluster.mdp_ms);  // consults at m = 0,5,10,15

  FixedPolicy fx(4);
  RunResult r2 = run_training(cluster, spec, train, data, &fx, 9, 0, kt());
  CHECK(r2.total_mdp_ms == 0.0);
}

TEST_CASE("per-layer mask sends the excluded layer raw") {
  Dataset data = gen_synthetic(10, 400, 6, 3);
  ModelSpec spec = small_spec();      // layers {6,8,3}
  spec.quantize_mask = {1, 0};        // second weight layer stays 32-bit
  TrainConfig train;
  ClusterConfig cluster = small_cluster(12);

  FixedPolicy policy(4);
  RunResult res = run_training(cluster, spec, train, data, &policy, 10, 0, kt());
  const long long qlen = 6 * 8 + 8;
  const long long raw = 8 * 3 + 3;
  const long long msg = encoded_size_bytes(qlen, 4) + 4 * raw;
  const int P = cluster.workers;
  for (const TraceRecord& r : res.trace)
    CHECK(r.bytes == (P + 1) * msg + 5 * P);
  for (const TraceRecord& r : res.trace) CHECK(std::isfinite(r.loss));
}

TEST_CASE("quantized training still reduces the loss") {
  Dataset data = gen_synthetic(11, 600, 6, 3);
  ModelSpec spec = small_spec();
  TrainConfig train;
  ClusterConfig cluster = small_cluster(150, 1);

  FixedPolicy policy(8);
  RunResult res = run_training(cluster, spec, train, data, &policy, 11, 0, kt());
  CHECK(res.trace.back().loss < 0.6 * res.trace.front().loss);
}

TEST_CASE("a blown-up run raises DivergedError with the partial trace") {
  Dataset data = gen_synthetic(12, 400, 6, 3);
  ModelSpec spec = small_spec();
  TrainConfig train;
  train.lr = 1e6f;
  ClusterConfig cluster = small_cluster(200);

  FixedPolicy policy(8);
  bool thrown = false;
  try {
    run_training(cluster, spec, train, data, &policy, 12, 0, kt());
  } catch (const DivergedError& e) {
    thrown = true;
    CHECK(e.partial().diverged);
    CHECK(e.partial().iters_completed < 200);
  }
  CHECK(thrown);
}

TEST_CASE("cluster config validation") {
  ClusterConfig c;
  c.validate();
  c.workers = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ClusterConfig{};
  c.bandwidth = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ClusterConfig{};
  c.latency_ms = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

}  // TEST_SUITE
