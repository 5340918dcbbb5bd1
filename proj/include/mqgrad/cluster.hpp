#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mqgrad/model.hpp"
#include "mqgrad/policy.hpp"

namespace mqgrad {

struct ClusterConfig {
  int workers = 4;
  double bandwidth = 1e7;  // bytes/second per link
  double latency_ms = 0.02;
  double compute_ms_per_iter = 0.2;
  double quantize_ms_per_kelem = 0.02;
  double mdp_ms = 1.0;  // charged per consultation of a learned policy
  long long max_iters = 1000;
  int T = 5;  // policy consultation cadence in iterations
  // true: the P gradient pushes queue on one server link; false: fully
  // parallel links, the push phase costs a single transfer.
  bool serial_ingress = true;

  void validate() const;
};

struct TrainConfig {
  float lr = 0.2f;
  int batch = 32;
};

struct TraceRecord {
  long long iter = 0;
  double sim_time_ms = 0.0;
  double loss = 0.0;
  int bits = 0;
  long long bytes = 0;
  bool has_mdp = false;
  int mdp_t = 0;
  int action = 0;
  bool has_reward = false;
  double reward = 0.0;
};

struct ProbeRecord {
  long long iter = 0;
  double sim_time_ms = 0.0;
  double test_accuracy = 0.0;
  double train_full_loss = 0.0;
};

struct RunResult {
  std::vector<TraceRecord> trace;
  std::vector<ProbeRecord> probes;
  bool diverged = false;
  long long iters_completed = 0;
  double total_codec_ms = 0.0;
  double total_mdp_ms = 0.0;
  long long total_bytes = 0;
  long long total_payload_bytes = 0;
  ParamVector final_params;
};

// Non-finite global loss (or parameters) aborts the run but keeps what was
// simulated so far.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(const std::string& msg, RunResult partial)
      : std::runtime_error(msg), partial_(std::move(partial)) {
    partial_.diverged = true;
  }
  const RunResult& partial() const { return partial_; }

 private:
  RunResult partial_;
};

// Mean of exactly P worker losses.
double aggregate_losses(const std::vector<double>& local_losses, int workers);

// Elementwise mean in worker-index order, accumulated in 64-bit.
ParamVector aggregate_gradients(const std::vector<ParamVector>& grads,
                                const kern::KernelTable& kt);

double comm_time_ms(long long bytes, const ClusterConfig& cfg);

// One iteration of virtual time. Gradient pushes and the broadcast carry
// bytes over the link; the P loss reports and the K fan-out are modeled as
// latency-only control messages (their bytes still count in accounting).
// Codec work: P worker encodes overlap (one charge), the server's P decodes
// + 1 encode are serial, worker decodes of the broadcast overlap (one) —
// P + 3 passes over codec_elems total.
struct IterTiming {
  double compute_ms = 0.0;
  double codec_ms = 0.0;
  double push_ms = 0.0;
  double broadcast_ms = 0.0;
  double control_ms = 0.0;
  double mdp_ms = 0.0;

  double total() const {
    return compute_ms + codec_ms + push_ms + broadcast_ms + control_ms + mdp_ms;
  }
};
IterTiming advance_clock(const ClusterConfig& cfg, long long push_bytes,
                         long long broadcast_bytes, long long codec_elems,
                         bool mdp_charged);

// Rows for worker p's batch at iteration m: the worker owns train rows
// {i : i mod P == p} and walks them cyclically, batch-size steps per
// iteration.
void gather_batch(const DataSplit& train, int workers, int p, long long m,
                  int batch, std::vector<float>& bx, std::vector<int>& by);

// The bulk-synchronous loop: per iteration every worker computes a gradient
// and loss on its shard batch, losses are averaged, the policy is consulted
// every T-th iteration for K, gradients round-trip through the codec (worker
// encode -> server decode/average/re-encode -> broadcast -> worker decode),
// and every worker applies the identical update. A null policy selects the
// debug passthrough mode: no codec, raw float gradients, bits logged as 32.
// Throws DivergedError on non-finite loss/params, std::runtime_error on
// protocol violations (worker replicas drifting apart).
RunResult run_training(const ClusterConfig& cluster, const ModelSpec& spec,
                       const TrainConfig& train, const Dataset& data,
                       BitPolicy* policy, std::uint64_t seed,
                       long long eval_every, const kern::KernelTable& kt);

}  // namespace mqgrad
