#include "mqgrad/cluster.hpp"

#include <cmath>
#include <cstring>

#include "mqgrad/codec.hpp"
#include "mqgrad/rng.hpp"

namespace mqgrad {

void ClusterConfig::validate() const {
  if (workers < 1) throw std::invalid_argument("cluster: workers must be >= 1");
  if (!(bandwidth > 0.0))
    throw std::invalid_argument("cluster: bandwidth must be positive");
  if (latency_ms < 0.0 || compute_ms_per_iter < 0.0 ||
      quantize_ms_per_kelem < 0.0 || mdp_ms < 0.0)
    throw std::invalid_argument("cluster: time costs must be non-negative");
  if (max_iters < 1) throw std::invalid_argument("cluster: max_iters must be >= 1");
  if (T < 1) throw std::invalid_argument("cluster: T must be >= 1");
}

double aggregate_losses(const std::vector<double>& local_losses, int workers) {
  if (static_cast<int>(local_losses.size()) != workers)
    throw std::runtime_error("protocol: expected one loss per worker");
  double sum = 0.0;
  for (double l : local_losses) sum += l;
  return sum / workers;
}

ParamVector aggregate_gradients(const std::vector<ParamVector>& grads,
                                const kern::KernelTable& kt) {
  if (grads.empty()) throw std::runtime_error("protocol: no gradients to aggregate");
  std::vector<const float*> ptrs(grads.size());
  for (std::size_t p = 0; p < grads.size(); ++p) {
    if (grads[p].values.size() != grads[0].values.size())
      throw std::runtime_error("protocol: gradient length mismatch");
    ptrs[p] = grads[p].values.data();
  }
  ParamVector out;
  out.shapes = grads[0].shapes;
  out.values.resize(grads[0].values.size());
  kt.mean_vectors(ptrs.data(), static_cast<int>(grads.size()), out.values.data(),
                  out.size());
  return out;
}

double comm_time_ms(long long bytes, const ClusterConfig& cfg) {
  if (bytes < 0) throw std::invalid_argument("comm_time_ms: negative bytes");
  return cfg.latency_ms + static_cast<double>(bytes) / cfg.bandwidth * 1000.0;
}

IterTiming advance_clock(const ClusterConfig& cfg, long long push_bytes,
                         long long broadcast_bytes, long long codec_elems,
                         bool mdp_charged) {
  IterTiming t;
  t.compute_ms = cfg.compute_ms_per_iter;
  t.codec_ms = cfg.quantize_ms_per_kelem *
               (static_cast<double>(codec_elems) / 1000.0) * (cfg.workers + 3);
  const double one_push = comm_time_ms(push_bytes, cfg);
  t.push_ms = cfg.serial_ingress ? cfg.workers * one_push : one_push;
  t.broadcast_ms = comm_time_ms(broadcast_bytes, cfg);
  t.control_ms = (cfg.workers + 1) * cfg.latency_ms;
  t.mdp_ms = mdp_charged ? cfg.mdp_ms : 0.0;
  return t;
}

void gather_batch(const DataSplit& train, int workers, int p, long long m,
                  int batch, std::vector<float>& bx, std::vector<int>& by) {
  // shard p = rows {p, p+P, p+2P, ...}
  const long long shard_size = (train.rows - p + workers - 1) / workers;
  if (shard_size < 1)
    throw std::invalid_argument("cluster: worker shard is empty (too few rows)");
  bx.resize(static_cast<size_t>(batch) * train.dim);
  by.resize(batch);
  for (int j = 0; j < batch; ++j) {
    const long long k = (m * batch + j) % shard_size;
    const long long row = p + k * workers;
    std::memcpy(bx.data() + static_cast<size_t>(j) * train.dim,
                train.x.data() + static_cast<size_t>(row) * train.dim,
                sizeof(float) * train.dim);
    by[j] = train.y[row];
  }
}

namespace {

void gather_ranges(const std::vector<float>& full, const MaskRanges& mr,
                   std::vector<float>& out) {
  out.resize(mr.quantized_len);
  long long w = 0;
  for (const auto& [off, len] : mr.quantized) {
    std::memcpy(out.data() + w, full.data() + off, sizeof(float) * len);
    w += len;
  }
}

void scatter_ranges(const std::vector<float>& packed, const MaskRanges& mr,
                    std::vector<float>& full) {
  long long r = 0;
  for (const auto& [off, len] : mr.quantized) {
    std::memcpy(full.data() + off, packed.data() + r, sizeof(float) * len);
    r += len;
  }
}

bool all_finite(const std::vector<float>& v) {
  for (float x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

RunResult run_training(const ClusterConfig& cluster, const ModelSpec& spec,
                       const TrainConfig& train, const Dataset& data,
                       BitPolicy* policy, std::uint64_t seed,
                       long long eval_every, const kern::KernelTable& kt) {
  cluster.validate();
  spec.validate();
  if (train.batch < 1) throw std::invalid_argument("train: batch must be >= 1");
  if (!(train.lr > 0.0f)) throw std::invalid_argument("train: lr must be positive");
  if (data.train.rows < cluster.workers)
    throw std::invalid_argument("cluster: need at least one training row per worker");

  const int P = cluster.workers;
  const long long n_params = spec.param_count();
  const MaskRanges mr = mask_ranges(spec);
  const bool passthrough = policy == nullptr;

  // Gradient message size on the wire; the raw (unmasked) float chunk rides
  // along uncompressed. Passthrough keeps the header for uniform accounting.
  const auto grad_msg_bytes = [&](int k_bits) -> long long {
    if (passthrough) return 17 + 4 * n_params;
    return encoded_size_bytes(mr.quantized_len, k_bits) + 4 * mr.raw_len;
  };
  const auto grad_payload_bytes = [&](int k_bits) -> long long {
    if (passthrough) return 4 * n_params;
    return payload_bytes(mr.quantized_len, k_bits) + 4 * mr.raw_len;
  };

  ParamVector init = init_params(spec, mix_seed(seed, 1));
  std::vector<ParamVector> wp(P, init);
  std::vector<ParamVector> grads(P);
  std::vector<Workspace> ws(P);
  std::vector<double> losses(P);
  std::vector<float> bx;
  std::vector<int> by;
  std::vector<float> packed, dq;
  std::vector<ParamVector> reconstructed(P);
  CodecScratch codec_scratch;

  RunResult res;
  double now = 0.0;
  double last_consult_time = 0.0;
  std::vector<double> loss_window;
  int K = 8;  // overwritten at iteration 0, which is always a consultation

  for (long long m = 0; m < cluster.max_iters; ++m) {
    // (1) every worker: gradient and loss on its own batch
    for (int p = 0; p < P; ++p) {
      gather_batch(data.train, P, p, m, train.batch, bx, by);
      Batch b{bx.data(), by.data(), train.batch, data.train.dim};
      losses[p] = compute_grad_loss(wp[p], spec, b, kt, &grads[p], ws[p]);
    }

    // (2) server forms the global loss
    const double global_loss = aggregate_losses(losses, P);
    if (!std::isfinite(global_loss)) {
      res.iters_completed = m;
      throw DivergedError("diverged: non-finite loss at iteration " +
                              std::to_string(m),
                          std::move(res));
    }
    loss_window.push_back(global_loss);

    // (3) policy consultation on the T cadence
    bool consulted = false;
    PolicyDecision decision;
    if (!passthrough && m % cluster.T == 0) {
      PolicyInput in;
      in.iter = m;
      in.t = static_cast<int>(m / cluster.T);
      in.losses = loss_window;
      in.window_cost_ms = now - last_consult_time;
      if (policy->wants_grad_rms()) {
        double ss = 0.0;
        for (long long i = 0; i < n_params; ++i) {
          double mean = 0.0;
          for (int p = 0; p < P; ++p)
            mean += static_cast<double>(grads[p].values[i]);
          mean /= P;
          ss += mean * mean;
        }
        in.grad_rms = std::sqrt(ss / static_cast<double>(n_params));
      }
      decision = policy->consult(in);
      if (decision.bits < 2 || decision.bits > 8)
        throw std::runtime_error("protocol: policy returned K outside [2,8]");
      K = decision.bits;
      consulted = true;
      last_consult_time = now;
      loss_window.clear();
    }

    // (4)-(6) quantized round trip (or raw passthrough), then the update
    ParamVector g_final;
    if (passthrough) {
      g_final = aggregate_gradients(grads, kt);
    } else {
      for (int p = 0; p < P; ++p) {
        gather_ranges(grads[p].values, mr, packed);
        const QuantizedTensor qt = quantize(packed.data(), mr.quantized_len, K,
                                            kt, &codec_scratch);
        dq.resize(mr.quantized_len);
        dequantize_into(qt, kt, dq.data(), &codec_scratch);
        reconstructed[p] = grads[p];  // raw chunks pass through exactly
        scatter_ranges(dq, mr, reconstructed[p].values);
      }
      g_final = aggregate_gradients(reconstructed, kt);
      gather_ranges(g_final.values, mr, packed);
      const QuantizedTensor qt = quantize(packed.data(), mr.quantized_len, K,
                                          kt, &codec_scratch);
      dq.resize(mr.quantized_len);
      dequantize_into(qt, kt, dq.data(), &codec_scratch);
      scatter_ranges(dq, mr, g_final.values);
    }
    for (int p = 0; p < P; ++p) sgd_step(wp[p], g_final, train.lr, kt);

    // every replica must stay bit-identical — this is the protocol working
    for (int p = 1; p < P; ++p)
      if (std::memcmp(wp[p].values.data(), wp[0].values.data(),
                      sizeof(float) * wp[0].values.size()) != 0)
        throw std::runtime_error("protocol: worker replicas drifted apart at iteration " +
                                 std::to_string(m));

    // (7) clock and accounting
    const int k_logged = passthrough ? 32 : K;
    const long long msg = grad_msg_bytes(K);
    const bool mdp_charged = consulted && policy->charges_mdp_cost();
    const IterTiming timing = advance_clock(
        cluster, msg, msg, passthrough ? 0 : mr.quantized_len, mdp_charged);
    now += timing.total();
    res.total_codec_ms += timing.codec_ms;
    res.total_mdp_ms += timing.mdp_ms;

    const long long bytes_m = static_cast<long long>(P) * msg + msg + 5ll * P;
    res.total_bytes += bytes_m;
    res.total_payload_bytes += static_cast<long long>(P + 1) * grad_payload_bytes(K);

    TraceRecord rec;
    rec.iter = m;
    rec.sim_time_ms = now;
    rec.loss = global_loss;
    rec.bits = k_logged;
    rec.bytes = bytes_m;
    if (consulted && decision.has_mdp) {
      rec.has_mdp = true;
      rec.mdp_t = decision.mdp_t;
      rec.action = decision.action;
      rec.has_reward = decision.has_reward;
      rec.reward = decision.reward;
    }
    res.trace.push_back(rec);
    res.iters_completed = m + 1;

    if (!all_finite(wp[0].values)) {
      res.final_params = wp[0];
      throw DivergedError("diverged: non-finite parameters after iteration " +
                              std::to_string(m),
                          std::move(res));
    }

    // (8) periodic accuracy / full-loss probe on the updated model
    if (eval_every > 0 && (m % eval_every == 0 || m == cluster.max_iters - 1)) {
      ProbeRecord pr;
      pr.iter = m;
      pr.sim_time_ms = now;
      pr.test_accuracy =
          evaluate_accuracy(wp[0], spec, data.test.view(), kt, ws[0]);
      pr.train_full_loss =
          compute_loss(wp[0], spec, data.train.view(), kt, ws[0]);
      res.probes.push_back(pr);
    }
  }

  res.final_params = std::move(wp[0]);
  return res;
}

}  // namespace mqgrad
