#include "mqgrad/reference.hpp"

#include <cmath>
#include <stdexcept>

#include "mqgrad/rng.hpp"

namespace mqgrad {

ReferenceResult run_reference(const ModelSpec& spec, const TrainConfig& train,
                              const Dataset& data, int shards,
                              long long iters, std::uint64_t seed) {
  spec.validate();
  if (shards < 1) throw std::invalid_argument("reference: shards must be >= 1");
  if (data.train.rows < shards)
    throw std::invalid_argument("reference: need at least one row per shard");

  const kern::KernelTable& kt = kern::serial_kernels();
  ReferenceResult res;
  res.params = init_params(spec, mix_seed(seed, 1));

  std::vector<ParamVector> grads(shards);
  std::vector<double> losses(shards);
  Workspace ws;
  std::vector<float> bx;
  std::vector<int> by;

  for (long long m = 0; m < iters; ++m) {
    for (int p = 0; p < shards; ++p) {
      gather_batch(data.train, shards, p, m, train.batch, bx, by);
      Batch b{bx.data(), by.data(), train.batch, data.train.dim};
      losses[p] = compute_grad_loss(res.params, spec, b, kt, &grads[p], ws);
    }
    const double loss = aggregate_losses(losses, shards);
    if (!std::isfinite(loss))
      throw std::runtime_error("reference: diverged at iteration " +
                               std::to_string(m));
    res.losses.push_back(loss);
    const ParamVector g = aggregate_gradients(grads, kt);
    sgd_step(res.params, g, train.lr, kt);
  }
  return res;
}

}  // namespace mqgrad
