#pragma once

#include <cstdint>
#include <vector>

#include "mqgrad/cluster.hpp"
#include "mqgrad/model.hpp"

namespace mqgrad {

// Plain single-process SGD on the serial kernels: walks the same shard
// batches as a P-worker cluster, averages the shard gradients directly, and
// applies the update — no codec, no clock, no messages. The simulator in
// passthrough mode must match this loop's losses.
struct ReferenceResult {
  std::vector<double> losses;  // one global loss per iteration
  ParamVector params;
};

ReferenceResult run_reference(const ModelSpec& spec, const TrainConfig& train,
                              const Dataset& data, int shards,
                              long long iters, std::uint64_t seed);

}  // namespace mqgrad
