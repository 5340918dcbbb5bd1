#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mqgrad/kernels.hpp"

namespace mqgrad {

// Flat parameter or gradient vector plus the (rows, cols) shape of each
// chunk. Layout per weight layer l: W_l (in x out) followed by b_l (1 x out).
struct ParamVector {
  std::vector<float> values;
  std::vector<std::pair<int, int>> shapes;

  long long size() const { return static_cast<long long>(values.size()); }
};

// Non-owning view of a batch of examples.
struct Batch {
  const float* inputs = nullptr;  // rows x dim, row-major
  const int* labels = nullptr;    // class indices in [0, classes)
  int rows = 0;
  int dim = 0;
};

struct ModelSpec {
  std::vector<int> layer_sizes;  // input, hidden..., classes
  float l2_coeff = 0.0f;
  // Per weight-layer flag (1 = gradient chunk goes through the codec,
  // 0 = sent as raw 32-bit floats). Empty means all ones.
  std::vector<int> quantize_mask;

  int num_weight_layers() const {
    return static_cast<int>(layer_sizes.size()) - 1;
  }
  long long param_count() const;
  void validate() const;  // throws std::invalid_argument
};

// Scratch buffers reused across compute_grad_loss calls.
struct Workspace {
  std::vector<std::vector<float>> acts;  // acts[l]: rows x layer_sizes[l]
  std::vector<std::vector<float>> zs;    // pre-activations per weight layer
  std::vector<float> probs;
  std::vector<float> row_losses;
  std::vector<float> da;
  std::vector<float> dz;
};

// Shapes list for a spec, all values zero.
ParamVector make_params(const ModelSpec& spec);

// He-normal weights (std sqrt(2/fan_in)), zero biases; deterministic in seed.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

// Mean cross-entropy over the batch plus l2_coeff * sum of squared params.
// Writes the analytic gradient (same shapes) into *grad when non-null.
double compute_grad_loss(const ParamVector& params, const ModelSpec& spec,
                         const Batch& batch, const kern::KernelTable& kt,
                         ParamVector* grad, Workspace& ws);

double compute_loss(const ParamVector& params, const ModelSpec& spec,
                    const Batch& batch, const kern::KernelTable& kt,
                    Workspace& ws);

// params[i] -= lr * grad[i]
void sgd_step(ParamVector& params, const ParamVector& grad, float lr,
              const kern::KernelTable& kt);

// Fraction of argmax-correct predictions; argmax ties break to the lowest
// class index. Throws on an empty batch.
double evaluate_accuracy(const ParamVector& params, const ModelSpec& spec,
                         const Batch& batch, const kern::KernelTable& kt,
                         Workspace& ws);

// Owning storage behind a Batch.
struct DataSplit {
  std::vector<float> x;
  std::vector<int> y;
  int rows = 0;
  int dim = 0;

  Batch view() const { return Batch{x.data(), y.data(), rows, dim}; }
};

struct Dataset {
  DataSplit train;
  DataSplit test;
  int dim = 0;
  int classes = 0;
};

// Gaussian class clusters: per-class means are unit vectors scaled to radius
// 3, examples are mean + unit-variance noise, labels cycle i % classes.
// Prefix 80/20 train/test split; deterministic in seed.
Dataset gen_synthetic(std::uint64_t seed, int n, int dim, int classes);

// Element range [offset, offset+len) of the flat gradient covered by
// mask-enabled layers. Chunks are coalesced when adjacent.
struct MaskRanges {
  std::vector<std::pair<long long, long long>> quantized;  // (offset, len)
  long long quantized_len = 0;
  long long raw_len = 0;
};
MaskRanges mask_ranges(const ModelSpec& spec);

}  // namespace mqgrad
