#include "mqgrad/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mqgrad/rng.hpp"

namespace mqgrad {

long long ModelSpec::param_count() const {
  long long total = 0;
  for (int l = 0; l + 1 < static_cast<int>(layer_sizes.size()); ++l)
    total += static_cast<long long>(layer_sizes[l]) * layer_sizes[l + 1] +
             layer_sizes[l + 1];
  return total;
}

void ModelSpec::validate() const {
  if (layer_sizes.size() < 2)
    throw std::invalid_argument("model: need at least 2 layer sizes");
  for (int s : layer_sizes)
    if (s <= 0) throw std::invalid_argument("model: layer sizes must be positive");
  if (l2_coeff < 0.0f)
    throw std::invalid_argument("model: l2_coeff must be non-negative");
  if (!quantize_mask.empty()) {
    if (static_cast<int>(quantize_mask.size()) != num_weight_layers())
      throw std::invalid_argument(
          "model: quantize_mask length must equal the number of weight layers (" +
          std::to_string(num_weight_layers()) + ")");
    bool any = false;
    for (int m : quantize_mask) {
      if (m != 0 && m != 1)
        throw std::invalid_argument("model: quantize_mask entries must be 0 or 1");
      any = any || m == 1;
    }
    if (!any)
      throw std::invalid_argument("model: quantize_mask must enable at least one layer");
  }
}

ParamVector make_params(const ModelSpec& spec) {
  spec.validate();
  ParamVector p;
  for (int l = 0; l + 1 < static_cast<int>(spec.layer_sizes.size()); ++l) {
    p.shapes.emplace_back(spec.layer_sizes[l], spec.layer_sizes[l + 1]);
    p.shapes.emplace_back(1, spec.layer_sizes[l + 1]);
  }
  p.values.assign(spec.param_count(), 0.0f);
  return p;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamVector p = make_params(spec);
  Rng rng(seed);
  long long off = 0;
  for (int l = 0; l + 1 < static_cast<int>(spec.layer_sizes.size()); ++l) {
    const int in = spec.layer_sizes[l];
    const int out = spec.layer_sizes[l + 1];
    const double std = std::sqrt(2.0 / static_cast<double>(in));
    for (long long i = 0; i < static_cast<long long>(in) * out; ++i)
      p.values[off + i] = static_cast<float>(rng.normal() * std);
    off += static_cast<long long>(in) * out + out;  // biases stay zero
  }
  return p;
}

namespace {

void check_consistent(const ParamVector& params, const ModelSpec& spec,
                      const Batch& batch) {
  spec.validate();
  if (params.size() != spec.param_count())
    throw std::invalid_argument("model: params length does not match spec");
  if (batch.rows <= 0) throw std::invalid_argument("model: empty batch");
  if (batch.dim != spec.layer_sizes.front())
    throw std::invalid_argument("model: batch dim does not match input layer");
  for (int r = 0; r < batch.rows; ++r)
    if (batch.labels[r] < 0 || batch.labels[r] >= spec.layer_sizes.back())
      throw std::invalid_argument("model: label out of range");
}

// Forward pass through all layers; leaves logits in ws.zs.back().
void forward(const ParamVector& params, const ModelSpec& spec,
             const Batch& batch, const kern::KernelTable& kt, Workspace& ws) {
  const int L = spec.num_weight_layers();
  ws.acts.resize(L);  // hidden activations only; acts[l] feeds layer l+1
  ws.zs.resize(L);
  const float* in = batch.inputs;
  long long off = 0;
  for (int l = 0; l < L; ++l) {
    const int ni = spec.layer_sizes[l];
    const int no = spec.layer_sizes[l + 1];
    ws.zs[l].resize(static_cast<size_t>(batch.rows) * no);
    kt.matmul(in, params.values.data() + off, ws.zs[l].data(), batch.rows, ni, no);
    kt.add_rowvec(ws.zs[l].data(), params.values.data() + off + static_cast<long long>(ni) * no,
                  batch.rows, no);
    off += static_cast<long long>(ni) * no + no;
    if (l + 1 < L) {
      ws.acts[l].resize(ws.zs[l].size());
      kt.relu(ws.zs[l].data(), ws.acts[l].data(),
              static_cast<long long>(ws.zs[l].size()));
      in = ws.acts[l].data();
    }
  }
}

double l2_term(const ParamVector& params, float l2_coeff) {
  if (l2_coeff == 0.0f) return 0.0;
  double ss = 0.0;
  for (float v : params.values) ss += static_cast<double>(v) * v;
  return static_cast<double>(l2_coeff) * ss;
}

}  // namespace

double compute_grad_loss(const ParamVector& params, const ModelSpec& spec,
                         const Batch& batch, const kern::KernelTable& kt,
                         ParamVector* grad, Workspace& ws) {
  check_consistent(params, spec, batch);
  const int L = spec.num_weight_layers();
  const int classes = spec.layer_sizes.back();
  forward(params, spec, batch, kt, ws);

  ws.probs.resize(static_cast<size_t>(batch.rows) * classes);
  ws.row_losses.resize(batch.rows);
  kt.softmax_xent(ws.zs[L - 1].data(), batch.labels, ws.probs.data(),
                  ws.row_losses.data(), batch.rows, classes);
  double loss = 0.0;
  for (int r = 0; r < batch.rows; ++r)
    loss += static_cast<double>(ws.row_losses[r]);
  loss = loss / batch.rows + l2_term(params, spec.l2_coeff);
  if (!std::isfinite(loss)) return loss;  // caller decides how to handle

  if (grad) {
    if (grad->values.size() != params.values.size()) *grad = make_params(spec);
    // d loss / d logits = (probs - onehot) / rows
    ws.dz.resize(ws.probs.size());
    const float inv_rows = 1.0f / static_cast<float>(batch.rows);
    for (int r = 0; r < batch.rows; ++r)
      for (int j = 0; j < classes; ++j) {
        const float oh = j == batch.labels[r] ? 1.0f : 0.0f;
        ws.dz[static_cast<size_t>(r) * classes + j] =
            (ws.probs[static_cast<size_t>(r) * classes + j] - oh) * inv_rows;
      }

    // layer parameter offsets
    std::vector<long long> offs(L);
    long long off = 0;
    for (int l = 0; l < L; ++l) {
      offs[l] = off;
      off += static_cast<long long>(spec.layer_sizes[l]) * spec.layer_sizes[l + 1] +
             spec.layer_sizes[l + 1];
    }

    for (int l = L - 1; l >= 0; --l) {
      const int ni = spec.layer_sizes[l];
      const int no = spec.layer_sizes[l + 1];
      const float* in = l == 0 ? batch.inputs : ws.acts[l - 1].data();
      kt.matmul_at_b(in, ws.dz.data(), grad->values.data() + offs[l],
                     batch.rows, ni, no);
      kt.colsum(ws.dz.data(), grad->values.data() + offs[l] + static_cast<long long>(ni) * no,
                batch.rows, no);
      if (l > 0) {
        ws.da.resize(static_cast<size_t>(batch.rows) * ni);
        kt.matmul_a_bt(ws.dz.data(), params.values.data() + offs[l],
                       ws.da.data(), batch.rows, no, ni);
        ws.dz.resize(ws.da.size());
        kt.relu_backward(ws.zs[l - 1].data(), ws.da.data(), ws.dz.data(),
                         static_cast<long long>(ws.da.size()));
      }
    }
    if (spec.l2_coeff != 0.0f)
      kt.axpy(grad->values.data(), params.values.data(), 2.0f * spec.l2_coeff,
              params.size());
    grad->shapes = params.shapes;
  }
  return loss;
}

double compute_loss(const ParamVector& params, const ModelSpec& spec,
                    const Batch& batch, const kern::KernelTable& kt,
                    Workspace& ws) {
  return compute_grad_loss(params, spec, batch, kt, nullptr, ws);
}

void sgd_step(ParamVector& params, const ParamVector& grad, float lr,
              const kern::KernelTable& kt) {
  if (params.values.size() != grad.values.size())
    throw std::invalid_argument("sgd_step: params/grad length mismatch");
  if (lr <= 0.0f) throw std::invalid_argument("sgd_step: lr must be positive");
  kt.axpy(params.values.data(), grad.values.data(), -lr, params.size());
}

double evaluate_accuracy(const ParamVector& params, const ModelSpec& spec,
                         const Batch& batch, const kern::KernelTable& kt,
                         Workspace& ws) {
  if (batch.rows <= 0) throw std::invalid_argument("evaluate_accuracy: empty batch");
  check_consistent(params, spec, batch);
  forward(params, spec, batch, kt, ws);
  const int classes = spec.layer_sizes.back();
  const float* logits = ws.zs.back().data();
  long long correct = 0;
  for (int r = 0; r < batch.rows; ++r) {
    int best = 0;
    for (int j = 1; j < classes; ++j)
      if (logits[static_cast<size_t>(r) * classes + j] >
          logits[static_cast<size_t>(r) * classes + best])
        best = j;
    if (best == batch.labels[r]) ++correct;
  }
  return static_cast<double>(correct) / batch.rows;
}

Dataset gen_synthetic(std::uint64_t seed, int n, int dim, int classes) {
  if (classes < 2) throw std::invalid_argument("gen_synthetic: classes must be >= 2");
  if (dim < 1) throw std::invalid_argument("gen_synthetic: dim must be >= 1");
  if (n < classes) throw std::invalid_argument("gen_synthetic: n must be >= classes");

  Rng rng(seed);
  std::vector<std::vector<double>> means(classes, std::vector<double>(dim));
  for (int c = 0; c < classes; ++c) {
    double ss = 0.0;
    for (int j = 0; j < dim; ++j) {
      means[c][j] = rng.normal();
      ss += means[c][j] * means[c][j];
    }
    const double norm = std::sqrt(ss);
    const double scale = norm > 1e-12 ? 3.0 / norm : 0.0;
    for (int j = 0; j < dim; ++j) means[c][j] *= scale;
  }

  std::vector<float> x(static_cast<size_t>(n) * dim);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    const int c = i % classes;
    y[i] = c;
    for (int j = 0; j < dim; ++j)
      x[static_cast<size_t>(i) * dim + j] =
          static_cast<float>(means[c][j] + rng.normal());
  }

  const int train_rows = n * 4 / 5;
  Dataset ds;
  ds.dim = dim;
  ds.classes = classes;
  ds.train.rows = train_rows;
  ds.train.dim = dim;
  ds.train.x.assign(x.begin(), x.begin() + static_cast<size_t>(train_rows) * dim);
  ds.train.y.assign(y.begin(), y.begin() + train_rows);
  ds.test.rows = n - train_rows;
  ds.test.dim = dim;
  ds.test.x.assign(x.begin() + static_cast<size_t>(train_rows) * dim, x.end());
  ds.test.y.assign(y.begin() + train_rows, y.end());
  return ds;
}

MaskRanges mask_ranges(const ModelSpec& spec) {
  spec.validate();
  const int L = spec.num_weight_layers();
  std::vector<int> mask = spec.quantize_mask;
  if (mask.empty()) mask.assign(L, 1);
  MaskRanges out;
  long long off = 0;
  for (int l = 0; l < L; ++l) {
    const long long len =
        static_cast<long long>(spec.layer_sizes[l]) * spec.layer_sizes[l + 1] +
        spec.layer_sizes[l + 1];
    if (mask[l]) {
      if (!out.quantized.empty() &&
          out.quantized.back().first + out.quantized.back().second == off)
        out.quantized.back().second += len;  // coalesce adjacent chunks
      else
        out.quantized.emplace_back(off, len);
      out.quantized_len += len;
    } else {
      out.raw_len += len;
    }
    off += len;
  }
  return out;
}

}  // namespace mqgrad
