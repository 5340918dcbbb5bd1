#pragma once

#include <cmath>
#include <cstdint>

// Dense-math and codec kernels. Every kernel exists twice: the default
// (OpenMP-parallel) version in mqgrad::kern and a plain serial reference in
// mqgrad::kern::ref. The parallel versions only split independent output
// elements across threads; each element is computed in the same order as the
// serial version, so results are bitwise identical for any thread count.
// All matrices are row-major.

namespace mqgrad::kern {

// c[m x n] = a[m x k] * b[k x n]
void matmul(const float* a, const float* b, float* c, int m, int k, int n);
// c[k x n] = a^T * b where a is [m x k], b is [m x n]
void matmul_at_b(const float* a, const float* b, float* c, int m, int k, int n);
// c[m x k] = a * b^T where a is [m x n], b is [k x n]
void matmul_a_bt(const float* a, const float* b, float* c, int m, int n, int k);
// z[r x n] += row vector b[n] on every row
void add_rowvec(float* z, const float* b, int rows, int n);
// out[i] = max(z[i], 0)
void relu(const float* z, float* out, long long n);
// dz[i] = da[i] * (z[i] > 0)
void relu_backward(const float* z, const float* da, float* dz, long long n);
// out[j] = sum over rows of a[r x n]
void colsum(const float* a, float* out, int rows, int n);
// y[i] += alpha * x[i]
void axpy(float* y, const float* x, float alpha, long long n);
// out[i] = mean over p of vecs[p][i], accumulated in double
void mean_vectors(const float* const* vecs, int count, float* out, long long n);
// Row-wise softmax with max subtraction; probs[r x n], losses[r] = -log p[label].
void softmax_xent(const float* logits, const int* labels, float* probs,
                  float* losses, int rows, int n);
// min/max of v[0..n); n >= 1, values must be finite
void min_max(const float* v, long long n, float* lo, float* hi);

// Affine codec: map values to integer codes on a 2^k-1 step lattice between
// lo and hi, and back. Internal arithmetic is double so results do not depend
// on platform float contraction.
void affine_encode(const float* v, long long n, float lo, float hi, int k_bits,
                   std::uint32_t* codes);
void affine_decode(const std::uint32_t* codes, long long n, float lo, float hi,
                   int k_bits, float* out);
// k_bits-wide codes packed LSB-first: element i occupies bits [i*k, i*k + k).
void pack_codes(const std::uint32_t* codes, long long n, int k_bits,
                std::uint8_t* bytes);
void unpack_codes(const std::uint8_t* bytes, long long n, int k_bits,
                  std::uint32_t* codes);

namespace ref {
void matmul(const float* a, const float* b, float* c, int m, int k, int n);
void matmul_at_b(const float* a, const float* b, float* c, int m, int k, int n);
void matmul_a_bt(const float* a, const float* b, float* c, int m, int n, int k);
void add_rowvec(float* z, const float* b, int rows, int n);
void relu(const float* z, float* out, long long n);
void relu_backward(const float* z, const float* da, float* dz, long long n);
void colsum(const float* a, float* out, int rows, int n);
void axpy(float* y, const float* x, float alpha, long long n);
void mean_vectors(const float* const* vecs, int count, float* out, long long n);
void softmax_xent(const float* logits, const int* labels, float* probs,
                  float* losses, int rows, int n);
void min_max(const float* v, long long n, float* lo, float* hi);
void affine_encode(const float* v, long long n, float lo, float hi, int k_bits,
                   std::uint32_t* codes);
void affine_decode(const std::uint32_t* codes, long long n, float lo, float hi,
                   int k_bits, float* out);
void pack_codes(const std::uint32_t* codes, long long n, int k_bits,
                std::uint8_t* bytes);
void unpack_codes(const std::uint8_t* bytes, long long n, int k_bits,
                  std::uint32_t* codes);
}  // namespace ref

// Scalar helpers shared by both variants so per-element results agree bit for
// bit.
namespace detail {

inline float dot_row(const float* a, const float* b, int k, int bstride) {
  float acc = 0.0f;
  for (int i = 0; i < k; ++i) acc += a[i] * b[i * bstride];
  return acc;
}

inline std::uint32_t affine_encode_one(float v, float lo, float hi, int k_bits) {
  if (!(hi > lo)) return 0;
  const double levels = static_cast<double>((1u << k_bits) - 1);
  double x = (static_cast<double>(v) - static_cast<double>(lo)) /
             (static_cast<double>(hi) - static_cast<double>(lo)) * levels;
  double r = std::nearbyint(x);  // ties to even
  if (r < 0.0) r = 0.0;
  if (r > levels) r = levels;
  return static_cast<std::uint32_t>(r);
}

inline float affine_decode_one(std::uint32_t code, float lo, float hi, int k_bits) {
  const std::uint32_t levels = (1u << k_bits) - 1;
  if (!(hi > lo) || code == 0) return lo;
  if (code >= levels) return hi;
  double t = static_cast<double>(code) / static_cast<double>(levels);
  double u = static_cast<double>(lo) +
             t * (static_cast<double>(hi) - static_cast<double>(lo));
  float f = static_cast<float>(u);
  // grid points stay inside [lo, hi] so a re-encode sees the same range
  if (f < lo) f = lo;
  if (f > hi) f = hi;
  return f;
}

// count <= 8 codes into ceil(count*k/8) bytes, LSB-first
inline void pack_group(const std::uint32_t* codes, int count, int k_bits,
                       std::uint8_t* out) {
  const std::uint32_t mask = (1u << k_bits) - 1;
  std::uint64_t acc = 0;
  for (int i = 0; i < count; ++i)
    acc |= static_cast<std::uint64_t>(codes[i] & mask) << (i * k_bits);
  const int nbytes = (count * k_bits + 7) / 8;
  for (int b = 0; b < nbytes; ++b)
    out[b] = static_cast<std::uint8_t>((acc >> (8 * b)) & 0xffu);
}

inline void unpack_group(const std::uint8_t* in, int count, int k_bits,
                         std::uint32_t* codes) {
  const std::uint32_t mask = (1u << k_bits) - 1;
  const int nbytes = (count * k_bits + 7) / 8;
  std::uint64_t acc = 0;
  for (int b = 0; b < nbytes; ++b)
    acc |= static_cast<std::uint64_t>(in[b]) << (8 * b);
  for (int i = 0; i < count; ++i)
    codes[i] = static_cast<std::uint32_t>((acc >> (i * k_bits))) & mask;
}

inline void softmax_xent_row(const float* z, int label, float* probs,
                             float* loss, int n) {
  float zmax = z[0];
  for (int j = 1; j < n; ++j) zmax = std::max(zmax, z[j]);
  float sum = 0.0f;
  for (int j = 0; j < n; ++j) {
    probs[j] = std::exp(z[j] - zmax);
    sum += probs[j];
  }
  const float inv = 1.0f / sum;
  for (int j = 0; j < n; ++j) probs[j] *= inv;
  *loss = std::log(sum) - (z[label] - zmax);
}

}  // namespace detail

// Function-pointer table selecting a kernel set; the model layer is written
// against this so the simulator (parallel) and the reference trainer (serial)
// share one implementation of the math.
struct KernelTable {
  decltype(&mqgrad::kern::matmul) matmul;
  decltype(&mqgrad::kern::matmul_at_b) matmul_at_b;
  decltype(&mqgrad::kern::matmul_a_bt) matmul_a_bt;
  decltype(&mqgrad::kern::add_rowvec) add_rowvec;
  decltype(&mqgrad::kern::relu) relu;
  decltype(&mqgrad::kern::relu_backward) relu_backward;
  decltype(&mqgrad::kern::colsum) colsum;
  decltype(&mqgrad::kern::axpy) axpy;
  decltype(&mqgrad::kern::mean_vectors) mean_vectors;
  decltype(&mqgrad::kern::softmax_xent) softmax_xent;
  decltype(&mqgrad::kern::min_max) min_max;
  decltype(&mqgrad::kern::affine_encode) affine_encode;
  decltype(&mqgrad::kern::affine_decode) affine_decode;
  decltype(&mqgrad::kern::pack_codes) pack_codes;
  decltype(&mqgrad::kern::unpack_codes) unpack_codes;
};

const KernelTable& parallel_kernels();
const KernelTable& serial_kernels();

}  // namespace mqgrad::kern
