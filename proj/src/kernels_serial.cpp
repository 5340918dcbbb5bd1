#include "mqgrad/kernels.hpp"

#include <algorithm>

namespace mqgrad::kern::ref {

void matmul(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      c[i * n + j] = detail::dot_row(a + i * k, b + j, k, n);
}

void matmul_at_b(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (int r = 0; r < m; ++r) acc += a[r * k + i] * b[r * n + j];
      c[i * n + j] = acc;
    }
}

void matmul_a_bt(const float* a, const float* b, float* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) {
      float acc = 0.0f;
      for (int r = 0; r < n; ++r) acc += a[i * n + r] * b[j * n + r];
      c[i * k + j] = acc;
    }
}

void add_rowvec(float* z, const float* b, int rows, int n) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < n; ++j) z[i * n + j] += b[j];
}

void relu(const float* z, float* out, long long n) {
  for (long long i = 0; i < n; ++i) out[i] = z[i] > 0.0f ? z[i] : 0.0f;
}

void relu_backward(const float* z, const float* da, float* dz, long long n) {
  for (long long i = 0; i < n; ++i) dz[i] = z[i] > 0.0f ? da[i] : 0.0f;
}

void colsum(const float* a, float* out, int rows, int n) {
  for (int j = 0; j < n; ++j) {
    float acc = 0.0f;
    for (int i = 0; i < rows; ++i) acc += a[i * n + j];
    out[j] = acc;
  }
}

void axpy(float* y, const float* x, float alpha, long long n) {
  for (long long i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void mean_vectors(const float* const* vecs, int count, float* out, long long n) {
  const double inv = 1.0 / static_cast<double>(count);
  for (long long i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int p = 0; p < count; ++p) acc += static_cast<double>(vecs[p][i]);
    out[i] = static_cast<float>(acc * inv);
  }
}

void softmax_xent(const float* logits, const int* labels, float* probs,
                  float* losses, int rows, int n) {
  for (int i = 0; i < rows; ++i)
    detail::softmax_xent_row(logits + i * n, labels[i], probs + i * n,
                             losses + i, n);
}

void min_max(const float* v, long long n, float* lo, float* hi) {
  float mn = v[0];
  float mx = v[0];
  for (long long i = 1; i < n; ++i) {
    mn = std::min(mn, v[i]);
    mx = std::max(mx, v[i]);
  }
  *lo = mn;
  *hi = mx;
}

void affine_encode(const float* v, long long n, float lo, float hi, int k_bits,
                   std::uint32_t* codes) {
  for (long long i = 0; i < n; ++i)
    codes[i] = detail::affine_encode_one(v[i], lo, hi, k_bits);
}

void affine_decode(const std::uint32_t* codes, long long n, float lo, float hi,
                   int k_bits, float* out) {
  for (long long i = 0; i < n; ++i)
    out[i] = detail::affine_decode_one(codes[i], lo, hi, k_bits);
}

void pack_codes(const std::uint32_t* codes, long long n, int k_bits,
                std::uint8_t* bytes) {
  const long long groups = (n + 7) / 8;
  for (long long g = 0; g < groups; ++g) {
    const int count = static_cast<int>(std::min<long long>(8, n - 8 * g));
    detail::pack_group(codes + 8 * g, count, k_bits, bytes + g * k_bits);
  }
}

void unpack_codes(const std::uint8_t* bytes, long long n, int k_bits,
                  std::uint32_t* codes) {
  const long long groups = (n + 7) / 8;
  for (long long g = 0; g < groups; ++g) {
    const int count = static_cast<int>(std::min<long long>(8, n - 8 * g));
    detail::unpack_group(bytes + g * k_bits, count, k_bits, codes + 8 * g);
  }
}

}  // namespace mqgrad::kern::ref
