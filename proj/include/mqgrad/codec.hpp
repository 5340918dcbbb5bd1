#pragma once

#include <cstdint>
#include <vector>

#include "mqgrad/kernels.hpp"

namespace mqgrad {

// K-bit affine encoding of a float vector over its [min, max] range.
// Immutable after construction.
struct QuantizedTensor {
  int bits = 0;
  float min_val = 0.0f;
  float max_val = 0.0f;
  long long len = 0;
  std::vector<std::uint8_t> payload;  // ceil(len*bits/8) bytes, zero pad bits
};

inline long long payload_bytes(long long len, int k_bits) {
  return (len * k_bits + 7) / 8;
}

// Wire size: min(4) + max(4) + len(8) + K(1) + payload.
inline long long encoded_size_bytes(long long len, int k_bits) {
  return 17 + payload_bytes(len, k_bits);
}

struct CodecScratch {
  std::vector<std::uint32_t> codes;
};

// Round-to-nearest-even onto the 2^K-1 step lattice spanning [min(v), max(v)].
// Throws std::invalid_argument on empty/non-finite input or K outside [2,8].
QuantizedTensor quantize(const float* v, long long len, int k_bits,
                         const kern::KernelTable& kt,
                         CodecScratch* scratch = nullptr);

// Reconstruct: min + code/(2^K-1) * (max-min); code 0 and 2^K-1 give the
// exact endpoints, and min==max reconstructs the constant. Validates the
// tensor and throws std::runtime_error on structural corruption.
void dequantize_into(const QuantizedTensor& qt, const kern::KernelTable& kt,
                     float* out, CodecScratch* scratch = nullptr);
std::vector<float> dequantize(const QuantizedTensor& qt,
                              const kern::KernelTable& kt);

// Bit-exact little-endian wire format:
// [min f32][max f32][len u64][K u8][payload, element i at bits i*K..i*K+K-1].
std::vector<std::uint8_t> serialize(const QuantizedTensor& qt);
QuantizedTensor deserialize(const std::uint8_t* data, std::size_t size);

}  // namespace mqgrad
