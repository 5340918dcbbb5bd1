#include "mqgrad/codec.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace mqgrad {

namespace {

void check_bits(int k_bits) {
  if (k_bits < 2 || k_bits > 8)
    throw std::invalid_argument("codec: K must be in [2,8]");
}

void validate(const QuantizedTensor& qt) {
  check_bits(qt.bits);
  if (qt.len < 1) throw std::runtime_error("codec: corrupt tensor, len < 1");
  if (!std::isfinite(qt.min_val) || !std::isfinite(qt.max_val) ||
      qt.min_val > qt.max_val)
    throw std::runtime_error("codec: corrupt tensor, bad range");
  if (static_cast<long long>(qt.payload.size()) != payload_bytes(qt.len, qt.bits))
    throw std::runtime_error(
        "codec: corrupt tensor, payload length inconsistent with len/bits");
  const int pad_bits = static_cast<int>(qt.payload.size() * 8 - qt.len * qt.bits);
  if (pad_bits > 0 && (qt.payload.back() >> (8 - pad_bits)) != 0)
    throw std::runtime_error("codec: corrupt tensor, nonzero pad bits");
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t float_bits(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  return u;
}

float bits_float(std::uint32_t u) {
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace

QuantizedTensor quantize(const float* v, long long len, int k_bits,
                         const kern::KernelTable& kt, CodecScratch* scratch) {
  check_bits(k_bits);
  if (len < 1) throw std::invalid_argument("codec: cannot quantize empty vector");
  for (long long i = 0; i < len; ++i)
    if (!std::isfinite(v[i]))
      throw std::invalid_argument("codec: cannot quantize non-finite value");

  QuantizedTensor qt;
  qt.bits = k_bits;
  qt.len = len;
  kt.min_max(v, len, &qt.min_val, &qt.max_val);

  CodecScratch local;
  CodecScratch& s = scratch ? *scratch : local;
  s.codes.resize(len);
  kt.affine_encode(v, len, qt.min_val, qt.max_val, k_bits, s.codes.data());
  qt.payload.assign(payload_bytes(len, k_bits), 0);
  kt.pack_codes(s.codes.data(), len, k_bits, qt.payload.data());
  return qt;
}

void dequantize_into(const QuantizedTensor& qt, const kern::KernelTable& kt,
                     float* out, CodecScratch* scratch) {
  validate(qt);
  CodecScratch local;
  CodecScratch& s = scratch ? *scratch : local;
  s.codes.resize(qt.len);
  kt.unpack_codes(qt.payload.data(), qt.len, qt.bits, s.codes.data());
  kt.affine_decode(s.codes.data(), qt.len, qt.min_val, qt.max_val, qt.bits, out);
}

std::vector<float> dequantize(const QuantizedTensor& qt,
                              const kern::KernelTable& kt) {
  std::vector<float> out(qt.len);
  dequantize_into(qt, kt, out.data());
  return out;
}

std::vector<std::uint8_t> serialize(const QuantizedTensor& qt) {
  validate(qt);
  std::vector<std::uint8_t> out;
  out.reserve(17 + qt.payload.size());
  put_u32(out, float_bits(qt.min_val));
  put_u32(out, float_bits(qt.max_val));
  put_u64(out, static_cast<std::uint64_t>(qt.len));
  out.push_back(static_cast<std::uint8_t>(qt.bits));
  out.insert(out.end(), qt.payload.begin(), qt.payload.end());
  return out;
}

QuantizedTensor deserialize(const std::uint8_t* data, std::size_t size) {
  if (size < 17) throw std::runtime_error("codec: message shorter than header");
  std::uint32_t mn = 0, mx = 0;
  std::uint64_t len = 0;
  for (int i = 0; i < 4; ++i) mn |= static_cast<std::uint32_t>(data[i]) << (8 * i);
  for (int i = 0; i < 4; ++i) mx |= static_cast<std::uint32_t>(data[4 + i]) << (8 * i);
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(data[8 + i]) << (8 * i);
  QuantizedTensor qt;
  qt.min_val = bits_float(mn);
  qt.max_val = bits_float(mx);
  qt.len = static_cast<long long>(len);
  qt.bits = data[16];
  if (qt.bits < 2 || qt.bits > 8)
    throw std::runtime_error("codec: corrupt tensor, K out of range");
  if (qt.len < 1 || qt.len > (1ll << 40))
    throw std::runtime_error("codec: corrupt tensor, implausible len");
  if (static_cast<long long>(size) != encoded_size_bytes(qt.len, qt.bits))
    throw std::runtime_error(
        "codec: message size inconsistent with header len/bits");
  qt.payload.assign(data + 17, data + size);
  validate(qt);
  return qt;
}

}  // namespace mqgrad
