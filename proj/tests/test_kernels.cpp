#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "mqgrad/kernels.hpp"
#include "mqgrad/rng.hpp"

using namespace mqgrad;

namespace {

std::vector<float> random_vec(Rng& rng, long long n, double lo = -2.0,
                              double hi = 2.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

}  // namespace

TEST_SUITE("kernels") {

// The parallel table must be bit-for-bit interchangeable with the serial one;
// sizes straddle the internal parallelization threshold.
TEST_CASE("elementwise kernels match serial bitwise") {
  Rng rng(11);
  for (long long n : {1LL, 7LL, 4095LL, 4096LL, 4097LL, 20000LL}) {
    auto z = random_vec(rng, n);
    auto da = random_vec(rng, n);

    std::vector<float> a(n), b(n);
    kern::relu(z.data(), a.data(), n);
    kern::ref::relu(z.data(), b.data(), n);
    CHECK(a == b);

    kern::relu_backward(z.data(), da.data(), a.data(), n);
    kern::ref::relu_backward(z.data(), da.data(), b.data(), n);
    CHECK(a == b);

    auto y1 = random_vec(rng, n);
    auto y2 = y1;
    kern::axpy(y1.data(), z.data(), 0.37f, n);
    kern::ref::axpy(y2.data(), z.data(), 0.37f, n);
    CHECK(y1 == y2);
  }
}

TEST_CASE("matmul family matches serial bitwise") {
  Rng rng(12);
  struct Shape {
    int m, k, n;
  };
  for (Shape s : {Shape{1, 1, 1}, Shape{3, 5, 7}, Shape{64, 64, 64},
                  Shape{130, 40, 33}}) {
    auto a = random_vec(rng, 1LL * s.m * s.k);
    auto b = random_vec(rng, 1LL * s.k * s.n);
    std::vector<float> c1(1LL * s.m * s.n), c2(c1.size());
    kern::matmul(a.data(), b.data(), c1.data(), s.m, s.k, s.n);
    kern::ref::matmul(a.data(), b.data(), c2.data(), s.m, s.k, s.n);
    CHECK(c1 == c2);

    auto at = random_vec(rng, 1LL * s.m * s.k);
    auto bt = random_vec(rng, 1LL * s.m * s.n);
    std::vector<float> d1(1LL * s.k * s.n), d2(d1.size());
    kern::matmul_at_b(at.data(), bt.data(), d1.data(), s.m, s.k, s.n);
    kern::ref::matmul_at_b(at.data(), bt.data(), d2.data(), s.m, s.k, s.n);
    CHECK(d1 == d2);

    auto e = random_vec(rng, 1LL * s.m * s.n);
    auto f = random_vec(rng, 1LL * s.k * s.n);
    std::vector<float> g1(1LL * s.m * s.k), g2(g1.size());
    kern::matmul_a_bt(e.data(), f.data(), g1.data(), s.m, s.n, s.k);
    kern::ref::matmul_a_bt(e.data(), f.data(), g2.data(), s.m, s.n, s.k);
    CHECK(g1 == g2);
  }
}

TEST_CASE("matmul against double-accumulation oracle") {
  Rng rng(13);
  const int m = 9, k = 17, n = 5;
  auto a = random_vec(rng, m * k);
  auto b = random_vec(rng, k * n);
  std::vector<float> c(m * n);
  kern::matmul(a.data(), b.data(), c.data(), m, k, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += double(a[i * k + t]) * b[t * n + j];
      CHECK(c[i * n + j] == doctest::Approx(acc).epsilon(1e-5));
    }
  }
}

TEST_CASE("add_rowvec, colsum, mean_vectors match serial bitwise") {
  Rng rng(14);
  const int rows = 37, n = 129;
  auto bias = random_vec(rng, n);
  auto z1 = random_vec(rng, rows * n);
  auto z2 = z1;
  kern::add_rowvec(z1.data(), bias.data(), rows, n);
  kern::ref::add_rowvec(z2.data(), bias.data(), rows, n);
  CHECK(z1 == z2);

  std::vector<float> s1(n), s2(n);
  kern::colsum(z1.data(), s1.data(), rows, n);
  kern::ref::colsum(z1.data(), s2.data(), rows, n);
  CHECK(s1 == s2);

  std::vector<std::vector<float>> vs;
  std::vector<const float*> ptrs;
  for (int p = 0; p < 5; ++p) vs.push_back(random_vec(rng, 6000));
  for (auto& v : vs) ptrs.push_back(v.data());
  std::vector<float> m1(6000), m2(6000);
  kern::mean_vectors(ptrs.data(), 5, m1.data(), 6000);
  kern::ref::mean_vectors(ptrs.data(), 5, m2.data(), 6000);
  CHECK(m1 == m2);
  // oracle: double mean of the first element
  double acc = 0.0;
  for (auto& v : vs) acc += v[0];
  CHECK(m1[0] == static_cast<float>(acc / 5.0));
}

TEST_CASE("softmax rows are normalized, stable under large logits") {
  const int rows = 2, n = 3;
  // second row has huge logits: max subtraction must keep exp() finite
  std::vector<float> logits = {0.f, 1.f, 2.f, 500.f, 501.f, 502.f};
  std::vector<int> labels = {2, 0};
  std::vector<float> probs(rows * n), losses(rows);
  kern::softmax_xent(logits.data(), labels.data(), probs.data(), losses.data(),
                     rows, n);
  for (int r = 0; r < rows; ++r) {
    float sum = 0.f;
    for (int j = 0; j < n; ++j) {
      CHECK(std::isfinite(probs[r * n + j]));
      sum += probs[r * n + j];
    }
    CHECK(sum == doctest::Approx(1.0f).epsilon(1e-5));
    CHECK(std::isfinite(losses[r]));
  }
  // rows with the same logit gaps give the same distribution
  CHECK(probs[0] == probs[3]);
  CHECK(losses[1] == doctest::Approx(-std::log(double(probs[3]))).epsilon(1e-5));

  std::vector<float> probs2(rows * n), losses2(rows);
  kern::ref::softmax_xent(logits.data(), labels.data(), probs2.data(),
                          losses2.data(), rows, n);
  CHECK(probs == probs2);
  CHECK(losses == losses2);
}

TEST_CASE("min_max equals std::minmax_element") {
  Rng rng(15);
  for (long long n : {1LL, 2LL, 4095LL, 4096LL, 9001LL}) {
    auto v = random_vec(rng, n, -100.0, 100.0);
    float lo1 = 0, hi1 = 0, lo2 = 0, hi2 = 0;
    kern::min_max(v.data(), n, &lo1, &hi1);
    kern::ref::min_max(v.data(), n, &lo2, &hi2);
    auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    CHECK(lo1 == *mn);
    CHECK(hi1 == *mx);
    CHECK(lo1 == lo2);
    CHECK(hi1 == hi2);
  }
}

TEST_CASE("pack/unpack is the identity for every length up to 16") {
  Rng rng(16);
  for (int k = 2; k <= 8; ++k) {
    const std::uint32_t top = (1u << k) - 1;
    for (int len = 1; len <= 16; ++len) {
      for (int trial = 0; trial < 64; ++trial) {
        std::vector<std::uint32_t> codes(len);
        for (auto& c : codes) {
          if (trial == 0)
            c = 0;
          else if (trial == 1)
            c = top;
          else
            c = static_cast<std::uint32_t>(rng.next_u64() % (top + 1));
        }
        std::vector<std::uint8_t> bytes((1LL * len * k + 7) / 8, 0);
        kern::pack_codes(codes.data(), len, k, bytes.data());
        std::vector<std::uint32_t> back(len);
        kern::unpack_codes(bytes.data(), len, k, back.data());
        REQUIRE(back == codes);

        std::vector<std::uint8_t> bytes2(bytes.size(), 0);
        kern::ref::pack_codes(codes.data(), len, k, bytes2.data());
        REQUIRE(bytes == bytes2);
      }
    }
  }
}

TEST_CASE("pack places element i at bits [i*k, i*k+k)") {
  // k=2, codes [0,1,2,3] -> byte 0b11100100 = 0xE4
  std::vector<std::uint32_t> codes = {0, 1, 2, 3};
  std::vector<std::uint8_t> bytes(1, 0);
  kern::pack_codes(codes.data(), 4, 2, bytes.data());
  CHECK(bytes[0] == 0xE4);
  // k=3, codes [5, 6] -> bits 101 | 110<<3 = 0b110101 = 0x35
  std::vector<std::uint32_t> c2 = {5, 6};
  std::vector<std::uint8_t> b2(1, 0);
  kern::pack_codes(c2.data(), 2, 3, b2.data());
  CHECK(b2[0] == 0x35);
}

TEST_CASE("pack/unpack randomized beyond 16 elements, both variants agree") {
  Rng rng(17);
  for (int k = 2; k <= 8; ++k) {
    const std::uint32_t top = (1u << k) - 1;
    for (long long len : {17LL, 1000LL, 4099LL}) {
      std::vector<std::uint32_t> codes(len);
      for (auto& c : codes)
        c = static_cast<std::uint32_t>(rng.next_u64() % (top + 1));
      std::vector<std::uint8_t> p1((len * k + 7) / 8, 0), p2((len * k + 7) / 8, 0);
      kern::pack_codes(codes.data(), len, k, p1.data());
      kern::ref::pack_codes(codes.data(), len, k, p2.data());
      REQUIRE(p1 == p2);
      std::vector<std::uint32_t> u1(len), u2(len);
      kern::unpack_codes(p1.data(), len, k, u1.data());
      kern::ref::unpack_codes(p1.data(), len, k, u2.data());
      REQUIRE(u1 == codes);
      REQUIRE(u2 == codes);
    }
  }
}

TEST_CASE("affine encode/decode parallel matches serial bitwise") {
  Rng rng(18);
  for (int k : {2, 5, 8}) {
    for (long long n : {3LL, 4097LL}) {
      auto v = random_vec(rng, n, -3.0, 7.0);
      float lo, hi;
      kern::min_max(v.data(), n, &lo, &hi);
      std::vector<std::uint32_t> c1(n), c2(n);
      kern::affine_encode(v.data(), n, lo, hi, k, c1.data());
      kern::ref::affine_encode(v.data(), n, lo, hi, k, c2.data());
      CHECK(c1 == c2);
      std::vector<float> d1(n), d2(n);
      kern::affine_decode(c1.data(), n, lo, hi, k, d1.data());
      kern::ref::affine_decode(c1.data(), n, lo, hi, k, d2.data());
      CHECK(d1 == d2);
    }
  }
}

TEST_CASE("kernel tables dispatch to the declared variants") {
  const kern::KernelTable& par = kern::parallel_kernels();
  const kern::KernelTable& ser = kern::serial_kernels();
  CHECK(par.matmul == &kern::matmul);
  CHECK(ser.matmul == &kern::ref::matmul);
  CHECK(par.pack_codes == &kern::pack_codes);
  CHECK(ser.pack_codes == &kern::ref::pack_codes);
}

}  // TEST_SUITE
