// Timing comparison of the OpenMP kernels against the serial reference.
// Results are also cross-checked so a speedup never comes from computing
// something different.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "mqgrad/kernels.hpp"
#include "mqgrad/rng.hpp"

using namespace mqgrad;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void row(const char* name, double serial_ms, double parallel_ms, bool match) {
  std::printf("%-22s %10.3f %10.3f %8.2fx  %s\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms, match ? "outputs match" : "MISMATCH");
}

}  // namespace

int main() {
  Rng rng(42);
  std::printf("%-22s %10s %10s %9s\n", "kernel", "serial ms", "omp ms",
              "speedup");

  {
    const int m = 256, k = 256, n = 256;
    std::vector<float> a(m * k), b(k * n), c1(m * n), c2(m * n);
    for (auto& v : a) v = static_cast<float>(rng.normal());
    for (auto& v : b) v = static_cast<float>(rng.normal());
    const double ts = time_ms([&] { kern::ref::matmul(a.data(), b.data(), c1.data(), m, k, n); }, 5);
    const double tp = time_ms([&] { kern::matmul(a.data(), b.data(), c2.data(), m, k, n); }, 5);
    row("matmul 256^3", ts, tp, std::memcmp(c1.data(), c2.data(), c1.size() * 4) == 0);
  }
  {
    const long long n = 4'000'000;
    std::vector<float> z(n), o1(n), o2(n);
    for (auto& v : z) v = static_cast<float>(rng.normal());
    const double ts = time_ms([&] { kern::ref::relu(z.data(), o1.data(), n); }, 10);
    const double tp = time_ms([&] { kern::relu(z.data(), o2.data(), n); }, 10);
    row("relu 4M", ts, tp, std::memcmp(o1.data(), o2.data(), n * 4) == 0);
  }
  {
    const long long n = 2'000'000;
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    std::vector<std::uint32_t> c1(n), c2(n);
    float lo, hi;
    kern::min_max(v.data(), n, &lo, &hi);
    const double ts = time_ms([&] { kern::ref::affine_encode(v.data(), n, lo, hi, 8, c1.data()); }, 5);
    const double tp = time_ms([&] { kern::affine_encode(v.data(), n, lo, hi, 8, c2.data()); }, 5);
    row("affine_encode 2M", ts, tp, std::memcmp(c1.data(), c2.data(), n * 4) == 0);

    std::vector<std::uint8_t> b1(n), b2(n);  // K=8: one byte per element
    const double ps = time_ms([&] { kern::ref::pack_codes(c1.data(), n, 8, b1.data()); }, 5);
    const double pp = time_ms([&] { kern::pack_codes(c1.data(), n, 8, b2.data()); }, 5);
    row("pack_codes 2M", ps, pp, std::memcmp(b1.data(), b2.data(), n) == 0);
  }
  {
    const long long n = 1'000'000;
    const int count = 8;
    std::vector<std::vector<float>> vs(count, std::vector<float>(n));
    for (auto& v : vs)
      for (auto& x : v) x = static_cast<float>(rng.normal());
    std::vector<const float*> ptrs;
    for (auto& v : vs) ptrs.push_back(v.data());
    std::vector<float> o1(n), o2(n);
    const double ts = time_ms([&] { kern::ref::mean_vectors(ptrs.data(), count, o1.data(), n); }, 5);
    const double tp = time_ms([&] { kern::mean_vectors(ptrs.data(), count, o2.data(), n); }, 5);
    row("mean_vectors 8x1M", ts, tp, std::memcmp(o1.data(), o2.data(), n * 4) == 0);
  }
  return 0;
}
