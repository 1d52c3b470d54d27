// Timing and equivalence harness for the serial and OpenMP kernel variants.
// Runs each kernel at the shapes the default network actually uses, reports
// the median wall time per call for both variants, and verifies the outputs
// are bit-identical. Exit code 1 on any mismatch.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "stpose/kernels.hpp"
#include "stpose/rng.hpp"

using namespace stpose;
using kernels::ConvDims;
using kernels::PoolDims;

namespace {

constexpr int kReps = 9;

std::vector<float> random_buf(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

// Median wall milliseconds of kReps calls to fn.
template <class Fn>
double median_ms(Fn&& fn) {
  std::vector<double> ms;
  for (int r = 0; r < kReps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const std::chrono::duration<double, std::milli> dt = std::chrono::steady_clock::now() - t0;
    ms.push_back(dt.count());
  }
  std::sort(ms.begin(), ms.end());
  return ms[ms.size() / 2];
}

int failures = 0;

void report(const std::string& name, double serial_ms, double omp_ms, bool identical) {
  std::printf("%-24s serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n", name.c_str(),
              serial_ms, omp_ms, serial_ms / (omp_ms > 0 ? omp_ms : 1e-9),
              identical ? "identical" : "MISMATCH");
  if (!identical) ++failures;
}

// Runs one kernel both ways into separate output buffers. `run` must write its
// output deterministically; accumulator outputs start zeroed each call so the
// comparison sees exactly one accumulation.
template <class Run>
void compare(const std::string& name, std::vector<float>& out_a, std::vector<float>& out_b,
             Run&& run) {
  const double serial_ms = median_ms([&] {
    std::fill(out_a.begin(), out_a.end(), 0.0f);
    run(false, out_a);
  });
  const double omp_ms = median_ms([&] {
    std::fill(out_b.begin(), out_b.end(), 0.0f);
    run(true, out_b);
  });
  report(name, serial_ms, omp_ms, bits_equal(out_a, out_b));
}

}  // namespace

int main() {
  Rng rng = Rng::substream(2024, Rng::tag("bench.kernels"));

  // first conv of the default 64x64 network
  const ConvDims c1{1, 64, 64, 8, 5, 5, 1};
  // second conv after pooling
  const ConvDims c2{8, 30, 30, 16, 3, 3, 1};
  const PoolDims p1{8, 60, 60, 2, 2};
  const int fc_out = 256, fc_in = 16 * 14 * 14;

  std::printf("kernel timing, median of %d calls, %d thread(s) for omp\n\n", kReps,
              kernels::max_threads());

  {
    const auto x = random_buf(static_cast<std::size_t>(c1.cin) * c1.h * c1.w, rng);
    const auto w = random_buf(static_cast<std::size_t>(c1.cout) * c1.cin * c1.kh * c1.kw, rng);
    const auto b = random_buf(c1.cout, rng);
    const std::size_t ylen = static_cast<std::size_t>(c1.cout) * c1.hout() * c1.wout();
    std::vector<float> ya(ylen), yb(ylen);
    compare("conv2d_forward 1>8", ya, yb, [&](bool par, std::vector<float>& y) {
      par ? kernels::omp::conv2d_forward(c1, x.data(), w.data(), b.data(), y.data())
          : kernels::serial::conv2d_forward(c1, x.data(), w.data(), b.data(), y.data());
    });

    const auto dy = random_buf(ylen, rng);
    std::vector<float> dxa(x.size()), dxb(x.size());
    compare("conv2d_back_input 1>8", dxa, dxb, [&](bool par, std::vector<float>& dx) {
      par ? kernels::omp::conv2d_backward_input(c1, dy.data(), w.data(), dx.data())
          : kernels::serial::conv2d_backward_input(c1, dy.data(), w.data(), dx.data());
    });

    // filter and bias gradients ride in one buffer so one compare covers both
    std::vector<float> dwa(w.size() + b.size()), dwb(w.size() + b.size());
    compare("conv2d_back_filter 1>8", dwa, dwb, [&](bool par, std::vector<float>& dw) {
      par ? kernels::omp::conv2d_backward_filter(c1, x.data(), dy.data(), dw.data(),
                                                 dw.data() + w.size())
          : kernels::serial::conv2d_backward_filter(c1, x.data(), dy.data(), dw.data(),
                                                    dw.data() + w.size());
    });
  }

  {
    const auto x = random_buf(static_cast<std::size_t>(c2.cin) * c2.h * c2.w, rng);
    const auto w = random_buf(static_cast<std::size_t>(c2.cout) * c2.cin * c2.kh * c2.kw, rng);
    const auto b = random_buf(c2.cout, rng);
    const std::size_t ylen = static_cast<std::size_t>(c2.cout) * c2.hout() * c2.wout();
    std::vector<float> ya(ylen), yb(ylen);
    compare("conv2d_forward 8>16", ya, yb, [&](bool par, std::vector<float>& y) {
      par ? kernels::omp::conv2d_forward(c2, x.data(), w.data(), b.data(), y.data())
          : kernels::serial::conv2d_forward(c2, x.data(), w.data(), b.data(), y.data());
    });
  }

  {
    const auto x = random_buf(static_cast<std::size_t>(p1.c) * p1.h * p1.w, rng);
    const std::size_t ylen = static_cast<std::size_t>(p1.c) * p1.hout() * p1.wout();
    std::vector<float> ya(ylen), yb(ylen);
    std::vector<std::int32_t> arga(ylen), argb(ylen);
    compare("maxpool_forward", ya, yb, [&](bool par, std::vector<float>& y) {
      par ? kernels::omp::maxpool_forward(p1, x.data(), y.data(),
                                          (&y == &ya ? arga : argb).data())
          : kernels::serial::maxpool_forward(p1, x.data(), y.data(),
                                             (&y == &ya ? arga : argb).data());
    });
    if (arga != argb) {
      std::printf("maxpool argmax MISMATCH\n");
      ++failures;
    }

    const auto dy = random_buf(ylen, rng);
    std::vector<float> dxa(x.size()), dxb(x.size());
    compare("maxpool_backward", dxa, dxb, [&](bool par, std::vector<float>& dx) {
      par ? kernels::omp::maxpool_backward(p1, dy.data(), arga.data(), dx.data())
          : kernels::serial::maxpool_backward(p1, dy.data(), arga.data(), dx.data());
    });
  }

  {
    const auto x = random_buf(fc_in, rng);
    const auto w = random_buf(static_cast<std::size_t>(fc_out) * fc_in, rng);
    const auto b = random_buf(fc_out, rng);
    std::vector<float> ya(fc_out), yb(fc_out);
    compare("fc_forward 3136>256", ya, yb, [&](bool par, std::vector<float>& y) {
      par ? kernels::omp::fc_forward(fc_out, fc_in, x.data(), w.data(), b.data(), y.data())
          : kernels::serial::fc_forward(fc_out, fc_in, x.data(), w.data(), b.data(), y.data());
    });

    const auto dy = random_buf(fc_out, rng);
    std::vector<float> dxa(fc_in), dxb(fc_in);
    compare("fc_back_input", dxa, dxb, [&](bool par, std::vector<float>& dx) {
      par ? kernels::omp::fc_backward_input(fc_out, fc_in, dy.data(), w.data(), dx.data())
          : kernels::serial::fc_backward_input(fc_out, fc_in, dy.data(), w.data(), dx.data());
    });

    std::vector<float> dwa(w.size() + b.size()), dwb(w.size() + b.size());
    compare("fc_back_params", dwa, dwb, [&](bool par, std::vector<float>& dw) {
      par ? kernels::omp::fc_backward_params(fc_out, fc_in, x.data(), dy.data(), dw.data(),
                                             dw.data() + w.size())
          : kernels::serial::fc_backward_params(fc_out, fc_in, x.data(), dy.data(), dw.data(),
                                                dw.data() + w.size());
    });
  }

  if (failures) {
    std::printf("\n%d kernel(s) diverged between variants\n", failures);
    return 1;
  }
  std::printf("\nall kernels bit-identical across variants\n");
  return 0;
}
