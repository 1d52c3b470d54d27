#include "stpose/kernels.hpp"

#include <omp.h>

#include <atomic>

namespace stpose::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

int max_threads() { return omp_get_max_threads(); }

}  // namespace stpose::kernels
