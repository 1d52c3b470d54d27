#include "stpose/kernels.hpp"

// OpenMP versions. Parallel loops always split work so that each output
// element has a single writer, and the per-element summation order matches
// kernels_serial.cpp exactly; results are therefore bit-identical to the
// reference for any thread count or schedule.

namespace stpose::kernels::omp {

template <class T>
void conv2d_forward(const ConvDims& d, const T* x, const T* w, const T* b, T* y) {
  const int ho = d.hout(), wo = d.wout();
#pragma omp parallel for schedule(static)
  for (int co = 0; co < d.cout; ++co) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        T acc = b[co];
        for (int ci = 0; ci < d.cin; ++ci) {
          for (int ky = 0; ky < d.kh; ++ky) {
            const T* xr = x + (ci * d.h + oy * d.stride + ky) * d.w + ox * d.stride;
            const T* wr = w + ((co * d.cin + ci) * d.kh + ky) * d.kw;
            for (int kx = 0; kx < d.kw; ++kx) acc += xr[kx] * wr[kx];
          }
        }
        y[(co * ho + oy) * wo + ox] = acc;
      }
    }
  }
}

template <class T>
void conv2d_backward_input(const ConvDims& d, const T* dy, const T* w, T* dx_acc) {
  const int ho = d.hout(), wo = d.wout();
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < d.cin; ++ci) {
    for (int iy = 0; iy < d.h; ++iy) {
      for (int ix = 0; ix < d.w; ++ix) {
        T acc = 0;
        for (int co = 0; co < d.cout; ++co) {
          for (int ky = 0; ky < d.kh; ++ky) {
            const int ty = iy - ky;
            if (ty < 0 || ty % d.stride != 0) continue;
            const int oy = ty / d.stride;
            if (oy >= ho) continue;
            for (int kx = 0; kx < d.kw; ++kx) {
              const int tx = ix - kx;
              if (tx < 0 || tx % d.stride != 0) continue;
              const int ox = tx / d.stride;
              if (ox >= wo) continue;
              acc += dy[(co * ho + oy) * wo + ox] * w[((co * d.cin + ci) * d.kh + ky) * d.kw + kx];
            }
          }
        }
        dx_acc[(ci * d.h + iy) * d.w + ix] += acc;
      }
    }
  }
}

template <class T>
void conv2d_backward_filter(const ConvDims& d, const T* x, const T* dy, T* dw_acc, T* db_acc) {
  const int ho = d.hout(), wo = d.wout();
#pragma omp parallel for schedule(static)
  for (int co = 0; co < d.cout; ++co) {
    for (int ci = 0; ci < d.cin; ++ci) {
      for (int ky = 0; ky < d.kh; ++ky) {
        for (int kx = 0; kx < d.kw; ++kx) {
          T acc = 0;
          for (int oy = 0; oy < ho; ++oy) {
            const T* xr = x + (ci * d.h + oy * d.stride + ky) * d.w + kx;
            const T* gr = dy + (co * ho + oy) * wo;
            for (int ox = 0; ox < wo; ++ox) acc += xr[ox * d.stride] * gr[ox];
          }
          dw_acc[((co * d.cin + ci) * d.kh + ky) * d.kw + kx] += acc;
        }
      }
    }
    T acc = 0;
    const T* gr = dy + co * ho * wo;
    for (int i = 0; i < ho * wo; ++i) acc += gr[i];
    db_acc[co] += acc;
  }
}

template <class T>
void fc_forward(int dout, int din, const T* x, const T* w, const T* b, T* y) {
#pragma omp parallel for schedule(static)
  for (int o = 0; o < dout; ++o) {
    T acc = b[o];
    const T* wr = w + static_cast<std::size_t>(o) * din;
    for (int i = 0; i < din; ++i) acc += wr[i] * x[i];
    y[o] = acc;
  }
}

template <class T>
void fc_backward_input(int dout, int din, const T* dy, const T* w, T* dx_acc) {
  // Gather per input element; ascending output order matches the reference
  // scatter's per-element accumulation order.
#pragma omp parallel for schedule(static)
  for (int i = 0; i < din; ++i) {
    T acc = 0;
    for (int o = 0; o < dout; ++o) acc += dy[o] * w[static_cast<std::size_t>(o) * din + i];
    dx_acc[i] += acc;
  }
}

template <class T>
void fc_backward_params(int dout, int din, const T* x, const T* dy, T* dw_acc, T* db_acc) {
#pragma omp parallel for schedule(static)
  for (int o = 0; o < dout; ++o) {
    const T g = dy[o];
    T* wr = dw_acc + static_cast<std::size_t>(o) * din;
    for (int i = 0; i < din; ++i) wr[i] += g * x[i];
    db_acc[o] += g;
  }
}

template <class T>
void maxpool_forward(const PoolDims& d, const T* x, T* y, std::int32_t* argmax) {
  const int ho = d.hout(), wo = d.wout();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < d.c; ++c) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        std::int32_t best_idx = -1;
        T best = 0;
        for (int ky = 0; ky < d.k; ++ky) {
          for (int kx = 0; kx < d.k; ++kx) {
            const int iy = oy * d.stride + ky;
            const int ix = ox * d.stride + kx;
            const std::int32_t idx = (c * d.h + iy) * d.w + ix;
            const T v = x[idx];
            if (best_idx < 0 || v > best) {
              best = v;
              best_idx = idx;
            }
          }
        }
        const int out = (c * ho + oy) * wo + ox;
        y[out] = best;
        argmax[out] = best_idx;
      }
    }
  }
}

template <class T>
void maxpool_backward(const PoolDims& d, const T* dy, const std::int32_t* argmax, T* dx_acc) {
  // Windows can overlap within a channel (stride < k), so the scatter is
  // parallel over channels only; argmax never crosses channel planes.
  const int ho = d.hout(), wo = d.wout();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < d.c; ++c) {
    const int base = c * ho * wo;
    for (int i = 0; i < ho * wo; ++i) dx_acc[argmax[base + i]] += dy[base + i];
  }
}

#define STPOSE_INSTANTIATE_KERNELS(T)                                                              \
  template void conv2d_forward<T>(const ConvDims&, const T*, const T*, const T*, T*);              \
  template void conv2d_backward_input<T>(const ConvDims&, const T*, const T*, T*);                 \
  template void conv2d_backward_filter<T>(const ConvDims&, const T*, const T*, T*, T*);            \
  template void fc_forward<T>(int, int, const T*, const T*, const T*, T*);                         \
  template void fc_backward_input<T>(int, int, const T*, const T*, T*);                            \
  template void fc_backward_params<T>(int, int, const T*, const T*, T*, T*);                       \
  template void maxpool_forward<T>(const PoolDims&, const T*, T*, std::int32_t*);                  \
  template void maxpool_backward<T>(const PoolDims&, const T*, const std::int32_t*, T*);

STPOSE_INSTANTIATE_KERNELS(float)
STPOSE_INSTANTIATE_KERNELS(double)

}  // namespace stpose::kernels::omp
