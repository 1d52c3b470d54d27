#pragma once

#include <cstdint>

namespace stpose::kernels {

// Dense inner loops for the three layer families that carry essentially all of
// the arithmetic. Two implementations share each signature: a plain serial
// reference (namespace serial) and an OpenMP version (namespace omp). They are
// bit-identical for any thread count because every output element is written by
// exactly one thread and the per-element summation order is the same in both.
//
// Backward kernels accumulate (+=) into their destination so a caller can fold
// several contributions into one gradient buffer.

struct ConvDims {
  int cin, h, w;     // input planes and size
  int cout, kh, kw;  // filter bank
  int stride;
  int hout() const { return (h - kh) / stride + 1; }
  int wout() const { return (w - kw) / stride + 1; }
};

struct PoolDims {
  int c, h, w;
  int k, stride;
  int hout() const { return (h - k) / stride + 1; }
  int wout() const { return (w - k) / stride + 1; }
};

namespace serial {

template <class T>
void conv2d_forward(const ConvDims& d, const T* x, const T* w, const T* b, T* y);
template <class T>
void conv2d_backward_input(const ConvDims& d, const T* dy, const T* w, T* dx_acc);
template <class T>
void conv2d_backward_filter(const ConvDims& d, const T* x, const T* dy, T* dw_acc, T* db_acc);

template <class T>
void fc_forward(int dout, int din, const T* x, const T* w, const T* b, T* y);
template <class T>
void fc_backward_input(int dout, int din, const T* dy, const T* w, T* dx_acc);
template <class T>
void fc_backward_params(int dout, int din, const T* x, const T* dy, T* dw_acc, T* db_acc);

// argmax holds, per output element, the flat row-major index into the input;
// ties resolve to the lowest flat index.
template <class T>
void maxpool_forward(const PoolDims& d, const T* x, T* y, std::int32_t* argmax);
template <class T>
void maxpool_backward(const PoolDims& d, const T* dy, const std::int32_t* argmax, T* dx_acc);

}  // namespace serial

namespace omp {

template <class T>
void conv2d_forward(const ConvDims& d, const T* x, const T* w, const T* b, T* y);
template <class T>
void conv2d_backward_input(const ConvDims& d, const T* dy, const T* w, T* dx_acc);
template <class T>
void conv2d_backward_filter(const ConvDims& d, const T* x, const T* dy, T* dw_acc, T* db_acc);

template <class T>
void fc_forward(int dout, int din, const T* x, const T* w, const T* b, T* y);
template <class T>
void fc_backward_input(int dout, int din, const T* dy, const T* w, T* dx_acc);
template <class T>
void fc_backward_params(int dout, int din, const T* x, const T* dy, T* dw_acc, T* db_acc);

template <class T>
void maxpool_forward(const PoolDims& d, const T* x, T* y, std::int32_t* argmax);
template <class T>
void maxpool_backward(const PoolDims& d, const T* dy, const std::int32_t* argmax, T* dx_acc);

}  // namespace omp

// Runtime switch used by the tape ops. Defaults to the OpenMP kernels; tests
// and the kernel benchmark flip it to compare against the reference.
bool parallel_enabled();
void set_parallel(bool on);
int max_threads();

template <class T>
void conv2d_forward(const ConvDims& d, const T* x, const T* w, const T* b, T* y) {
  parallel_enabled() ? omp::conv2d_forward(d, x, w, b, y) : serial::conv2d_forward(d, x, w, b, y);
}
template <class T>
void conv2d_backward_input(const ConvDims& d, const T* dy, const T* w, T* dx_acc) {
  parallel_enabled() ? omp::conv2d_backward_input(d, dy, w, dx_acc)
                     : serial::conv2d_backward_input(d, dy, w, dx_acc);
}
template <class T>
void conv2d_backward_filter(const ConvDims& d, const T* x, const T* dy, T* dw_acc, T* db_acc) {
  parallel_enabled() ? omp::conv2d_backward_filter(d, x, dy, dw_acc, db_acc)
                     : serial::conv2d_backward_filter(d, x, dy, dw_acc, db_acc);
}
template <class T>
void fc_forward(int dout, int din, const T* x, const T* w, const T* b, T* y) {
  parallel_enabled() ? omp::fc_forward(dout, din, x, w, b, y) : serial::fc_forward(dout, din, x, w, b, y);
}
template <class T>
void fc_backward_input(int dout, int din, const T* dy, const T* w, T* dx_acc) {
  parallel_enabled() ? omp::fc_backward_input(dout, din, dy, w, dx_acc)
                     : serial::fc_backward_input(dout, din, dy, w, dx_acc);
}
template <class T>
void fc_backward_params(int dout, int din, const T* x, const T* dy, T* dw_acc, T* db_acc) {
  parallel_enabled() ? omp::fc_backward_params(dout, din, x, dy, dw_acc, db_acc)
                     : serial::fc_backward_params(dout, din, x, dy, dw_acc, db_acc);
}
template <class T>
void maxpool_forward(const PoolDims& d, const T* x, T* y, std::int32_t* argmax) {
  parallel_enabled() ? omp::maxpool_forward(d, x, y, argmax) : serial::maxpool_forward(d, x, y, argmax);
}
template <class T>
void maxpool_backward(const PoolDims& d, const T* dy, const std::int32_t* argmax, T* dx_acc) {
  parallel_enabled() ? omp::maxpool_backward(d, dy, argmax, dx_acc)
                     : serial::maxpool_backward(d, dy, argmax, dx_acc);
}

}  // namespace stpose::kernels
