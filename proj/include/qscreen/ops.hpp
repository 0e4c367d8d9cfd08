#pragma once

#include <vector>

#include "qscreen/tensor.hpp"

namespace qscreen {

// Differentiable operations. Every op takes the recording tape as its first
// argument; pass nullptr to run forward-only (no gradient buffers are
// allocated in that case). Inputs are never mutated.

enum class Rounding { floor, ceil };

struct PoolRounding {
  Rounding t = Rounding::floor;
  Rounding h = Rounding::floor;
  Rounding w = Rounding::floor;
};

// input [Cin,T,H,W] * kernels [Cout,Cin,kT,kH,kW] + bias [Cout]
// -> [Cout, T+2*temporal_pad-kT+1, H-kH+1, W-kW+1]
// Spatial convolution is valid (no padding); the temporal axis is zero-padded
// by temporal_pad frames on each side. Cross-correlation, no kernel flip.
template <class T>
Tensor<T> conv3d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& kernels,
                 const Tensor<T>& bias, int temporal_pad);

// input [Cin,H,W] * kernels [Cout,Cin,kH,kW] + bias [Cout], valid, strided.
template <class T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& kernels,
                 const Tensor<T>& bias, int stride);

// 2x2x2 window, stride 2. Per-axis rounding: floor drops a trailing odd
// element, ceil zero-pads the trailing edge by one. Backward routes each
// window's gradient to the first max cell in ascending (t,h,w) scan order.
template <class T>
Tensor<T> maxpool3d(Tape<T>* tape, const Tensor<T>& input, PoolRounding rounding);

Shape conv3d_output_shape(const Shape& input, const Shape& kernels, int temporal_pad);
Shape maxpool3d_output_shape(const Shape& input, PoolRounding rounding);

// weight [m,n] * input [n] + bias [m] -> [m]
template <class T>
Tensor<T> fully_connected(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& bias);

// a [m,k] * b [k,n] -> [m,n]; with transpose_b, a [m,k] * b' [n,k] -> [m,n].
template <class T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b,
                 bool transpose_b = false);

template <class T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x);

template <class T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x);

template <class T>
Tensor<T> tanh_op(Tape<T>* tape, const Tensor<T>& x);

// rank-1 softmax
template <class T>
Tensor<T> softmax(Tape<T>* tape, const Tensor<T>& x);

// row-wise softmax on [m,n]
template <class T>
Tensor<T> softmax_rows(Tape<T>* tape, const Tensor<T>& x);

template <class T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, T factor);

// order-preserving concatenation of rank-1 parts
template <class T>
Tensor<T> concat(Tape<T>* tape, const std::vector<Tensor<T>>& parts);

// rank-1 slice [offset, offset+len)
template <class T>
Tensor<T> slice(Tape<T>* tape, const Tensor<T>& x, int offset, int len);

// stack rank-1 tensors of equal length d into [n,d]
template <class T>
Tensor<T> stack_rows(Tape<T>* tape, const std::vector<Tensor<T>>& rows);

// clip [T,H,W] -> frame t as [1,H,W]
template <class T>
Tensor<T> select_frame(Tape<T>* tape, const Tensor<T>& clip, int t);

// [m,n] -> [n], mean over rows
template <class T>
Tensor<T> mean_rows(Tape<T>* tape, const Tensor<T>& x);

template <class T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape dims);

// scalar sum of all elements
template <class T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& x);

// -y*log(p) - (1-y)*log(1-p) with p clamped to [eps, 1-eps], eps = 1e-7.
// The clamp is treated as identity in backward.
template <class T>
Tensor<T> bce_loss(Tape<T>* tape, const Tensor<T>& p, int y);

inline constexpr double kBceEps = 1e-7;

#define QSCREEN_OPS_EXTERN(T)                                                             \
  extern template Tensor<T> conv3d<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,      \
                                      const Tensor<T>&, int);                            \
  extern template Tensor<T> conv2d<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,      \
                                      const Tensor<T>&, int);                            \
  extern template Tensor<T> maxpool3d<T>(Tape<T>*, const Tensor<T>&, PoolRounding);      \
  extern template Tensor<T> fully_connected<T>(Tape<T>*, const Tensor<T>&,               \
                                               const Tensor<T>&, const Tensor<T>&);      \
  extern template Tensor<T> matmul<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,      \
                                      bool);                                             \
  extern template Tensor<T> relu<T>(Tape<T>*, const Tensor<T>&);                         \
  extern template Tensor<T> sigmoid<T>(Tape<T>*, const Tensor<T>&);                      \
  extern template Tensor<T> tanh_op<T>(Tape<T>*, const Tensor<T>&);                      \
  extern template Tensor<T> softmax<T>(Tape<T>*, const Tensor<T>&);                      \
  extern template Tensor<T> softmax_rows<T>(Tape<T>*, const Tensor<T>&);                 \
  extern template Tensor<T> add<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);        \
  extern template Tensor<T> mul<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);        \
  extern template Tensor<T> scale<T>(Tape<T>*, const Tensor<T>&, T);                     \
  extern template Tensor<T> concat<T>(Tape<T>*, const std::vector<Tensor<T>>&);          \
  extern template Tensor<T> slice<T>(Tape<T>*, const Tensor<T>&, int, int);              \
  extern template Tensor<T> stack_rows<T>(Tape<T>*, const std::vector<Tensor<T>>&);      \
  extern template Tensor<T> select_frame<T>(Tape<T>*, const Tensor<T>&, int);            \
  extern template Tensor<T> mean_rows<T>(Tape<T>*, const Tensor<T>&);                    \
  extern template Tensor<T> reshape<T>(Tape<T>*, const Tensor<T>&, Shape);               \
  extern template Tensor<T> sum_all<T>(Tape<T>*, const Tensor<T>&);                       \
  extern template Tensor<T> bce_loss<T>(Tape<T>*, const Tensor<T>&, int);

QSCREEN_OPS_EXTERN(float)
QSCREEN_OPS_EXTERN(double)
#undef QSCREEN_OPS_EXTERN

}  // namespace qscreen
