#include "qscreen/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gemm.hpp"

namespace qscreen {

namespace {

template <class T>
bool want_grad(Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (!tape) return false;
  for (const Tensor<T>* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <class T>
void mark_recorded(Tensor<T>& out) {
  out.set_requires_grad(true);
  out.mark_output();
}

// Column matrix for one temporal output position: col[K x N] with
// K = Cin*kT*kH*kW, N = Hp*Wp. Out-of-range temporal taps are zero-filled.
template <class T>
void im2col_t(const T* in, int Cin, int Tin, int H, int W, int kT, int kH, int kW,
              int pad, int t_out, int Hp, int Wp, T* col) {
  const int64_t N = int64_t(Hp) * Wp;
  for (int ci = 0; ci < Cin; ++ci) {
    for (int dt = 0; dt < kT; ++dt) {
      const int t_src = t_out + dt - pad;
      T* block = col + (int64_t(ci) * kT + dt) * kH * kW * N;
      if (t_src < 0 || t_src >= Tin) {
        std::fill(block, block + int64_t(kH) * kW * N, T(0));
        continue;
      }
      const T* plane = in + (int64_t(ci) * Tin + t_src) * H * W;
      for (int dh = 0; dh < kH; ++dh) {
        for (int dw = 0; dw < kW; ++dw) {
          T* row = block + (int64_t(dh) * kW + dw) * N;
          for (int y = 0; y < Hp; ++y) {
            std::memcpy(row + int64_t(y) * Wp, plane + int64_t(y + dh) * W + dw,
                        sizeof(T) * size_t(Wp));
          }
        }
      }
    }
  }
}

// Scatter-add of a column gradient back into the input gradient.
template <class T>
void col2im_t_acc(const T* col, int Cin, int Tin, int H, int W, int kT, int kH, int kW,
                  int pad, int t_out, int Hp, int Wp, T* din) {
  const int64_t N = int64_t(Hp) * Wp;
  for (int ci = 0; ci < Cin; ++ci) {
    for (int dt = 0; dt < kT; ++dt) {
      const int t_src = t_out + dt - pad;
      if (t_src < 0 || t_src >= Tin) continue;
      const T* block = col + (int64_t(ci) * kT + dt) * kH * kW * N;
      T* plane = din + (int64_t(ci) * Tin + t_src) * H * W;
      for (int dh = 0; dh < kH; ++dh) {
        for (int dw = 0; dw < kW; ++dw) {
          const T* row = block + (int64_t(dh) * kW + dw) * N;
          for (int y = 0; y < Hp; ++y) {
            T* dst = plane + int64_t(y + dh) * W + dw;
            const T* src = row + int64_t(y) * Wp;
            for (int x = 0; x < Wp; ++x) dst[x] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace

Shape conv3d_output_shape(const Shape& input, const Shape& kernels, int temporal_pad) {
  if (input.size() != 4) throw ShapeError("conv3d input must be [Cin,T,H,W], got " + shape_str(input));
  if (kernels.size() != 5) {
    throw ShapeError("conv3d kernels must be [Cout,Cin,kT,kH,kW], got " + shape_str(kernels));
  }
  if (temporal_pad < 0) throw ShapeError("conv3d temporal_pad must be >= 0");
  const int cin = input[0], t = input[1], h = input[2], w = input[3];
  const int cout = kernels[0], kcin = kernels[1], kt = kernels[2], kh = kernels[3], kw = kernels[4];
  if (kcin != cin) {
    throw ShapeError("conv3d channel mismatch: input " + shape_str(input) + " kernels " + shape_str(kernels));
  }
  if (kh > h || kw > w || kt > t + 2 * temporal_pad) {
    throw ShapeError("conv3d kernel " + shape_str(kernels) + " too large for input " +
                     shape_str(input) + " with temporal_pad " + std::to_string(temporal_pad));
  }
  return Shape{cout, t + 2 * temporal_pad - kt + 1, h - kh + 1, w - kw + 1};
}

Shape maxpool3d_output_shape(const Shape& input, PoolRounding rounding) {
  if (input.size() != 4) throw ShapeError("maxpool3d input must be [C,T,H,W], got " + shape_str(input));
  for (int d : input) {
    if (d <= 0) throw ShapeError("maxpool3d axis size must be positive, got " + shape_str(input));
  }
  auto out = [](int n, Rounding r) { return r == Rounding::floor ? n / 2 : (n + 1) / 2; };
  return Shape{input[0], out(input[1], rounding.t), out(input[2], rounding.h),
               out(input[3], rounding.w)};
}

template <class T>
Tensor<T> conv3d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& kernels,
                 const Tensor<T>& bias, int temporal_pad) {
  const Shape out_dims = conv3d_output_shape(input.dims(), kernels.dims(), temporal_pad);
  if (bias.rank() != 1 || bias.dim(0) != kernels.dim(0)) {
    throw ShapeError("conv3d bias must be [Cout], got " + shape_str(bias.dims()));
  }
  require_finite(input.values(), "conv3d input");
  require_finite(kernels.values(), "conv3d kernels");
  require_finite(bias.values(), "conv3d bias");

  const int cin = input.dim(0), tin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = out_dims[0], tp = out_dims[1], hp = out_dims[2], wp = out_dims[3];
  const int kt = kernels.dim(2), kh = kernels.dim(3), kw = kernels.dim(4);
  const int64_t K = int64_t(cin) * kt * kh * kw;
  const int64_t N = int64_t(hp) * wp;
  const int64_t out_plane = int64_t(tp) * N;

  Tensor<T> out(out_dims);
  {
    std::vector<T> col(size_t(K * N));
    std::vector<T> buf(size_t(cout) * size_t(N));
    const T* in_ptr = input.values().data();
    const T* k_ptr = kernels.values().data();
    const T* b_ptr = bias.values().data();
    T* out_ptr = out.values().data();
    for (int t = 0; t < tp; ++t) {
      im2col_t(in_ptr, cin, tin, h, w, kt, kh, kw, temporal_pad, t, hp, wp, col.data());
      for (int o = 0; o < cout; ++o) std::fill_n(buf.data() + int64_t(o) * N, N, b_ptr[o]);
      detail::gemm_nn_acc(k_ptr, col.data(), buf.data(), cout, K, N);
      for (int o = 0; o < cout; ++o) {
        std::memcpy(out_ptr + int64_t(o) * out_plane + int64_t(t) * N, buf.data() + int64_t(o) * N,
                    sizeof(T) * size_t(N));
      }
    }
  }

  if (want_grad(tape, {&input, &kernels, &bias})) {
    mark_recorded(out);
    const int pad = temporal_pad;
    tape->record(out.node(), [input, kernels, bias, out, pad, cin, tin, h, w, cout, tp, hp, wp,
                              kt, kh, kw, K, N, out_plane]() {
      const T* og = out.node()->grad.data();
      const bool need_in = input.requires_grad();
      const bool need_k = kernels.requires_grad();
      std::vector<T> gbuf(size_t(cout) * size_t(N));
      std::vector<T> col(need_k ? size_t(K * N) : 0);
      std::vector<T> dcol(need_in ? size_t(K * N) : 0);
      for (int t = 0; t < tp; ++t) {
        for (int o = 0; o < cout; ++o) {
          std::memcpy(gbuf.data() + int64_t(o) * N, og + int64_t(o) * out_plane + int64_t(t) * N,
                      sizeof(T) * size_t(N));
        }
        if (bias.requires_grad()) {
          T* bg = bias.node()->grad.data();
          for (int o = 0; o < cout; ++o) {
            T acc = T(0);
            const T* row = gbuf.data() + int64_t(o) * N;
            for (int64_t j = 0; j < N; ++j) acc += row[j];
            bg[o] += acc;
          }
        }
        if (need_k) {
          im2col_t(input.values().data(), cin, tin, h, w, kt, kh, kw, pad, t, hp, wp, col.data());
          detail::gemm_nt_acc(gbuf.data(), col.data(), kernels.node()->grad.data(), cout, N, K);
        }
        if (need_in) {
          std::fill(dcol.begin(), dcol.end(), T(0));
          detail::gemm_tn_acc(kernels.values().data(), gbuf.data(), dcol.data(), cout, K, N);
          col2im_t_acc(dcol.data(), cin, tin, h, w, kt, kh, kw, pad, t, hp, wp,
                       input.node()->grad.data());
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& kernels,
                 const Tensor<T>& bias, int stride) {
  if (input.rank() != 3) throw ShapeError("conv2d input must be [Cin,H,W], got " + shape_str(input.dims()));
  if (kernels.rank() != 4) {
    throw ShapeError("conv2d kernels must be [Cout,Cin,kH,kW], got " + shape_str(kernels.dims()));
  }
  if (stride < 1) throw ShapeError("conv2d stride must be >= 1");
  const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != cin || kh > h || kw > w) {
    throw ShapeError("conv2d shape mismatch: input " + shape_str(input.dims()) + " kernels " +
                     shape_str(kernels.dims()));
  }
  if (bias.rank() != 1 || bias.dim(0) != cout) {
    throw ShapeError("conv2d bias must be [Cout], got " + shape_str(bias.dims()));
  }
  require_finite(input.values(), "conv2d input");
  require_finite(kernels.values(), "conv2d kernels");
  const int hp = (h - kh) / stride + 1;
  const int wp = (w - kw) / stride + 1;

  Tensor<T> out(Shape{cout, hp, wp});
  const T* in = input.values().data();
  const T* ker = kernels.values().data();
  T* ov = out.values().data();
  for (int o = 0; o < cout; ++o) {
    for (int y = 0; y < hp; ++y) {
      for (int x = 0; x < wp; ++x) {
        T acc = bias.values()[size_t(o)];
        for (int ci = 0; ci < cin; ++ci) {
          const T* plane = in + (int64_t(ci) * h + int64_t(y) * stride) * w + int64_t(x) * stride;
          const T* krow = ker + ((int64_t(o) * cin + ci) * kh) * kw;
          for (int dh = 0; dh < kh; ++dh) {
            for (int dw = 0; dw < kw; ++dw) acc += plane[int64_t(dh) * w + dw] * krow[int64_t(dh) * kw + dw];
          }
        }
        ov[(int64_t(o) * hp + y) * wp + x] = acc;
      }
    }
  }

  if (want_grad(tape, {&input, &kernels, &bias})) {
    mark_recorded(out);
    tape->record(out.node(), [input, kernels, bias, out, stride, cin, h, w, cout, hp, wp, kh, kw]() {
      const T* og = out.node()->grad.data();
      const T* in = input.values().data();
      const T* ker = kernels.values().data();
      for (int o = 0; o < cout; ++o) {
        for (int y = 0; y < hp; ++y) {
          for (int x = 0; x < wp; ++x) {
            const T g = og[(int64_t(o) * hp + y) * wp + x];
            if (bias.requires_grad()) bias.node()->grad[size_t(o)] += g;
            for (int ci = 0; ci < cin; ++ci) {
              const int64_t in_off = (int64_t(ci) * h + int64_t(y) * stride) * w + int64_t(x) * stride;
              const int64_t k_off = (int64_t(o) * cin + ci) * kh * kw;
              for (int dh = 0; dh < kh; ++dh) {
                for (int dw = 0; dw < kw; ++dw) {
                  if (kernels.requires_grad()) {
                    kernels.node()->grad[size_t(k_off + int64_t(dh) * kw + dw)] +=
                        g * in[in_off + int64_t(dh) * w + dw];
                  }
                  if (input.requires_grad()) {
                    input.node()->grad[size_t(in_off + int64_t(dh) * w + dw)] +=
                        g * ker[k_off + int64_t(dh) * kw + dw];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> maxpool3d(Tape<T>* tape, const Tensor<T>& input, PoolRounding rounding) {
  const Shape out_dims = maxpool3d_output_shape(input.dims(), rounding);
  const int c = input.dim(0), tin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int tp = out_dims[1], hp = out_dims[2], wp = out_dims[3];

  Tensor<T> out(out_dims);
  // Flat input index of each window's winner; -1 when an implicit zero-pad
  // cell wins (possible only in partial ceil windows over negative inputs).
  std::vector<int64_t> argmax(size_t(numel(out_dims)));
  const T* in = input.values().data();
  T* ov = out.values().data();
  int64_t oi = 0;
  for (int ci = 0; ci < c; ++ci) {
    for (int ot = 0; ot < tp; ++ot) {
      const int t0 = 2 * ot, t1 = std::min(t0 + 2, tin);
      for (int oy = 0; oy < hp; ++oy) {
        const int y0 = 2 * oy, y1 = std::min(y0 + 2, h);
        for (int ox = 0; ox < wp; ++ox) {
          const int x0 = 2 * ox, x1 = std::min(x0 + 2, w);
          T best{};
          int64_t best_idx = -1;
          for (int t = t0; t < t1; ++t) {
            for (int y = y0; y < y1; ++y) {
              for (int x = x0; x < x1; ++x) {
                const int64_t idx = ((int64_t(ci) * tin + t) * h + y) * w + x;
                if (best_idx < 0 || in[idx] > best) {
                  best = in[idx];
                  best_idx = idx;
                }
              }
            }
          }
          const bool partial = (t0 + 2 > tin) || (y0 + 2 > h) || (x0 + 2 > w);
          if (partial && T(0) > best) {
            best = T(0);
            best_idx = -1;
          }
          ov[oi] = best;
          argmax[size_t(oi)] = best_idx;
          ++oi;
        }
      }
    }
  }

  if (want_grad(tape, {&input})) {
    mark_recorded(out);
    tape->record(out.node(), [input, out, argmax = std::move(argmax)]() {
      const T* og = out.node()->grad.data();
      T* ig = input.node()->grad.data();
      for (size_t i = 0; i < argmax.size(); ++i) {
        if (argmax[i] >= 0) ig[size_t(argmax[i])] += og[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> fully_connected(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& bias) {
  if (input.rank() != 1 || weight.rank() != 2 || bias.rank() != 1 ||
      weight.dim(1) != input.dim(0) || weight.dim(0) != bias.dim(0)) {
    throw ShapeError("fully_connected shape mismatch: input " + shape_str(input.dims()) +
                     " weight " + shape_str(weight.dims()) + " bias " + shape_str(bias.dims()));
  }
  const int m = weight.dim(0), n = weight.dim(1);
  Tensor<T> out(Shape{m});
  const T* x = input.values().data();
  const T* wv = weight.values().data();
  T* ov = out.values().data();
  for (int i = 0; i < m; ++i) {
    const T* row = wv + int64_t(i) * n;
    T acc = bias.values()[size_t(i)];
    for (int j = 0; j < n; ++j) acc += row[j] * x[j];
    ov[i] = acc;
  }

  if (want_grad(tape, {&input, &weight, &bias})) {
    mark_recorded(out);
    tape->record(out.node(), [input, weight, bias, out, m, n]() {
      const T* og = out.node()->grad.data();
      for (int i = 0; i < m; ++i) {
        const T g = og[i];
        if (g == T(0)) continue;
        if (bias.requires_grad()) bias.node()->grad[size_t(i)] += g;
        if (weight.requires_grad()) {
          T* wg = weight.node()->grad.data() + int64_t(i) * n;
          const T* x = input.values().data();
          for (int j = 0; j < n; ++j) wg[j] += g * x[j];
        }
        if (input.requires_grad()) {
          T* xg = input.node()->grad.data();
          const T* row = weight.values().data() + int64_t(i) * n;
          for (int j = 0; j < n; ++j) xg[j] += g * row[j];
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul requires rank-2 inputs, got " + shape_str(a.dims()) + " and " +
                     shape_str(b.dims()));
  }
  const int m = a.dim(0), k = a.dim(1);
  const int n = transpose_b ? b.dim(0) : b.dim(1);
  const int bk = transpose_b ? b.dim(1) : b.dim(0);
  if (bk != k) {
    throw ShapeError("matmul inner dim mismatch: " + shape_str(a.dims()) + " x " +
                     shape_str(b.dims()) + (transpose_b ? "^T" : ""));
  }
  Tensor<T> out(Shape{m, n});
  if (transpose_b) {
    detail::gemm_nt_acc(a.values().data(), b.values().data(), out.values().data(), m, k, n);
  } else {
    detail::gemm_nn_acc(a.values().data(), b.values().data(), out.values().data(), m, k, n);
  }

  if (want_grad(tape, {&a, &b})) {
    mark_recorded(out);
    tape->record(out.node(), [a, b, out, transpose_b, m, k, n]() {
      const T* og = out.node()->grad.data();
      if (!transpose_b) {
        if (a.requires_grad()) {
          detail::gemm_nt_acc(og, b.values().data(), a.node()->grad.data(), m, n, k);
        }
        if (b.requires_grad()) {
          detail::gemm_tn_acc(a.values().data(), og, b.node()->grad.data(), m, k, n);
        }
      } else {
        if (a.requires_grad()) {
          detail::gemm_nn_acc(og, b.values().data(), a.node()->grad.data(), m, n, k);
        }
        if (b.requires_grad()) {
          detail::gemm_tn_acc(og, a.values().data(), b.node()->grad.data(), m, n, k);
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> y(x.dims());
  auto xv = x.values();
  auto yv = y.values();
  for (size_t i = 0; i < xv.size(); ++i) yv[i] = xv[i] > T(0) ? xv[i] : T(0);
  if (want_grad(tape, {&x})) {
    mark_recorded(y);
    tape->record(y.node(), [x, y]() {
      const auto& yg = y.node()->grad;
      auto& xg = x.node()->grad;
      auto xv = x.values();
      for (size_t i = 0; i < xg.size(); ++i) {
        if (xv[i] > T(0)) xg[i] += yg[i];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> y(x.dims());
  auto xv = x.values();
  auto yv = y.values();
  for (size_t i = 0; i < xv.size(); ++i) {
    yv[i] = T(1) / (T(1) + std::exp(-xv[i]));
  }
  if (want_grad(tape, {&x})) {
    mark_recorded(y);
    tape->record(y.node(), [x, y]() {
      const auto& yg = y.node()->grad;
      auto& xg = x.node()->grad;
      auto yv = y.values();
      for (size_t i = 0; i < xg.size(); ++i) xg[i] += yg[i] * yv[i] * (T(1) - yv[i]);
    });
  }
  return y;
}

template <class T>
Tensor<T> tanh_op(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> y(x.dims());
  auto xv = x.values();
  auto yv = y.values();
  for (size_t i = 0; i < xv.size(); ++i) yv[i] = std::tanh(xv[i]);
  if (want_grad(tape, {&x})) {
    mark_recorded(y);
    tape->record(y.node(), [x, y]() {
      const auto& yg = y.node()->grad;
      auto& xg = x.node()->grad;
      auto yv = y.values();
      for (size_t i = 0; i < xg.size(); ++i) xg[i] += yg[i] * (T(1) - yv[i] * yv[i]);
    });
  }
  return y;
}

namespace {

template <class T>
void softmax_row(const T* x, T* y, int n) {
  T m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  T s = T(0);
  for (int i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - m);
    s += y[i];
  }
  for (int i = 0; i < n; ++i) y[i] /= s;
}

template <class T>
void softmax_row_backward(const T* y, const T* gy, T* gx, int n) {
  T dot = T(0);
  for (int i = 0; i < n; ++i) dot += gy[i] * y[i];
  for (int i = 0; i < n; ++i) gx[i] += y[i] * (gy[i] - dot);
}

}  // namespace

template <class T>
Tensor<T> softmax(Tape<T>* tape, const Tensor<T>& x) {
  if (x.rank() != 1) throw ShapeError("softmax expects rank-1 input, got " + shape_str(x.dims()));
  Tensor<T> y(x.dims());
  softmax_row(x.values().data(), y.values().data(), x.dim(0));
  if (want_grad(tape, {&x})) {
    mark_recorded(y);
    tape->record(y.node(), [x, y]() {
      softmax_row_backward(y.values().data(), y.node()->grad.data(), x.node()->grad.data(),
                           x.dim(0));
    });
  }
  return y;
}

template <class T>
Tensor<T> softmax_rows(Tape<T>* tape, const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("softmax_rows expects rank-2 input, got " + shape_str(x.dims()));
  const int m = x.dim(0), n = x.dim(1);
  Tensor<T> y(x.dims());
  for (int i = 0; i < m; ++i) {
    softmax_row(x.values().data() + int64_t(i) * n, y.values().data() + int64_t(i) * n, n);
  }
  if (want_grad(tape, {&x})) {
    mark_recorded(y);
    tape->record(y.node(), [x, y, m, n]() {
      for (int i = 0; i < m; ++i) {
        softmax_row_backward(y.values().data() + int64_t(i) * n,
                             y.node()->grad.data() + int64_t(i) * n,
                             x.node()->grad.data() + int64_t(i) * n, n);
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("add shape mismatch: " + shape_str(a.dims()) + " vs " + shape_str(b.dims()));
  }
  Tensor<T> y(a.dims());
  auto av = a.values();
  auto bv = b.values();
  auto yv = y.values();
  for (size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] + bv[i];
  if (want_grad(tape, {&a, &b})) {
    mark_recorded(y);
    tape->record(y.node(), [a, b, y]() {
      const auto& yg = y.node()->grad;
      if (a.requires_grad()) {
        auto& ag = a.node()->grad;
        for (size_t i = 0; i < ag.size(); ++i) ag[i] += yg[i];
      }
      if (b.requires_grad()) {
        auto& bg = b.node()->grad;
        for (size_t i = 0; i < bg.size(); ++i) bg[i] += yg[i];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("mul shape mismatch: " + shape_str(a.dims()) + " vs " + shape_str(b.dims()));
  }
  Tensor<T> y(a.dims());
  auto av = a.values();
  auto bv = b.values();
  auto yv = y.values();
  for (size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] * bv[i];
  if (want_grad(tape, {&a, &b})) {
    mark_recorded(y);
    tape->record(y.node(), [a, b, y]() {
      const auto& yg = y.node()->grad;
      if (a.requires_grad()) {
        auto& ag = a.node()->grad;
        auto bv = b.values();
        for (size_t i = 0; i < ag.size(); ++i) ag[i] += yg[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto& bg = b.node()->grad;
        auto av = a.values();
        for (size_t i = 0; i < bg.size(); ++i) bg[i] += yg[i] * av[i];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, T factor) {
  Tensor<T> y(x.dims());
  auto xv = x.values();
  auto yv = y.values();
  for (size_t i = 0; i < yv.size(); ++i) yv[i] = xv[i] * factor;
  if (want_grad(tape, {&x})) {
    mark_recorded(y);
    tape->record(y.node(), [x, y, factor]() {
      const auto& yg = y.node()->grad;
      auto& xg = x.node()->grad;
      for (size_t i = 0; i < xg.size(); ++i) xg[i] += yg[i] * factor;
    });
  }
  return y;
}

template <class T>
Tensor<T> concat(Tape<T>* tape, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat of empty part list");
  int total = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    if (p.rank() != 1) throw ShapeError("concat expects rank-1 parts, got " + shape_str(p.dims()));
    total += p.dim(0);
    any_grad |= p.requires_grad();
  }
  Tensor<T> y(Shape{total});
  auto yv = y.values();
  int64_t off = 0;
  for (const auto& p : parts) {
    auto pv = p.values();
    std::copy(pv.begin(), pv.end(), yv.begin() + off);
    off += pv.size();
  }
  if (tape && any_grad) {
    mark_recorded(y);
    tape->record(y.node(), [parts, y]() {
      const auto& yg = y.node()->grad;
      int64_t off = 0;
      for (const auto& p : parts) {
        if (p.requires_grad()) {
          auto& pg = p.node()->grad;
          for (size_t i = 0; i < pg.size(); ++i) pg[i] += yg[size_t(off) + i];
        }
        off += p.size();
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> slice(Tape<T>* tape, const Tensor<T>& x, int offset, int len) {
  if (x.rank() != 1) throw ShapeError("slice expects rank-1 input, got " + shape_str(x.dims()));
  if (offset < 0 || len <= 0 || offset + len > x.dim(0)) {
    throw ShapeError("slice [" + std::to_string(offset) + "," + std::to_string(offset + len) +
                     ") out of range for " + shape_str(x.dims()));
  }
  Tensor<T> y(Shape{len});
  auto xv = x.values();
  std::copy(xv.begin() + offset, xv.begin() + offset + len, y.values().begin());
  if (want_grad(tape, {&x})) {
    mark_recorded(y);
    tape->record(y.node(), [x, y, offset, len]() {
      const auto& yg = y.node()->grad;
      auto& xg = x.node()->grad;
      for (int i = 0; i < len; ++i) xg[size_t(offset + i)] += yg[size_t(i)];
    });
  }
  return y;
}

template <class T>
Tensor<T> stack_rows(Tape<T>* tape, const std::vector<Tensor<T>>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows of empty row list");
  const int d = rows[0].dim(0);
  bool any_grad = false;
  for (const auto& r : rows) {
    if (r.rank() != 1 || r.dim(0) != d) {
      throw ShapeError("stack_rows expects equal-length rank-1 rows");
    }
    any_grad |= r.requires_grad();
  }
  const int n = static_cast<int>(rows.size());
  Tensor<T> y(Shape{n, d});
  for (int i = 0; i < n; ++i) {
    auto rv = rows[size_t(i)].values();
    std::copy(rv.begin(), rv.end(), y.values().begin() + int64_t(i) * d);
  }
  if (tape && any_grad) {
    mark_recorded(y);
    tape->record(y.node(), [rows, y, n, d]() {
      const auto& yg = y.node()->grad;
      for (int i = 0; i < n; ++i) {
        const auto& r = rows[size_t(i)];
        if (!r.requires_grad()) continue;
        auto& rg = r.node()->grad;
        for (int j = 0; j < d; ++j) rg[size_t(j)] += yg[size_t(int64_t(i) * d + j)];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> select_frame(Tape<T>* tape, const Tensor<T>& clip, int t) {
  if (clip.rank() != 3) throw ShapeError("select_frame expects [T,H,W], got " + shape_str(clip.dims()));
  if (t < 0 || t >= clip.dim(0)) {
    throw ShapeError("select_frame index " + std::to_string(t) + " out of range for " +
                     shape_str(clip.dims()));
  }
  const int h = clip.dim(1), w = clip.dim(2);
  const int64_t plane = int64_t(h) * w;
  Tensor<T> y(Shape{1, h, w});
  auto cv = clip.values();
  std::copy(cv.begin() + int64_t(t) * plane, cv.begin() + int64_t(t + 1) * plane, y.values().begin());
  if (want_grad(tape, {&clip})) {
    mark_recorded(y);
    tape->record(y.node(), [clip, y, t, plane]() {
      const auto& yg = y.node()->grad;
      auto& cg = clip.node()->grad;
      for (int64_t i = 0; i < plane; ++i) cg[size_t(int64_t(t) * plane + i)] += yg[size_t(i)];
    });
  }
  return y;
}

template <class T>
Tensor<T> mean_rows(Tape<T>* tape, const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("mean_rows expects rank-2 input, got " + shape_str(x.dims()));
  const int m = x.dim(0), n = x.dim(1);
  Tensor<T> y(Shape{n});
  auto xv = x.values();
  auto yv = y.values();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) yv[size_t(j)] += xv[size_t(int64_t(i) * n + j)];
  }
  for (int j = 0; j < n; ++j) yv[size_t(j)] /= T(m);
  if (want_grad(tape, {&x})) {
    mark_recorded(y);
    tape->record(y.node(), [x, y, m, n]() {
      const auto& yg = y.node()->grad;
      auto& xg = x.node()->grad;
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) xg[size_t(int64_t(i) * n + j)] += yg[size_t(j)] / T(m);
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape dims) {
  if (numel(dims) != x.size()) {
    throw ShapeError("reshape " + shape_str(x.dims()) + " -> " + shape_str(dims) +
                     " changes element count");
  }
  Tensor<T> y(std::move(dims));
  auto xv = x.values();
  std::copy(xv.begin(), xv.end(), y.values().begin());
  if (want_grad(tape, {&x})) {
    mark_recorded(y);
    tape->record(y.node(), [x, y]() {
      const auto& yg = y.node()->grad;
      auto& xg = x.node()->grad;
      for (size_t i = 0; i < xg.size(); ++i) xg[i] += yg[i];
    });
  }
  return y;
}

template <class T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.values()) acc += v;
  Tensor<T> y = Tensor<T>::scalar(acc);
  if (want_grad(tape, {&x})) {
    mark_recorded(y);
    tape->record(y.node(), [x, y]() {
      const T g = y.node()->grad[0];
      auto& xg = x.node()->grad;
      for (size_t i = 0; i < xg.size(); ++i) xg[i] += g;
    });
  }
  return y;
}

template <class T>
Tensor<T> bce_loss(Tape<T>* tape, const Tensor<T>& p, int y) {
  if (p.size() != 1) throw ShapeError("bce_loss expects a scalar p, got " + shape_str(p.dims()));
  if (y != 0 && y != 1) throw NumericError("bce_loss label must be 0 or 1, got " + std::to_string(y));
  require_finite(p.values(), "bce_loss p");
  const T eps = T(kBceEps);
  const T pc = std::clamp(p.values()[0], eps, T(1) - eps);
  Tensor<T> loss = Tensor<T>::scalar(-(y ? std::log(pc) : std::log(T(1) - pc)));
  if (want_grad(tape, {&p})) {
    mark_recorded(loss);
    tape->record(loss.node(), [p, loss, y, pc]() {
      const T g = loss.node()->grad[0];
      p.node()->grad[0] += g * (y ? -T(1) / pc : T(1) / (T(1) - pc));
    });
  }
  return loss;
}

#define QSCREEN_OPS_INST(T)                                                               \
  template Tensor<T> conv3d<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,             \
                               const Tensor<T>&, int);                                   \
  template Tensor<T> conv2d<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,             \
                               const Tensor<T>&, int);                                   \
  template Tensor<T> maxpool3d<T>(Tape<T>*, const Tensor<T>&, PoolRounding);             \
  template Tensor<T> fully_connected<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,    \
                                        const Tensor<T>&);                               \
  template Tensor<T> matmul<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&, bool);      \
  template Tensor<T> relu<T>(Tape<T>*, const Tensor<T>&);                                \
  template Tensor<T> sigmoid<T>(Tape<T>*, const Tensor<T>&);                             \
  template Tensor<T> tanh_op<T>(Tape<T>*, const Tensor<T>&);                             \
  template Tensor<T> softmax<T>(Tape<T>*, const Tensor<T>&);                             \
  template Tensor<T> softmax_rows<T>(Tape<T>*, const Tensor<T>&);                        \
  template Tensor<T> add<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> mul<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> scale<T>(Tape<T>*, const Tensor<T>&, T);                            \
  template Tensor<T> concat<T>(Tape<T>*, const std::vector<Tensor<T>>&);                 \
  template Tensor<T> slice<T>(Tape<T>*, const Tensor<T>&, int, int);                     \
  template Tensor<T> stack_rows<T>(Tape<T>*, const std::vector<Tensor<T>>&);             \
  template Tensor<T> select_frame<T>(Tape<T>*, const Tensor<T>&, int);                   \
  template Tensor<T> mean_rows<T>(Tape<T>*, const Tensor<T>&);                           \
  template Tensor<T> reshape<T>(Tape<T>*, const Tensor<T>&, Shape);                      \
  template Tensor<T> sum_all<T>(Tape<T>*, const Tensor<T>&);                              \
  template Tensor<T> bce_loss<T>(Tape<T>*, const Tensor<T>&, int);

QSCREEN_OPS_INST(float)
QSCREEN_OPS_INST(double)
#undef QSCREEN_OPS_INST

}  // namespace qscreen
