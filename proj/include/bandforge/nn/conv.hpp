#pragma once
// 2D convolution (im2col + GEMM) and stride-1 transposed convolution for
// single-image (C,H,W) tensors. The im2col buffer is rebuilt in the backward
// pass from the saved input instead of being stored on the tape.

#include "bandforge/nn/tape.hpp"

namespace bandforge::nn {

namespace detail {

inline int conv_out_dim(int n, int k, int stride, int pad) {
  return (n + 2 * pad - k) / stride + 1;
}

// col is (IC*k*k) x (OH*OW), row-major.
template <typename T>
void im2col(const T* x, int IC, int H, int W, int k, int stride, int pad,
            int OH, int OW, T* col) {
  for (int ic = 0; ic < IC; ++ic)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        T* crow = col + std::size_t((ic * k + ki) * k + kj) * OH * OW;
        for (int oh = 0; oh < OH; ++oh) {
          int ih = oh * stride + ki - pad;
          if (ih < 0 || ih >= H) {
            std::fill(crow + std::size_t(oh) * OW,
                      crow + std::size_t(oh + 1) * OW, T(0));
            continue;
          }
          const T* xrow = x + (std::size_t(ic) * H + ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            int iw = ow * stride + kj - pad;
            crow[std::size_t(oh) * OW + ow] =
                (iw >= 0 && iw < W) ? xrow[iw] : T(0);
          }
        }
      }
}

// Scatter-add of a col buffer back into the input layout.
template <typename T>
void col2im(const T* col, int IC, int H, int W, int k, int stride, int pad,
            int OH, int OW, T* x) {
  for (int ic = 0; ic < IC; ++ic)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const T* crow = col + std::size_t((ic * k + ki) * k + kj) * OH * OW;
        for (int oh = 0; oh < OH; ++oh) {
          int ih = oh * stride + ki - pad;
          if (ih < 0 || ih >= H) continue;
          T* xrow = x + (std::size_t(ic) * H + ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            int iw = ow * stride + kj - pad;
            if (iw >= 0 && iw < W) xrow[iw] += crow[std::size_t(oh) * OW + ow];
          }
        }
      }
}

// Plain forward: y(OC, OH, OW) = W(OC, IC*k*k) * col; optional bias.
template <typename T>
void conv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, const T* bias,
                int stride, int pad, Tensor<T>& y) {
  int IC = x.dim(0), H = x.dim(1), W = x.dim(2);
  int OC = w.dim(0), k = w.dim(2);
  int OH = conv_out_dim(H, k, stride, pad), OW = conv_out_dim(W, k, stride, pad);
  std::vector<T> col(std::size_t(IC) * k * k * OH * OW);
  im2col(x.data(), IC, H, W, k, stride, pad, OH, OW, col.data());
  y = Tensor<T>({OC, OH, OW});
  matmul_nn(OC, OH * OW, IC * k * k, w.data(), col.data(), y.data());
  if (bias)
    for (int oc = 0; oc < OC; ++oc)
      for (std::size_t i = 0; i < std::size_t(OH) * OW; ++i)
        y.v[std::size_t(oc) * OH * OW + i] += bias[oc];
}

template <typename T>
void conv2d_bwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                int stride, int pad, Tensor<T>* gx, Tensor<T>* gw, T* gb) {
  int IC = x.dim(0), H = x.dim(1), W = x.dim(2);
  int OC = w.dim(0), k = w.dim(2);
  int OH = gy.dim(1), OW = gy.dim(2);
  std::size_t rows = std::size_t(IC) * k * k, cols = std::size_t(OH) * OW;
  if (gw || gx) {
    std::vector<T> col(rows * cols);
    if (gw) {
      im2col(x.data(), IC, H, W, k, stride, pad, OH, OW, col.data());
      // dW += dY * col^T
      gemm(false, true, OC, int(rows), int(cols), T(1), gy.data(), int(cols),
           col.data(), int(cols), T(1), gw->data(), int(rows));
    }
    if (gx) {
      // dcol = W^T * dY, then scatter back.
      std::vector<T>& dcol = col;
      matmul_tn(int(rows), int(cols), OC, w.data(), gy.data(), dcol.data());
      col2im(dcol.data(), IC, H, W, k, stride, pad, OH, OW, gx->data());
    }
  }
  if (gb)
    for (int oc = 0; oc < OC; ++oc) {
      T acc = 0;
      for (std::size_t i = 0; i < cols; ++i)
        acc += gy.v[std::size_t(oc) * cols + i];
      gb[oc] += acc;
    }
}

}  // namespace detail

// Convolution of x (IC,H,W) with w (OC,IC,k,k), optional bias b (OC) or -1.
template <typename T>
int conv2d(Tape<T>& tp, int x, int w, int b, int stride = 1, int pad = 0) {
  const Tensor<T>& vx = tp.val(x);
  const Tensor<T>& vw = tp.val(w);
  if (vx.rank() != 3 || vw.rank() != 4 || vw.dim(1) != vx.dim(0) ||
      vw.dim(2) != vw.dim(3))
    throw ValidationError("conv2d: shape mismatch " + shape_str(vx.shape) +
                          " w " + shape_str(vw.shape));
  Tensor<T> y;
  detail::conv2d_fwd(vx, vw, b >= 0 ? tp.val(b).data() : nullptr, stride, pad,
                     y);
  return tp.add(std::move(y), any_grad(tp, {x, w, b}),
                [x, w, b, stride, pad](Tape<T>& t, int s) {
                  const Tensor<T>& gy = t.grad(s);
                  Tensor<T>* gx = t.needs_grad(x) ? &t.grad(x) : nullptr;
                  Tensor<T>* gw = t.needs_grad(w) ? &t.grad(w) : nullptr;
                  T* gb = (b >= 0 && t.needs_grad(b)) ? t.grad(b).data()
                                                      : nullptr;
                  detail::conv2d_bwd(t.val(x), t.val(w), gy, stride, pad, gx,
                                     gw, gb);
                });
}

// Same-padded convolution for odd k (output spatial size == input).
template <typename T>
int conv2d_same(Tape<T>& tp, int x, int w, int b) {
  int k = tp.val(w).dim(2);
  if (k % 2 == 0) throw ValidationError("conv2d_same: even kernel");
  return conv2d(tp, x, w, b, 1, k / 2);
}

// Stride-1 transposed convolution: x (IC,H,W), w (IC,OC,k,k), pad p.
// Output is (OC, H+k-1-2p, W+k-1-2p); equivalent to convolving with the
// spatially flipped, channel-transposed kernel at padding k-1-p.
template <typename T>
int conv_transpose2d(Tape<T>& tp, int x, int w, int b, int pad = 0) {
  const Tensor<T>& vx = tp.val(x);
  const Tensor<T>& vw = tp.val(w);
  if (vx.rank() != 3 || vw.rank() != 4 || vw.dim(0) != vx.dim(0) ||
      vw.dim(2) != vw.dim(3))
    throw ValidationError("conv_transpose2d: shape mismatch");
  int IC = vw.dim(0), OC = vw.dim(1), k = vw.dim(2);
  auto flip = [IC, OC, k](const Tensor<T>& src) {
    Tensor<T> f({OC, IC, k, k});
    for (int ic = 0; ic < IC; ++ic)
      for (int oc = 0; oc < OC; ++oc)
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j)
            f.v[((std::size_t(oc) * IC + ic) * k + (k - 1 - i)) * k +
                (k - 1 - j)] =
                src.v[((std::size_t(ic) * OC + oc) * k + i) * k + j];
    return f;
  };
  int cpad = k - 1 - pad;
  if (cpad < 0) throw ValidationError("conv_transpose2d: pad > k-1");
  Tensor<T> wf = flip(vw);
  Tensor<T> y;
  detail::conv2d_fwd(vx, wf, b >= 0 ? tp.val(b).data() : nullptr, 1, cpad, y);
  return tp.add(
      std::move(y), any_grad(tp, {x, w, b}),
      [x, w, b, cpad, flip, IC, OC, k](Tape<T>& t, int s) {
        const Tensor<T>& gy = t.grad(s);
        Tensor<T> wf2 = flip(t.val(w));
        Tensor<T>* gx = t.needs_grad(x) ? &t.grad(x) : nullptr;
        Tensor<T> gwf;
        Tensor<T>* gwp = nullptr;
        if (t.needs_grad(w)) {
          gwf = Tensor<T>({OC, IC, k, k});
          gwp = &gwf;
        }
        T* gb = (b >= 0 && t.needs_grad(b)) ? t.grad(b).data() : nullptr;
        detail::conv2d_bwd(t.val(x), wf2, gy, 1, cpad, gx, gwp, gb);
        if (gwp) {
          Tensor<T>& gw = t.grad(w);
          for (int ic = 0; ic < IC; ++ic)
            for (int oc = 0; oc < OC; ++oc)
              for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j)
                  gw.v[((std::size_t(ic) * OC + oc) * k + i) * k + j] +=
                      gwf.v[((std::size_t(oc) * IC + ic) * k + (k - 1 - i)) *
                                k +
                            (k - 1 - j)];
        }
      });
}

}  // namespace bandforge::nn
