#pragma once
// Primitive differentiable ops on the tape: elementwise math, linear maps,
// shape moves, normalization, softmax, pooling, dropout. Convolutions live in
// conv.hpp. Every op returns the id of a freshly appended node.

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "bandforge/nn/tape.hpp"

namespace bandforge::nn {

template <typename T>
int add(Tape<T>& tp, int a, int b) {
  if (!tp.val(a).same_shape(tp.val(b)))
    throw ValidationError("add: shape mismatch " + shape_str(tp.val(a).shape) +
                          " vs " + shape_str(tp.val(b).shape));
  Tensor<T> y = tp.val(a);
  const Tensor<T>& vb = tp.val(b);
  for (std::size_t i = 0; i < y.numel(); ++i) y.v[i] += vb.v[i];
  return tp.add(std::move(y), any_grad(tp, {a, b}), [a, b](Tape<T>& t, int s) {
    const Tensor<T>& g = t.grad(s);
    for (int in : {a, b}) {
      if (!t.needs_grad(in)) continue;
      Tensor<T>& gi = t.grad(in);
      for (std::size_t i = 0; i < g.numel(); ++i) gi.v[i] += g.v[i];
    }
  });
}

template <typename T>
int mul(Tape<T>& tp, int a, int b) {
  if (!tp.val(a).same_shape(tp.val(b)))
    throw ValidationError("mul: shape mismatch");
  Tensor<T> y = tp.val(a);
  const Tensor<T>& vb = tp.val(b);
  for (std::size_t i = 0; i < y.numel(); ++i) y.v[i] *= vb.v[i];
  return tp.add(std::move(y), any_grad(tp, {a, b}), [a, b](Tape<T>& t, int s) {
    const Tensor<T>& g = t.grad(s);
    if (t.needs_grad(a)) {
      Tensor<T>& ga = t.grad(a);
      const Tensor<T>& vb2 = t.val(b);
      for (std::size_t i = 0; i < g.numel(); ++i) ga.v[i] += g.v[i] * vb2.v[i];
    }
    if (t.needs_grad(b)) {
      Tensor<T>& gb = t.grad(b);
      const Tensor<T>& va = t.val(a);
      for (std::size_t i = 0; i < g.numel(); ++i) gb.v[i] += g.v[i] * va.v[i];
    }
  });
}

template <typename T>
int scale(Tape<T>& tp, int a, T s) {
  Tensor<T> y = tp.val(a);
  for (auto& x : y.v) x *= s;
  return tp.add(std::move(y), any_grad(tp, {a}), [a, s](Tape<T>& t, int id) {
    if (!t.needs_grad(a)) return;
    const Tensor<T>& g = t.grad(id);
    Tensor<T>& ga = t.grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.v[i] += s * g.v[i];
  });
}

// y = w[0] * x with a learnable scalar w (shape [1]).
template <typename T>
int scale_by(Tape<T>& tp, int x, int w) {
  if (tp.val(w).numel() != 1) throw ValidationError("scale_by: w not scalar");
  T s = tp.val(w).v[0];
  Tensor<T> y = tp.val(x);
  for (auto& t : y.v) t *= s;
  return tp.add(std::move(y), any_grad(tp, {x, w}), [x, w](Tape<T>& t, int id) {
    const Tensor<T>& g = t.grad(id);
    if (t.needs_grad(x)) {
      T s2 = t.val(w).v[0];
      Tensor<T>& gx = t.grad(x);
      for (std::size_t i = 0; i < g.numel(); ++i) gx.v[i] += s2 * g.v[i];
    }
    if (t.needs_grad(w)) {
      const Tensor<T>& vx = t.val(x);
      T acc = 0;
      for (std::size_t i = 0; i < g.numel(); ++i) acc += g.v[i] * vx.v[i];
      t.grad(w).v[0] += acc;
    }
  });
}

template <typename T>
int relu(Tape<T>& tp, int a) {
  Tensor<T> y = tp.val(a);
  for (auto& x : y.v) x = x > T(0) ? x : T(0);
  return tp.add(std::move(y), any_grad(tp, {a}), [a](Tape<T>& t, int s) {
    if (!t.needs_grad(a)) return;
    const Tensor<T>& g = t.grad(s);
    const Tensor<T>& va = t.val(a);
    Tensor<T>& ga = t.grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (va.v[i] > T(0)) ga.v[i] += g.v[i];
  });
}

// PReLU with a single learnable slope (shape [1]).
template <typename T>
int prelu(Tape<T>& tp, int a, int slope) {
  T al = tp.val(slope).v[0];
  Tensor<T> y = tp.val(a);
  for (auto& x : y.v) x = x > T(0) ? x : al * x;
  return tp.add(std::move(y), any_grad(tp, {a, slope}),
                [a, slope](Tape<T>& t, int s) {
                  const Tensor<T>& g = t.grad(s);
                  const Tensor<T>& va = t.val(a);
                  T al2 = t.val(slope).v[0];
                  if (t.needs_grad(a)) {
                    Tensor<T>& ga = t.grad(a);
                    for (std::size_t i = 0; i < g.numel(); ++i)
                      ga.v[i] += va.v[i] > T(0) ? g.v[i] : al2 * g.v[i];
                  }
                  if (t.needs_grad(slope)) {
                    T acc = 0;
                    for (std::size_t i = 0; i < g.numel(); ++i)
                      if (va.v[i] <= T(0)) acc += g.v[i] * va.v[i];
                    t.grad(slope).v[0] += acc;
                  }
                });
}

template <typename T>
int sigmoid(Tape<T>& tp, int a) {
  Tensor<T> y = tp.val(a);
  for (auto& x : y.v) x = T(1) / (T(1) + std::exp(-x));
  return tp.add(std::move(y), any_grad(tp, {a}), [a](Tape<T>& t, int s) {
    if (!t.needs_grad(a)) return;
    const Tensor<T>& g = t.grad(s);
    const Tensor<T>& vy = t.val(s);
    Tensor<T>& ga = t.grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i)
      ga.v[i] += g.v[i] * vy.v[i] * (T(1) - vy.v[i]);
  });
}

template <typename T>
int tanh_op(Tape<T>& tp, int a) {
  Tensor<T> y = tp.val(a);
  for (auto& x : y.v) x = std::tanh(x);
  return tp.add(std::move(y), any_grad(tp, {a}), [a](Tape<T>& t, int s) {
    if (!t.needs_grad(a)) return;
    const Tensor<T>& g = t.grad(s);
    const Tensor<T>& vy = t.val(s);
    Tensor<T>& ga = t.grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i)
      ga.v[i] += g.v[i] * (T(1) - vy.v[i] * vy.v[i]);
  });
}

// y[N,M] = x[N,K] * W[M,K]^T + b[M]; b = -1 for no bias.
template <typename T>
int linear(Tape<T>& tp, int x, int W, int b = -1) {
  const Tensor<T>& vx = tp.val(x);
  const Tensor<T>& vw = tp.val(W);
  if (vx.rank() != 2 || vw.rank() != 2 || vx.dim(1) != vw.dim(1))
    throw ValidationError("linear: shape mismatch " + shape_str(vx.shape) +
                          " x " + shape_str(vw.shape));
  int N = vx.dim(0), K = vx.dim(1), M = vw.dim(0);
  Tensor<T> y({N, M});
  matmul_nt(N, M, K, vx.data(), vw.data(), y.data());
  if (b >= 0) {
    const Tensor<T>& vb = tp.val(b);
    if (int(vb.numel()) != M) throw ValidationError("linear: bias size");
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < M; ++j) y.v[std::size_t(i) * M + j] += vb.v[j];
  }
  return tp.add(std::move(y), any_grad(tp, {x, W, b}),
                [x, W, b, N, K, M](Tape<T>& t, int s) {
                  const Tensor<T>& g = t.grad(s);
                  if (t.needs_grad(x))
                    matmul_nn(N, K, M, g.data(), t.val(W).data(),
                              t.grad(x).data(), true);
                  if (t.needs_grad(W))
                    matmul_tn(M, K, N, g.data(), t.val(x).data(),
                              t.grad(W).data(), true);
                  if (b >= 0 && t.needs_grad(b)) {
                    Tensor<T>& gb = t.grad(b);
                    for (int i = 0; i < N; ++i)
                      for (int j = 0; j < M; ++j)
                        gb.v[j] += g.v[std::size_t(i) * M + j];
                  }
                });
}

// C = A * op(B); A is [M,K]; B is [K,N] (tb=false) or [N,K] (tb=true).
template <typename T>
int matmul(Tape<T>& tp, int A, int B, bool tb = false) {
  const Tensor<T>& va = tp.val(A);
  const Tensor<T>& vb = tp.val(B);
  if (va.rank() != 2 || vb.rank() != 2)
    throw ValidationError("matmul: rank != 2");
  int M = va.dim(0), K = va.dim(1);
  int N = tb ? vb.dim(0) : vb.dim(1);
  int Kb = tb ? vb.dim(1) : vb.dim(0);
  if (K != Kb) throw ValidationError("matmul: inner dim mismatch");
  Tensor<T> y({M, N});
  if (tb)
    matmul_nt(M, N, K, va.data(), vb.data(), y.data());
  else
    matmul_nn(M, N, K, va.data(), vb.data(), y.data());
  return tp.add(std::move(y), any_grad(tp, {A, B}),
                [A, B, tb, M, N, K](Tape<T>& t, int s) {
                  const Tensor<T>& g = t.grad(s);
                  if (t.needs_grad(A)) {
                    // dA = dC * op(B)^T
                    if (tb)
                      matmul_nn(M, K, N, g.data(), t.val(B).data(),
                                t.grad(A).data(), true);
                    else
                      matmul_nt(M, K, N, g.data(), t.val(B).data(),
                                t.grad(A).data(), true);
                  }
                  if (t.needs_grad(B)) {
                    if (tb)  // dB = dC^T * A
                      matmul_tn(N, K, M, g.data(), t.val(A).data(),
                                t.grad(B).data(), true);
                    else  // dB = A^T * dC
                      matmul_tn(K, N, M, t.val(A).data(), g.data(),
                                t.grad(B).data(), true);
                  }
                });
}

template <typename T>
int softmax_rows(Tape<T>& tp, int x) {
  const Tensor<T>& vx = tp.val(x);
  if (vx.rank() != 2) throw ValidationError("softmax_rows: rank != 2");
  int N = vx.dim(0), M = vx.dim(1);
  Tensor<T> y = vx;
  for (int i = 0; i < N; ++i) {
    T* row = y.data() + std::size_t(i) * M;
    T mx = *std::max_element(row, row + M);
    T sum = 0;
    for (int j = 0; j < M; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < M; ++j) row[j] /= sum;
  }
  return tp.add(std::move(y), any_grad(tp, {x}), [x, N, M](Tape<T>& t, int s) {
    if (!t.needs_grad(x)) return;
    const Tensor<T>& g = t.grad(s);
    const Tensor<T>& vy = t.val(s);
    Tensor<T>& gx = t.grad(x);
    for (int i = 0; i < N; ++i) {
      const T* gr = g.data() + std::size_t(i) * M;
      const T* yr = vy.data() + std::size_t(i) * M;
      T* gxr = gx.data() + std::size_t(i) * M;
      T dot = 0;
      for (int j = 0; j < M; ++j) dot += gr[j] * yr[j];
      for (int j = 0; j < M; ++j) gxr[j] += yr[j] * (gr[j] - dot);
    }
  });
}

// LayerNorm over the last dimension of a [N,C] tensor with learnable gamma,
// beta (shape [C]).
template <typename T>
int layer_norm_rows(Tape<T>& tp, int x, int gamma, int beta,
                    T eps = T(1e-5)) {
  const Tensor<T>& vx = tp.val(x);
  if (vx.rank() != 2) throw ValidationError("layer_norm: rank != 2");
  int N = vx.dim(0), C = vx.dim(1);
  if (int(tp.val(gamma).numel()) != C || int(tp.val(beta).numel()) != C)
    throw ValidationError("layer_norm: gamma/beta size");
  Tensor<T> y({N, C});
  auto xhat = std::make_shared<Tensor<T>>(std::vector<int>{N, C});
  auto rstd = std::make_shared<std::vector<T>>(std::size_t(N));
  const Tensor<T>& vg = tp.val(gamma);
  const Tensor<T>& vb = tp.val(beta);
  for (int i = 0; i < N; ++i) {
    const T* row = vx.data() + std::size_t(i) * C;
    T mu = 0;
    for (int j = 0; j < C; ++j) mu += row[j];
    mu /= T(C);
    T var = 0;
    for (int j = 0; j < C; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= T(C);
    T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[std::size_t(i)] = rs;
    for (int j = 0; j < C; ++j) {
      T xh = (row[j] - mu) * rs;
      xhat->v[std::size_t(i) * C + j] = xh;
      y.v[std::size_t(i) * C + j] = vg.v[j] * xh + vb.v[j];
    }
  }
  return tp.add(
      std::move(y), any_grad(tp, {x, gamma, beta}),
      [x, gamma, beta, N, C, xhat, rstd](Tape<T>& t, int s) {
        const Tensor<T>& g = t.grad(s);
        const Tensor<T>& vg = t.val(gamma);
        for (int i = 0; i < N; ++i) {
          const T* gr = g.data() + std::size_t(i) * C;
          const T* xh = xhat->data() + std::size_t(i) * C;
          if (t.needs_grad(gamma)) {
            Tensor<T>& gg = t.grad(gamma);
            for (int j = 0; j < C; ++j) gg.v[j] += gr[j] * xh[j];
          }
          if (t.needs_grad(beta)) {
            Tensor<T>& gb = t.grad(beta);
            for (int j = 0; j < C; ++j) gb.v[j] += gr[j];
          }
          if (t.needs_grad(x)) {
            T m1 = 0, m2 = 0;
            for (int j = 0; j < C; ++j) {
              T go = gr[j] * vg.v[j];
              m1 += go;
              m2 += go * xh[j];
            }
            m1 /= T(C);
            m2 /= T(C);
            T rs = (*rstd)[std::size_t(i)];
            Tensor<T>& gx = t.grad(x);
            T* gxr = gx.data() + std::size_t(i) * C;
            for (int j = 0; j < C; ++j) {
              T go = gr[j] * vg.v[j];
              gxr[j] += rs * (go - m1 - xh[j] * m2);
            }
          }
        }
      });
}

// Channel-mean map: (C,H,W) -> (1,H,W).
template <typename T>
int mean_channels(Tape<T>& tp, int x) {
  const Tensor<T>& vx = tp.val(x);
  if (vx.rank() != 3) throw ValidationError("mean_channels: rank != 3");
  int C = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
  std::size_t hw = std::size_t(H) * W;
  Tensor<T> y({1, H, W});
  for (int c = 0; c < C; ++c)
    for (std::size_t i = 0; i < hw; ++i) y.v[i] += vx.v[std::size_t(c) * hw + i];
  for (std::size_t i = 0; i < hw; ++i) y.v[i] /= T(C);
  return tp.add(std::move(y), any_grad(tp, {x}),
                [x, C, hw](Tape<T>& t, int s) {
                  if (!t.needs_grad(x)) return;
                  const Tensor<T>& g = t.grad(s);
                  Tensor<T>& gx = t.grad(x);
                  for (int c = 0; c < C; ++c)
                    for (std::size_t i = 0; i < hw; ++i)
                      gx.v[std::size_t(c) * hw + i] += g.v[i] / T(C);
                });
}

// Channel-max map: (C,H,W) -> (1,H,W); gradient routes to the argmax channel.
template <typename T>
int max_channels(Tape<T>& tp, int x) {
  const Tensor<T>& vx = tp.val(x);
  if (vx.rank() != 3) throw ValidationError("max_channels: rank != 3");
  int C = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
  std::size_t hw = std::size_t(H) * W;
  Tensor<T> y({1, H, W});
  auto arg = std::make_shared<std::vector<int>>(hw, 0);
  for (std::size_t i = 0; i < hw; ++i) {
    T best = vx.v[i];
    int bc = 0;
    for (int c = 1; c < C; ++c) {
      T v = vx.v[std::size_t(c) * hw + i];
      if (v > best) {
        best = v;
        bc = c;
      }
    }
    y.v[i] = best;
    (*arg)[i] = bc;
  }
  return tp.add(std::move(y), any_grad(tp, {x}),
                [x, hw, arg](Tape<T>& t, int s) {
                  if (!t.needs_grad(x)) return;
                  const Tensor<T>& g = t.grad(s);
                  Tensor<T>& gx = t.grad(x);
                  for (std::size_t i = 0; i < hw; ++i)
                    gx.v[std::size_t((*arg)[i]) * hw + i] += g.v[i];
                });
}

// Concatenate along axis 0; trailing dimensions must agree.
template <typename T>
int concat0(Tape<T>& tp, const std::vector<int>& xs) {
  if (xs.empty()) throw ValidationError("concat0: empty input list");
  std::vector<int> shape = tp.val(xs[0]).shape;
  std::size_t inner = tp.val(xs[0]).numel() / std::size_t(std::max(1, shape[0]));
  int total0 = 0;
  for (int id : xs) {
    const Tensor<T>& v = tp.val(id);
    if (v.rank() != int(shape.size()))
      throw ValidationError("concat0: rank mismatch");
    for (std::size_t d = 1; d < shape.size(); ++d)
      if (v.shape[d] != shape[d])
        throw ValidationError("concat0: trailing dim mismatch");
    total0 += v.shape[0];
  }
  shape[0] = total0;
  Tensor<T> y(shape);
  std::size_t off = 0;
  for (int id : xs) {
    const Tensor<T>& v = tp.val(id);
    std::copy(v.v.begin(), v.v.end(), y.v.begin() + long(off));
    off += v.numel();
  }
  bool ng = false;
  for (int id : xs) ng = ng || tp.needs_grad(id);
  (void)inner;
  return tp.add(std::move(y), ng, [xs](Tape<T>& t, int s) {
    const Tensor<T>& g = t.grad(s);
    std::size_t off2 = 0;
    for (int id : xs) {
      std::size_t n = t.val(id).numel();
      if (t.needs_grad(id)) {
        Tensor<T>& gi = t.grad(id);
        for (std::size_t i = 0; i < n; ++i) gi.v[i] += g.v[off2 + i];
      }
      off2 += n;
    }
  });
}

// x (C,H,W) * m (1,H,W), broadcasting m over channels.
template <typename T>
int broadcast_mul_chw(Tape<T>& tp, int x, int m) {
  const Tensor<T>& vx = tp.val(x);
  const Tensor<T>& vm = tp.val(m);
  if (vx.rank() != 3 || vm.rank() != 3 || vm.dim(0) != 1 ||
      vm.dim(1) != vx.dim(1) || vm.dim(2) != vx.dim(2))
    throw ValidationError("broadcast_mul_chw: shape mismatch");
  int C = vx.dim(0);
  std::size_t hw = std::size_t(vx.dim(1)) * vx.dim(2);
  Tensor<T> y = vx;
  for (int c = 0; c < C; ++c)
    for (std::size_t i = 0; i < hw; ++i) y.v[std::size_t(c) * hw + i] *= vm.v[i];
  return tp.add(std::move(y), any_grad(tp, {x, m}),
                [x, m, C, hw](Tape<T>& t, int s) {
                  const Tensor<T>& g = t.grad(s);
                  if (t.needs_grad(x)) {
                    const Tensor<T>& vm2 = t.val(m);
                    Tensor<T>& gx = t.grad(x);
                    for (int c = 0; c < C; ++c)
                      for (std::size_t i = 0; i < hw; ++i)
                        gx.v[std::size_t(c) * hw + i] +=
                            g.v[std::size_t(c) * hw + i] * vm2.v[i];
                  }
                  if (t.needs_grad(m)) {
                    const Tensor<T>& vx2 = t.val(x);
                    Tensor<T>& gm = t.grad(m);
                    for (int c = 0; c < C; ++c)
                      for (std::size_t i = 0; i < hw; ++i)
                        gm.v[i] += g.v[std::size_t(c) * hw + i] *
                                   vx2.v[std::size_t(c) * hw + i];
                  }
                });
}

template <typename T>
int reshape(Tape<T>& tp, int x, std::vector<int> shape) {
  Tensor<T> y(shape);
  if (y.numel() != tp.val(x).numel())
    throw ValidationError("reshape: element count mismatch");
  y.v = tp.val(x).v;
  return tp.add(std::move(y), any_grad(tp, {x}), [x](Tape<T>& t, int s) {
    if (!t.needs_grad(x)) return;
    const Tensor<T>& g = t.grad(s);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < g.numel(); ++i) gx.v[i] += g.v[i];
  });
}

// (C,H,W) -> (H*W, C): one row per spatial position (for per-position LN).
template <typename T>
int chw_to_rows(Tape<T>& tp, int x) {
  const Tensor<T>& vx = tp.val(x);
  if (vx.rank() != 3) throw ValidationError("chw_to_rows: rank != 3");
  int C = vx.dim(0);
  std::size_t hw = std::size_t(vx.dim(1)) * vx.dim(2);
  Tensor<T> y({int(hw), C});
  for (int c = 0; c < C; ++c)
    for (std::size_t i = 0; i < hw; ++i)
      y.v[i * std::size_t(C) + c] = vx.v[std::size_t(c) * hw + i];
  return tp.add(std::move(y), any_grad(tp, {x}),
                [x, C, hw](Tape<T>& t, int s) {
                  if (!t.needs_grad(x)) return;
                  const Tensor<T>& g = t.grad(s);
                  Tensor<T>& gx = t.grad(x);
                  for (int c = 0; c < C; ++c)
                    for (std::size_t i = 0; i < hw; ++i)
                      gx.v[std::size_t(c) * hw + i] +=
                          g.v[i * std::size_t(C) + c];
                });
}

// (H*W, C) -> (C,H,W): inverse of chw_to_rows.
template <typename T>
int rows_to_chw(Tape<T>& tp, int x, int C, int H, int W) {
  const Tensor<T>& vx = tp.val(x);
  std::size_t hw = std::size_t(H) * W;
  if (vx.rank() != 2 || vx.dim(0) != int(hw) || vx.dim(1) != C)
    throw ValidationError("rows_to_chw: shape mismatch");
  Tensor<T> y({C, H, W});
  for (int c = 0; c < C; ++c)
    for (std::size_t i = 0; i < hw; ++i)
      y.v[std::size_t(c) * hw + i] = vx.v[i * std::size_t(C) + c];
  return tp.add(std::move(y), any_grad(tp, {x}),
                [x, C, hw](Tape<T>& t, int s) {
                  if (!t.needs_grad(x)) return;
                  const Tensor<T>& g = t.grad(s);
                  Tensor<T>& gx = t.grad(x);
                  for (int c = 0; c < C; ++c)
                    for (std::size_t i = 0; i < hw; ++i)
                      gx.v[i * std::size_t(C) + c] +=
                          g.v[std::size_t(c) * hw + i];
                });
}

// (R, C*W) -> (C,R,W): row r supplies all channels of spatial row r.
template <typename T>
int rows_split_chw(Tape<T>& tp, int x, int C, int W) {
  const Tensor<T>& vx = tp.val(x);
  if (vx.rank() != 2 || vx.dim(1) != C * W)
    throw ValidationError("rows_split_chw: shape mismatch");
  int R = vx.dim(0);
  Tensor<T> y({C, R, W});
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c)
      for (int w = 0; w < W; ++w)
        y.v[(std::size_t(c) * R + r) * W + w] =
            vx.v[std::size_t(r) * (C * W) + c * W + w];
  return tp.add(std::move(y), any_grad(tp, {x}),
                [x, C, W, R](Tape<T>& t, int s) {
                  if (!t.needs_grad(x)) return;
                  const Tensor<T>& g = t.grad(s);
                  Tensor<T>& gx = t.grad(x);
                  for (int r = 0; r < R; ++r)
                    for (int c = 0; c < C; ++c)
                      for (int w = 0; w < W; ++w)
                        gx.v[std::size_t(r) * (C * W) + c * W + w] +=
                            g.v[(std::size_t(c) * R + r) * W + w];
                });
}

// Concatenate [N,Ki] matrices along columns -> [N, sum Ki].
template <typename T>
int concat_cols(Tape<T>& tp, const std::vector<int>& xs) {
  if (xs.empty()) throw ValidationError("concat_cols: empty input list");
  int N = tp.val(xs[0]).dim(0), K = 0;
  for (int id : xs) {
    const Tensor<T>& v = tp.val(id);
    if (v.rank() != 2 || v.dim(0) != N)
      throw ValidationError("concat_cols: row mismatch");
    K += v.dim(1);
  }
  Tensor<T> y({N, K});
  int off = 0;
  for (int id : xs) {
    const Tensor<T>& v = tp.val(id);
    int k = v.dim(1);
    for (int i = 0; i < N; ++i)
      std::copy(v.data() + std::size_t(i) * k,
                v.data() + std::size_t(i + 1) * k,
                y.data() + std::size_t(i) * K + off);
    off += k;
  }
  bool ng = false;
  for (int id : xs) ng = ng || tp.needs_grad(id);
  return tp.add(std::move(y), ng, [xs, N, K](Tape<T>& t, int s) {
    const Tensor<T>& g = t.grad(s);
    int off2 = 0;
    for (int id : xs) {
      int k = t.val(id).dim(1);
      if (t.needs_grad(id)) {
        Tensor<T>& gi = t.grad(id);
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < k; ++j)
            gi.v[std::size_t(i) * k + j] +=
                g.v[std::size_t(i) * K + off2 + j];
      }
      off2 += k;
    }
  });
}

// Column slice of a [N,K] matrix: columns [c0, c1).
template <typename T>
int slice_cols(Tape<T>& tp, int x, int c0, int c1) {
  const Tensor<T>& vx = tp.val(x);
  if (vx.rank() != 2 || c0 < 0 || c1 > vx.dim(1) || c0 >= c1)
    throw ValidationError("slice_cols: bad range");
  int N = vx.dim(0), K = vx.dim(1), M = c1 - c0;
  Tensor<T> y({N, M});
  for (int i = 0; i < N; ++i)
    std::copy(vx.data() + std::size_t(i) * K + c0,
              vx.data() + std::size_t(i) * K + c1,
              y.data() + std::size_t(i) * M);
  return tp.add(std::move(y), any_grad(tp, {x}),
                [x, c0, N, K, M](Tape<T>& t, int s) {
                  if (!t.needs_grad(x)) return;
                  const Tensor<T>& g = t.grad(s);
                  Tensor<T>& gx = t.grad(x);
                  for (int i = 0; i < N; ++i)
                    for (int j = 0; j < M; ++j)
                      gx.v[std::size_t(i) * K + c0 + j] +=
                          g.v[std::size_t(i) * M + j];
                });
}

namespace detail {
// PyTorch-style adaptive bin [floor(i*n/m), ceil((i+1)*n/m)).
inline std::pair<int, int> adaptive_bin(int i, int n, int m) {
  int lo = (i * n) / m;
  int hi = ((i + 1) * n + m - 1) / m;
  return {lo, hi};
}
}  // namespace detail

// Adaptive average pooling (C,H,W) -> (C,oh,ow).
template <typename T>
int adaptive_avg_pool_chw(Tape<T>& tp, int x, int oh, int ow) {
  const Tensor<T>& vx = tp.val(x);
  if (vx.rank() != 3) throw ValidationError("adaptive_avg_pool: rank != 3");
  int C = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
  Tensor<T> y({C, oh, ow});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < oh; ++i) {
      auto [h0, h1] = detail::adaptive_bin(i, H, oh);
      for (int j = 0; j < ow; ++j) {
        auto [w0, w1] = detail::adaptive_bin(j, W, ow);
        T acc = 0;
        for (int h = h0; h < h1; ++h)
          for (int w = w0; w < w1; ++w)
            acc += vx.v[(std::size_t(c) * H + h) * W + w];
        y.v[(std::size_t(c) * oh + i) * ow + j] =
            acc / T((h1 - h0) * (w1 - w0));
      }
    }
  return tp.add(std::move(y), any_grad(tp, {x}),
                [x, C, H, W, oh, ow](Tape<T>& t, int s) {
                  if (!t.needs_grad(x)) return;
                  const Tensor<T>& g = t.grad(s);
                  Tensor<T>& gx = t.grad(x);
                  for (int c = 0; c < C; ++c)
                    for (int i = 0; i < oh; ++i) {
                      auto [h0, h1] = detail::adaptive_bin(i, H, oh);
                      for (int j = 0; j < ow; ++j) {
                        auto [w0, w1] = detail::adaptive_bin(j, W, ow);
                        T gv = g.v[(std::size_t(c) * oh + i) * ow + j] /
                               T((h1 - h0) * (w1 - w0));
                        for (int h = h0; h < h1; ++h)
                          for (int w = w0; w < w1; ++w)
                            gx.v[(std::size_t(c) * H + h) * W + w] += gv;
                      }
                    }
                });
}

// Adaptive average pooling of rows: [N,K] -> [M,K].
template <typename T>
int adaptive_avg_rows(Tape<T>& tp, int x, int M) {
  const Tensor<T>& vx = tp.val(x);
  if (vx.rank() != 2) throw ValidationError("adaptive_avg_rows: rank != 2");
  int N = vx.dim(0), K = vx.dim(1);
  Tensor<T> y({M, K});
  for (int i = 0; i < M; ++i) {
    auto [r0, r1] = detail::adaptive_bin(i, N, M);
    for (int j = 0; j < K; ++j) {
      T acc = 0;
      for (int r = r0; r < r1; ++r) acc += vx.v[std::size_t(r) * K + j];
      y.v[std::size_t(i) * K + j] = acc / T(r1 - r0);
    }
  }
  return tp.add(std::move(y), any_grad(tp, {x}),
                [x, N, K, M](Tape<T>& t, int s) {
                  if (!t.needs_grad(x)) return;
                  const Tensor<T>& g = t.grad(s);
                  Tensor<T>& gx = t.grad(x);
                  for (int i = 0; i < M; ++i) {
                    auto [r0, r1] = detail::adaptive_bin(i, N, M);
                    for (int j = 0; j < K; ++j) {
                      T gv = g.v[std::size_t(i) * K + j] / T(r1 - r0);
                      for (int r = r0; r < r1; ++r)
                        gx.v[std::size_t(r) * K + j] += gv;
                    }
                  }
                });
}

// Inverted dropout; identity when !training or rate == 0.
template <typename T>
int dropout(Tape<T>& tp, int x, double rate, bool training,
            std::mt19937_64& rng) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw ValidationError("dropout: rate must be < 1");
  const Tensor<T>& vx = tp.val(x);
  auto mask = std::make_shared<std::vector<T>>(vx.numel());
  std::bernoulli_distribution keep(1.0 - rate);
  T inv = T(1.0 / (1.0 - rate));
  Tensor<T> y = vx;
  for (std::size_t i = 0; i < vx.numel(); ++i) {
    T m = keep(rng) ? inv : T(0);
    (*mask)[i] = m;
    y.v[i] *= m;
  }
  return tp.add(std::move(y), any_grad(tp, {x}),
                [x, mask](Tape<T>& t, int s) {
                  if (!t.needs_grad(x)) return;
                  const Tensor<T>& g = t.grad(s);
                  Tensor<T>& gx = t.grad(x);
                  for (std::size_t i = 0; i < g.numel(); ++i)
                    gx.v[i] += g.v[i] * (*mask)[i];
                });
}

// Reflection padding of (C,H,W) by p pixels on every side.
template <typename T>
int reflection_pad_chw(Tape<T>& tp, int x, int p) {
  const Tensor<T>& vx = tp.val(x);
  if (vx.rank() != 3) throw ValidationError("reflection_pad: rank != 3");
  int C = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
  if (p >= H || p >= W)
    throw ValidationError("reflection_pad: pad too large for input");
  int Ho = H + 2 * p, Wo = W + 2 * p;
  auto reflect = [](int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
  };
  Tensor<T> y({C, Ho, Wo});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < Ho; ++i) {
      int si = reflect(i - p, H);
      for (int j = 0; j < Wo; ++j) {
        int sj = reflect(j - p, W);
        y.v[(std::size_t(c) * Ho + i) * Wo + j] =
            vx.v[(std::size_t(c) * H + si) * W + sj];
      }
    }
  return tp.add(std::move(y), any_grad(tp, {x}),
                [x, C, H, W, p, Ho, Wo, reflect](Tape<T>& t, int s) {
                  if (!t.needs_grad(x)) return;
                  const Tensor<T>& g = t.grad(s);
                  Tensor<T>& gx = t.grad(x);
                  for (int c = 0; c < C; ++c)
                    for (int i = 0; i < Ho; ++i) {
                      int si = reflect(i - p, H);
                      for (int j = 0; j < Wo; ++j) {
                        int sj = reflect(j - p, W);
                        gx.v[(std::size_t(c) * H + si) * W + sj] +=
                            g.v[(std::size_t(c) * Ho + i) * Wo + j];
                      }
                    }
                });
}

// Mean of all elements -> scalar [1].
template <typename T>
int mean_all(Tape<T>& tp, int x) {
  const Tensor<T>& vx = tp.val(x);
  T acc = 0;
  for (T v : vx.v) acc += v;
  std::size_t n = vx.numel();
  return tp.add(Tensor<T>::scalar(acc / T(n)), any_grad(tp, {x}),
                [x, n](Tape<T>& t, int s) {
                  if (!t.needs_grad(x)) return;
                  T gv = t.grad(s).v[0] / T(n);
                  Tensor<T>& gx = t.grad(x);
                  for (std::size_t i = 0; i < n; ++i) gx.v[i] += gv;
                });
}

// y[i,j] = x[i,j] + pe[i]: broadcast a per-position scalar across features.
template <typename T>
int add_pos_scalar(Tape<T>& tp, int x, int pe) {
  const Tensor<T>& vx = tp.val(x);
  const Tensor<T>& vp = tp.val(pe);
  if (vx.rank() != 2 || int(vp.numel()) != vx.dim(0))
    throw ValidationError("add_pos_scalar: shape mismatch");
  int N = vx.dim(0), K = vx.dim(1);
  Tensor<T> y = vx;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < K; ++j) y.v[std::size_t(i) * K + j] += vp.v[std::size_t(i)];
  return tp.add(std::move(y), any_grad(tp, {x, pe}),
                [x, pe, N, K](Tape<T>& t, int s) {
                  const Tensor<T>& g = t.grad(s);
                  if (t.needs_grad(x)) {
                    Tensor<T>& gx = t.grad(x);
                    for (std::size_t i = 0; i < g.numel(); ++i)
                      gx.v[i] += g.v[i];
                  }
                  if (t.needs_grad(pe)) {
                    Tensor<T>& gp = t.grad(pe);
                    for (int i = 0; i < N; ++i) {
                      T acc = 0;
                      for (int j = 0; j < K; ++j)
                        acc += g.v[std::size_t(i) * K + j];
                      gp.v[std::size_t(i)] += acc;
                    }
                  }
                });
}

// Mean squared error between two same-shape tensors -> scalar [1].
template <typename T>
int mse_loss(Tape<T>& tp, int a, int b) {
  const Tensor<T>& va = tp.val(a);
  const Tensor<T>& vb = tp.val(b);
  if (!va.same_shape(vb)) throw ValidationError("mse_loss: shape mismatch");
  std::size_t n = va.numel();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    T d = va.v[i] - vb.v[i];
    acc += d * d;
  }
  return tp.add(Tensor<T>::scalar(acc / T(n)), any_grad(tp, {a, b}),
                [a, b, n](Tape<T>& t, int s) {
                  T gv = t.grad(s).v[0];
                  const Tensor<T>& va2 = t.val(a);
                  const Tensor<T>& vb2 = t.val(b);
                  if (t.needs_grad(a)) {
                    Tensor<T>& ga = t.grad(a);
                    for (std::size_t i = 0; i < n; ++i)
                      ga.v[i] += gv * T(2) * (va2.v[i] - vb2.v[i]) / T(n);
                  }
                  if (t.needs_grad(b)) {
                    Tensor<T>& gb = t.grad(b);
                    for (std::size_t i = 0; i < n; ++i)
                      gb.v[i] -= gv * T(2) * (va2.v[i] - vb2.v[i]) / T(n);
                  }
                });
}

}  // namespace bandforge::nn
