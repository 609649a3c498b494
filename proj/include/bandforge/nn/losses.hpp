#pragma once
// Training losses: MSE (ops.hpp), windowed structural similarity loss (SSL),
// and patch-based maximum mean discrepancy (MMD), each as a tape op with an
// analytic backward plus a plain scalar wrapper. The composite objective is
// mse + beta1*ssl + beta2*mmd.

#include <cmath>
#include <memory>

#include "bandforge/nn/ops.hpp"

namespace bandforge::nn {

struct LossWeights {
  double beta1 = 0.1;        // SSL weight
  double beta2 = 0.6;        // MMD weight
  double c0 = 1e-4;          // SSL stabilizer
  int ssl_window = 11;       // sliding-window side
  double mmd_bandwidth = 0;  // kernel bandwidth sigma; <= 0 = median heuristic
};

namespace detail {

// Flatten a rank-2 [H,W] or rank-3 (1,H,W) image node to (H,W).
template <typename T>
std::pair<int, int> image_hw(const Tensor<T>& t, const char* who) {
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  if (t.rank() == 3 && t.dim(0) == 1) return {t.dim(1), t.dim(2)};
  throw ValidationError(std::string(who) + ": expected (H,W) or (1,H,W), got " +
                        shape_str(t.shape));
}

// Double-precision summed-area table: S has (H+1) x (W+1) entries.
template <typename T>
void sat(const T* x, int H, int W, std::vector<double>& S) {
  S.assign(std::size_t(H + 1) * (W + 1), 0.0);
  for (int i = 0; i < H; ++i) {
    double row = 0;
    for (int j = 0; j < W; ++j) {
      row += double(x[std::size_t(i) * W + j]);
      S[std::size_t(i + 1) * (W + 1) + (j + 1)] =
          S[std::size_t(i) * (W + 1) + (j + 1)] + row;
    }
  }
}

inline double sat_box(const std::vector<double>& S, int W, int i0, int j0,
                      int i1, int j1) {  // sum over [i0,i1) x [j0,j1)
  return S[std::size_t(i1) * (W + 1) + j1] - S[std::size_t(i0) * (W + 1) + j1] -
         S[std::size_t(i1) * (W + 1) + j0] + S[std::size_t(i0) * (W + 1) + j0];
}

// P[h][w] = sum of coefficient grid c (Nh x Nw, window origins) over all
// origins whose k x k window covers pixel (h,w).
inline void box_spread(const std::vector<double>& c, int Nh, int Nw, int k,
                       int H, int W, std::vector<double>& P) {
  std::vector<double> S;
  S.assign(std::size_t(Nh + 1) * (Nw + 1), 0.0);
  for (int i = 0; i < Nh; ++i) {
    double row = 0;
    for (int j = 0; j < Nw; ++j) {
      row += c[std::size_t(i) * Nw + j];
      S[std::size_t(i + 1) * (Nw + 1) + (j + 1)] =
          S[std::size_t(i) * (Nw + 1) + (j + 1)] + row;
    }
  }
  P.assign(std::size_t(H) * W, 0.0);
  for (int h = 0; h < H; ++h) {
    int i0 = std::max(0, h - k + 1), i1 = std::min(h, Nh - 1) + 1;
    if (i0 >= i1) continue;
    for (int w = 0; w < W; ++w) {
      int j0 = std::max(0, w - k + 1), j1 = std::min(w, Nw - 1) + 1;
      if (j0 >= j1) continue;
      P[std::size_t(h) * W + w] =
          S[std::size_t(i1) * (Nw + 1) + j1] -
          S[std::size_t(i0) * (Nw + 1) + j1] -
          S[std::size_t(i1) * (Nw + 1) + j0] +
          S[std::size_t(i0) * (Nw + 1) + j0];
    }
  }
}

constexpr double kVarFloor = 1e-12;  // windows below this count as constant

}  // namespace detail

// SSL = 1 - mean over k x k sliding windows of cov_xy / (sx * sy + c0).
// Constant (zero-variance) windows contribute cov/(0 + c0) with zero gradient
// through the dead standard deviation.
template <typename T>
int ssl_loss(Tape<T>& tp, int x, int y, const LossWeights& lw = {}) {
  const Tensor<T>& vx = tp.val(x);
  const Tensor<T>& vy = tp.val(y);
  auto [H, W] = detail::image_hw(vx, "ssl");
  auto [H2, W2] = detail::image_hw(vy, "ssl");
  if (H != H2 || W != W2) throw ValidationError("ssl: shape mismatch");
  int k = lw.ssl_window;
  if (H < k || W < k)
    throw ValidationError("ssl: image smaller than window");
  int Nh = H - k + 1, Nw = W - k + 1;
  double N = double(k) * k, c0 = lw.c0;

  std::vector<double> Sx, Sy, Sxx, Syy, Sxy;
  {
    std::vector<double> xx(std::size_t(H) * W), yy(xx.size()), xy(xx.size());
    const T* px = vx.data();
    const T* py = vy.data();
    for (std::size_t i = 0; i < xx.size(); ++i) {
      double a = double(px[i]), b = double(py[i]);
      xx[i] = a * a;
      yy[i] = b * b;
      xy[i] = a * b;
    }
    detail::sat(px, H, W, Sx);
    detail::sat(py, H, W, Sy);
    std::vector<double> tmp(xx.size());
    for (std::size_t i = 0; i < xx.size(); ++i) tmp[i] = xx[i];
    detail::sat(tmp.data(), H, W, Sxx);
    for (std::size_t i = 0; i < yy.size(); ++i) tmp[i] = yy[i];
    detail::sat(tmp.data(), H, W, Syy);
    for (std::size_t i = 0; i < xy.size(); ++i) tmp[i] = xy[i];
    detail::sat(tmp.data(), H, W, Sxy);
  }

  // Per-window stats kept for the backward pass.
  struct Saved {
    std::vector<double> a, b, c, mux, muy;  // coefficient grids
    int Nh, Nw, k, H, W;
  };
  auto sv = std::make_shared<Saved>();
  sv->Nh = Nh;
  sv->Nw = Nw;
  sv->k = k;
  sv->H = H;
  sv->W = W;
  sv->a.resize(std::size_t(Nh) * Nw);
  sv->b.resize(sv->a.size());
  sv->c.resize(sv->a.size());
  sv->mux.resize(sv->a.size());
  sv->muy.resize(sv->a.size());

  double acc = 0;
  for (int i = 0; i < Nh; ++i)
    for (int j = 0; j < Nw; ++j) {
      double sx1 = detail::sat_box(Sx, W, i, j, i + k, j + k);
      double sy1 = detail::sat_box(Sy, W, i, j, i + k, j + k);
      double sxx = detail::sat_box(Sxx, W, i, j, i + k, j + k);
      double syy = detail::sat_box(Syy, W, i, j, i + k, j + k);
      double sxy = detail::sat_box(Sxy, W, i, j, i + k, j + k);
      double mux = sx1 / N, muy = sy1 / N;
      double varx = std::max(0.0, sxx / N - mux * mux);
      double vary = std::max(0.0, syy / N - muy * muy);
      double cov = sxy / N - mux * muy;
      double sx = std::sqrt(varx), sy = std::sqrt(vary);
      double den = sx * sy + c0;
      double t = cov / den;
      acc += t;
      std::size_t w = std::size_t(i) * Nw + j;
      sv->mux[w] = mux;
      sv->muy[w] = muy;
      sv->a[w] = 1.0 / (N * den);
      sv->b[w] = varx > detail::kVarFloor
                     ? -cov * sy / (N * sx * den * den)
                     : 0.0;
      sv->c[w] = vary > detail::kVarFloor
                     ? -cov * sx / (N * sy * den * den)
                     : 0.0;
    }
  double nw = double(Nh) * Nw;
  T out = T(1.0 - acc / nw);

  return tp.add(Tensor<T>::scalar(out), any_grad(tp, {x, y}),
                [x, y, sv, nw](Tape<T>& t, int s) {
                  double gout = double(t.grad(s).v[0]);
                  double f = -gout / nw;
                  int H = sv->H, W = sv->W, k2 = sv->k;
                  int Nh = sv->Nh, Nw2 = sv->Nw;
                  std::size_t n = std::size_t(H) * W;
                  std::vector<double> tmp(sv->a.size()), P1, P2, P3, P4;
                  auto spread = [&](const std::vector<double>& c,
                                    std::vector<double>& P) {
                    detail::box_spread(c, Nh, Nw2, k2, H, W, P);
                  };
                  if (t.needs_grad(x)) {
                    // dt/dx_i = a(y_i - muy) + b(x_i - mux)
                    spread(sv->a, P1);
                    for (std::size_t i = 0; i < tmp.size(); ++i)
                      tmp[i] = sv->a[i] * sv->muy[i];
                    spread(tmp, P2);
                    spread(sv->b, P3);
                    for (std::size_t i = 0; i < tmp.size(); ++i)
                      tmp[i] = sv->b[i] * sv->mux[i];
                    spread(tmp, P4);
                    Tensor<T>& gx = t.grad(x);
                    const T* px = t.val(x).data();
                    const T* py = t.val(y).data();
                    for (std::size_t i = 0; i < n; ++i)
                      gx.v[i] += T(f * (double(py[i]) * P1[i] - P2[i] +
                                        double(px[i]) * P3[i] - P4[i]));
                  }
                  if (t.needs_grad(y)) {
                    spread(sv->a, P1);
                    for (std::size_t i = 0; i < tmp.size(); ++i)
                      tmp[i] = sv->a[i] * sv->mux[i];
                    spread(tmp, P2);
                    spread(sv->c, P3);
                    for (std::size_t i = 0; i < tmp.size(); ++i)
                      tmp[i] = sv->c[i] * sv->muy[i];
                    spread(tmp, P4);
                    Tensor<T>& gy = t.grad(y);
                    const T* px = t.val(x).data();
                    const T* py = t.val(y).data();
                    for (std::size_t i = 0; i < n; ++i)
                      gy.v[i] += T(f * (double(px[i]) * P1[i] - P2[i] +
                                        double(py[i]) * P3[i] - P4[i]));
                  }
                });
}

// MMD^2 between the two images' non-overlapping 8x8 patch populations with a
// Gaussian kernel; biased V-statistic, so mmd(X,X) = 0 exactly. The median
// heuristic bandwidth is treated as a constant in the backward pass.
template <typename T>
int mmd_loss(Tape<T>& tp, int x, int y, const LossWeights& lw = {}) {
  constexpr int P = 8;  // patch side
  const Tensor<T>& vx = tp.val(x);
  const Tensor<T>& vy = tp.val(y);
  auto [H, W] = detail::image_hw(vx, "mmd");
  auto [H2, W2] = detail::image_hw(vy, "mmd");
  if (H != H2 || W != W2) throw ValidationError("mmd: shape mismatch");
  if (H % P || W % P)
    throw ValidationError("mmd: image dims must be multiples of 8");
  int ph = H / P, pw = W / P, n = ph * pw, d = P * P;

  auto extract = [&](const T* img, std::vector<double>& out) {
    out.resize(std::size_t(n) * d);
    for (int bi = 0; bi < ph; ++bi)
      for (int bj = 0; bj < pw; ++bj) {
        double* dst = out.data() + (std::size_t(bi) * pw + bj) * d;
        for (int i = 0; i < P; ++i)
          for (int j = 0; j < P; ++j)
            dst[i * P + j] =
                double(img[(std::size_t(bi) * P + i) * W + bj * P + j]);
      }
  };
  auto X = std::make_shared<std::vector<double>>();
  auto Y = std::make_shared<std::vector<double>>();
  extract(vx.data(), *X);
  extract(vy.data(), *Y);

  // Per-block Grams. Each block is a pure function of its operand values, so
  // identical images yield bitwise-identical XX/YY/XY blocks and the biased
  // estimator cancels to exactly zero.
  auto gram_d2 = [n, d](const std::vector<double>& A,
                        const std::vector<double>& B) {
    std::vector<double> G(std::size_t(n) * n);
    matmul_nt(n, n, d, A.data(), B.data(), G.data());
    std::vector<double> na(static_cast<std::size_t>(n));
    std::vector<double> nb(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      double sa = 0, sb = 0;
      for (int q = 0; q < d; ++q) {
        sa += A[std::size_t(i) * d + q] * A[std::size_t(i) * d + q];
        sb += B[std::size_t(i) * d + q] * B[std::size_t(i) * d + q];
      }
      na[std::size_t(i)] = sa;
      nb[std::size_t(i)] = sb;
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double v = na[std::size_t(i)] + nb[std::size_t(j)] -
                   2.0 * G[std::size_t(i) * n + j];
        G[std::size_t(i) * n + j] = v > 0 ? v : 0;
      }
    return G;
  };
  std::vector<double> dxx = gram_d2(*X, *X);
  std::vector<double> dyy = gram_d2(*Y, *Y);
  std::vector<double> dxy = gram_d2(*X, *Y);

  double sigma2 = lw.mmd_bandwidth * lw.mmd_bandwidth;
  if (lw.mmd_bandwidth <= 0) {
    // Median squared distance over all unordered pairs of the pooled set.
    std::vector<double> off;
    off.reserve(std::size_t(n) * (n - 1) + std::size_t(n) * n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        off.push_back(dxx[std::size_t(i) * n + j]);
        off.push_back(dyy[std::size_t(i) * n + j]);
      }
    for (std::size_t i = 0; i < dxy.size(); ++i) off.push_back(dxy[i]);
    if (off.empty())
      sigma2 = 1.0;
    else {
      auto mid = off.begin() + long(off.size() / 2);
      std::nth_element(off.begin(), mid, off.end());
      sigma2 = *mid;
      if (sigma2 <= 0) sigma2 = 1.0;
    }
  }

  auto kxx = std::make_shared<std::vector<double>>(std::move(dxx));
  auto kyy = std::make_shared<std::vector<double>>(std::move(dyy));
  auto kxy = std::make_shared<std::vector<double>>(std::move(dxy));
  for (auto* K : {kxx.get(), kyy.get(), kxy.get()})
    for (auto& v : *K) v = std::exp(-v / (2.0 * sigma2));

  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < kxx->size(); ++i) {
    sxx += (*kxx)[i];
    syy += (*kyy)[i];
    sxy += (*kxy)[i];
  }
  double nn = double(n) * n;
  double val = sxx / nn + syy / nn - 2.0 * sxy / nn;

  struct Ctx {
    std::shared_ptr<std::vector<double>> X, Y, kxx, kyy, kxy;
    double sigma2;
    int n, d, ph, pw, H, W;
  };
  auto cx = std::make_shared<Ctx>(
      Ctx{X, Y, kxx, kyy, kxy, sigma2, n, d, ph, pw, H, W});

  auto patch_grad_to_pixels = [](const std::vector<double>& gp, int ph,
                                 int pw, int d, int W, double scale,
                                 Tensor<T>& gimg) {
    constexpr int Pp = 8;
    for (int bi = 0; bi < ph; ++bi)
      for (int bj = 0; bj < pw; ++bj) {
        const double* src = gp.data() + (std::size_t(bi) * pw + bj) * d;
        for (int i = 0; i < Pp; ++i)
          for (int j = 0; j < Pp; ++j)
            gimg.v[(std::size_t(bi) * Pp + i) * W + bj * Pp + j] +=
                T(scale * src[i * Pp + j]);
      }
  };

  return tp.add(
      Tensor<T>::scalar(T(val)), any_grad(tp, {x, y}),
      [x, y, cx, patch_grad_to_pixels](Tape<T>& t, int s) {
        double gout = double(t.grad(s).v[0]);
        int n = cx->n, d = cx->d;
        double nn = double(n) * n;
        // g_p = (2/sigma2) [ (1/n^2) sum_j Kaa[p,j](A_j - A_p)
        //                  + (1/n^2) sum_j Kab[p,j](A_p - B_j) ]
        auto grad_side = [&](bool first) {
          const std::vector<double>& A = first ? *cx->X : *cx->Y;
          const std::vector<double>& B = first ? *cx->Y : *cx->X;
          const std::vector<double>& Kaa = first ? *cx->kxx : *cx->kyy;
          const std::vector<double>& Kxy = *cx->kxy;  // rows = X, cols = Y
          std::vector<double> gp(std::size_t(n) * d, 0.0);
          std::vector<double> KA(std::size_t(n) * d), KB(std::size_t(n) * d);
          matmul_nn(n, d, n, Kaa.data(), A.data(), KA.data());
          if (first)
            matmul_nn(n, d, n, Kxy.data(), B.data(), KB.data());
          else  // need Kxy^T rows for the Y side
            matmul_tn(n, d, n, Kxy.data(), B.data(), KB.data());
          for (int p = 0; p < n; ++p) {
            double rsa = 0, rsb = 0;
            for (int j = 0; j < n; ++j) {
              rsa += Kaa[std::size_t(p) * n + j];
              rsb += first ? Kxy[std::size_t(p) * n + j]
                           : Kxy[std::size_t(j) * n + p];
            }
            for (int q = 0; q < d; ++q) {
              double ap = A[std::size_t(p) * d + q];
              double t1 = KA[std::size_t(p) * d + q] - rsa * ap;  // attraction
              double t2 = rsb * ap - KB[std::size_t(p) * d + q];  // repulsion
              gp[std::size_t(p) * d + q] =
                  (2.0 / cx->sigma2) * (t1 + t2) / nn;
            }
          }
          return gp;
        };
        if (t.needs_grad(x)) {
          auto gp = grad_side(true);
          patch_grad_to_pixels(gp, cx->ph, cx->pw, d, cx->W, gout, t.grad(x));
        }
        if (t.needs_grad(y)) {
          auto gp = grad_side(false);
          patch_grad_to_pixels(gp, cx->ph, cx->pw, d, cx->W, gout, t.grad(y));
        }
      });
}

// ---- scalar (no-graph) wrappers ------------------------------------------

template <typename T>
T mse_value(const Tensor<T>& a, const Tensor<T>& b) {
  Tape<T> tp;
  return tp.val(mse_loss(tp, tp.constant(a), tp.constant(b))).v[0];
}

template <typename T>
T ssl_value(const Tensor<T>& a, const Tensor<T>& b,
            const LossWeights& lw = {}) {
  Tape<T> tp;
  return tp.val(ssl_loss(tp, tp.constant(a), tp.constant(b), lw)).v[0];
}

template <typename T>
T mmd_value(const Tensor<T>& a, const Tensor<T>& b,
            const LossWeights& lw = {}) {
  Tape<T> tp;
  return tp.val(mmd_loss(tp, tp.constant(a), tp.constant(b), lw)).v[0];
}

// L = mse(t_pred, t_true) + beta1*ssl(X_pred, X_true) + beta2*mmd(...).
template <typename T>
T composite_value(const Tensor<T>& t_pred, const Tensor<T>& t_true,
                  const Tensor<T>& x_pred, const Tensor<T>& x_true,
                  const LossWeights& lw = {}) {
  return mse_value(t_pred, t_true) + T(lw.beta1) * ssl_value(x_pred, x_true, lw) +
         T(lw.beta2) * mmd_value(x_pred, x_true, lw);
}

// Similarity score used for validation reporting.
template <typename T>
T similarity_score(const Tensor<T>& a, const Tensor<T>& b,
                   const LossWeights& lw = {}) {
  return T(1) - ssl_value(a, b, lw);
}

}  // namespace bandforge::nn
