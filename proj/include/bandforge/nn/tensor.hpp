#pragma once
// Dense row-major tensor of float or double plus a thin GEMM wrapper.

#include <cblas.h>

#include <cstddef>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "bandforge/common.hpp"

namespace bandforge::nn {

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(numel_of(shape), T(0));
  }
  Tensor(std::vector<int> s, T fill) : shape(std::move(s)) {
    v.assign(numel_of(shape), fill);
  }
  Tensor(std::vector<int> s, std::vector<T> data)
      : shape(std::move(s)), v(std::move(data)) {
    if (v.size() != numel_of(shape))
      throw ValidationError("tensor: data size does not match shape");
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d < 0) throw ValidationError("tensor: negative dimension");
      n *= std::size_t(d);
    }
    return n;
  }

  std::size_t numel() const { return v.size(); }
  int dim(int i) const { return shape[std::size_t(i)]; }
  int rank() const { return int(shape.size()); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  static Tensor scalar(T x) { return Tensor({1}, std::vector<T>{x}); }

  // Uniform(-a, a) fill, used for weight init.
  void fill_uniform(std::mt19937_64& rng, T a) {
    std::uniform_real_distribution<double> d(-double(a), double(a));
    for (auto& x : v) x = T(d(rng));
  }
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string r = "(";
  for (std::size_t i = 0; i < s.size(); ++i)
    r += (i ? "," : "") + std::to_string(s[i]);
  return r + ")";
}

// C(m x n) = alpha * op(A) op(B) + beta * C, row-major.
inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha,
                 const float* A, int lda, const float* B, int ldb, float beta,
                 float* C, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, A, lda, B, ldb,
              beta, C, ldc);
}
inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha,
                 const double* A, int lda, const double* B, int ldb,
                 double beta, double* C, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, A, lda, B, ldb,
              beta, C, ldc);
}

// Convenience: C(m x n) += or = op(A)(m x k) * op(B)(k x n) with natural
// leading dimensions (contiguous row-major operands).
template <typename T>
void matmul_nn(int m, int n, int k, const T* A, const T* B, T* C,
               bool accumulate = false) {
  gemm(false, false, m, n, k, T(1), A, k, B, n, accumulate ? T(1) : T(0), C,
       n);
}
template <typename T>
void matmul_nt(int m, int n, int k, const T* A, const T* B, T* C,
               bool accumulate = false) {
  gemm(false, true, m, n, k, T(1), A, k, B, k, accumulate ? T(1) : T(0), C, n);
}
template <typename T>
void matmul_tn(int m, int n, int k, const T* A, const T* B, T* C,
               bool accumulate = false) {
  gemm(true, false, m, n, k, T(1), A, m, B, n, accumulate ? T(1) : T(0), C, n);
}

}  // namespace bandforge::nn
