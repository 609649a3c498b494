#pragma once
// Named parameter store, NAdam update rule, and the cosine learning-rate
// schedule. Parameters keep their gradient accumulator and moment buffers
// alongside the values; tapes reference them through param() leaves.

#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "bandforge/nn/tensor.hpp"

namespace bandforge::nn {

template <typename T>
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor<T> w, g, m, v;
  };
  std::vector<Entry> entries;          // deterministic registration order
  std::map<std::string, int> index;

  Tensor<T>& add(const std::string& name, Tensor<T> init) {
    if (index.count(name))
      throw ValidationError("param store: duplicate name " + name);
    index[name] = int(entries.size());
    Entry e;
    e.name = name;
    e.g = Tensor<T>(init.shape);
    e.m = Tensor<T>(init.shape);
    e.v = Tensor<T>(init.shape);
    e.w = std::move(init);
    entries.push_back(std::move(e));
    return entries.back().w;
  }

  Entry& at(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end())
      throw ValidationError("param store: unknown name " + name);
    return entries[std::size_t(it->second)];
  }
  const Entry& at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end())
      throw ValidationError("param store: unknown name " + name);
    return entries[std::size_t(it->second)];
  }

  void zero_grad() {
    for (auto& e : entries) std::fill(e.g.v.begin(), e.g.v.end(), T(0));
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (auto& e : entries) n += e.w.numel();
    return n;
  }
};

// NAdam: Adam moments with a Nesterov-style lookahead on the first moment.
template <typename T>
struct NAdam {
  T beta1 = T(0.9), beta2 = T(0.999), eps = T(1e-8);
  long step_count = 0;

  // grad_scale divides accumulated gradients (e.g. 1/batch) before use.
  void step(ParamStore<T>& ps, T lr, T grad_scale = T(1)) {
    ++step_count;
    double t = double(step_count);
    T bc1 = T(1) - T(std::pow(double(beta1), t));
    T bc1n = T(1) - T(std::pow(double(beta1), t + 1));
    T bc2 = T(1) - T(std::pow(double(beta2), t));
    for (auto& e : ps.entries) {
      for (std::size_t i = 0; i < e.w.numel(); ++i) {
        T g = e.g.v[i] * grad_scale;
        e.m.v[i] = beta1 * e.m.v[i] + (T(1) - beta1) * g;
        e.v.v[i] = beta2 * e.v.v[i] + (T(1) - beta2) * g * g;
        T mhat = beta1 * e.m.v[i] / bc1n + (T(1) - beta1) * g / bc1;
        T vhat = e.v.v[i] / bc2;
        e.w.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

// lr(0) = lr0, lr(T) = lr_min, half-cosine in between.
inline double cosine_lr(double t, double total, double lr0, double lr_min) {
  if (total <= 0) return lr0;
  double x = std::clamp(t / total, 0.0, 1.0);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * x));
}

}  // namespace bandforge::nn
