#pragma once
// Normalization between physical units and network units: spectra map
// affinely from dB to [-1,1] using corpus-wide min/max (stored in the dataset
// manifest and in checkpoints); material properties map to order-1 features.

#include <vector>

#include "bandforge/fem/material.hpp"
#include "bandforge/nn/tensor.hpp"

namespace bandforge::models {

struct NormStats {
  double spec_db_min = 0;
  double spec_db_max = 0;
};

inline void validate(const NormStats& n) {
  if (!(n.spec_db_max > n.spec_db_min))
    throw ConfigError("normalization stats: max must exceed min");
}

template <typename T>
nn::Tensor<T> normalize_spectrum(const std::vector<double>& db,
                                 const NormStats& n) {
  validate(n);
  nn::Tensor<T> out({int(db.size())});
  double span = n.spec_db_max - n.spec_db_min;
  for (std::size_t i = 0; i < db.size(); ++i)
    out.v[i] = T(2.0 * (db[i] - n.spec_db_min) / span - 1.0);
  return out;
}

template <typename T>
std::vector<double> denormalize_spectrum(const nn::Tensor<T>& t,
                                         const NormStats& n) {
  validate(n);
  std::vector<double> db(t.numel());
  double span = n.spec_db_max - n.spec_db_min;
  for (std::size_t i = 0; i < db.size(); ++i)
    db[i] = (double(t.v[i]) + 1.0) * 0.5 * span + n.spec_db_min;
  return db;
}

// [1,4] feature row: (E/1e9, rho/1e3, nu, 1e3*d).
template <typename T>
nn::Tensor<T> material_tensor(const fem::Material& m) {
  auto f = fem::normalized_material(m);
  nn::Tensor<T> out({1, 4});
  for (int i = 0; i < 4; ++i) out.v[std::size_t(i)] = T(f[std::size_t(i)]);
  return out;
}

}  // namespace bandforge::models
