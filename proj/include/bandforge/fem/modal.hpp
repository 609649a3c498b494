#pragma once

#include <lapacke.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <vector>

#include "bandforge/fem/model.hpp"

namespace bandforge::fem {

struct ModalResult {
  std::vector<double> freqs_hz;  // ascending
  Eigen::MatrixXd Phi;           // n_free x n_modes, mass-normalized
};

// Generalized symmetric-definite eigensolve K phi = lambda M phi on the free
// DOFs (dense LAPACK; eigenvectors come back M-orthonormal). Modes are
// retained up to cap_factor * f_max_hz. With a cap, dsygvx computes only the
// modes in range; f_max_hz <= 0 computes the full spectrum via dsygvd.
inline ModalResult modal(const Assembled& a, double f_max_hz = 0,
                         double cap_factor = 1.2) {
  int nf = int(a.free_dofs.size());
  ModalResult out;
  if (nf == 0) return out;  // fully clamped: no modes

  Eigen::MatrixXd Kff(nf, nf), Mff(nf, nf);
  for (int i = 0; i < nf; ++i)
    for (int j = 0; j < nf; ++j) {
      Kff(i, j) = a.K(a.free_dofs[i], a.free_dofs[j]);
      Mff(i, j) = a.M(a.free_dofs[i], a.free_dofs[j]);
    }

  std::vector<double> w(nf);
  int m = 0;
  if (f_max_hz > 0) {
    double cap = cap_factor * f_max_hz;
    double vu = std::pow(2.0 * std::numbers::pi * cap, 2);
    Eigen::MatrixXd Z(nf, nf);
    std::vector<lapack_int> ifail(nf);
    lapack_int found = 0;
    lapack_int info = LAPACKE_dsygvx(
        LAPACK_COL_MAJOR, 1, 'V', 'V', 'L', nf, Kff.data(), nf, Mff.data(),
        nf, -1.0, vu, 0, 0, 0.0, &found, w.data(), Z.data(), nf,
        ifail.data());
    if (info != 0)
      throw NumericError("modal: dsygvx failed (info=" + std::to_string(info) +
                         ")");
    m = int(found);
    out.Phi = Z.leftCols(m);
  } else {
    lapack_int info = LAPACKE_dsygvd(LAPACK_COL_MAJOR, 1, 'V', 'L', nf,
                                     Kff.data(), nf, Mff.data(), nf, w.data());
    if (info != 0)
      throw NumericError("modal: dsygvd failed (info=" + std::to_string(info) +
                         "); mass matrix not positive definite?");
    m = nf;
    out.Phi = Kff;  // dsygvd overwrote Kff with eigenvectors
  }

  if (m > 0 && w[0] < -1e-8 * std::max(std::abs(w[m - 1]), 1.0))
    throw NumericError("modal: negative eigenvalue (indefinite stiffness)");
  out.freqs_hz.resize(m);
  for (int i = 0; i < m; ++i)
    out.freqs_hz[i] = std::sqrt(std::max(w[i], 0.0)) / (2.0 * std::numbers::pi);
  return out;
}

}  // namespace bandforge::fem
