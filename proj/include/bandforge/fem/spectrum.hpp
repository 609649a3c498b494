#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <complex>
#include <numbers>
#include <vector>

#include "bandforge/fem/modal.hpp"
#include "bandforge/fem/model.hpp"

namespace bandforge::fem {

// The standard evaluation axis: 1000 bins, 10 Hz .. 10 kHz, 10 Hz step.
inline std::vector<double> standard_freqs() {
  std::vector<double> f(1000);
  for (int i = 0; i < 1000; ++i) f[i] = 10.0 * (i + 1);
  return f;
}

namespace detail {

// Effective base-excitation load: L = M_ff r_f + M_fb r_b with r the unit
// rigid translation along Y.
inline Eigen::VectorXd influence_load(const Assembled& a) {
  int nf = int(a.free_dofs.size()), nb = int(a.fixed_dofs.size());
  Eigen::VectorXd rf(nf), rb(nb);
  for (int i = 0; i < nf; ++i) rf(i) = (a.free_dofs[i] % 3 == 1) ? 1.0 : 0.0;
  for (int i = 0; i < nb; ++i) rb(i) = (a.fixed_dofs[i] % 3 == 1) ? 1.0 : 0.0;
  Eigen::VectorXd L(nf);
  for (int i = 0; i < nf; ++i) {
    double acc = 0;
    for (int j = 0; j < nf; ++j)
      acc += a.M(a.free_dofs[i], a.free_dofs[j]) * rf(j);
    for (int j = 0; j < nb; ++j)
      acc += a.M(a.free_dofs[i], a.fixed_dofs[j]) * rb(j);
    L(i) = acc;
  }
  return L;
}

// Mean Y-direction mode shape over the tip measurement nodes.
inline Eigen::VectorXd tip_projection(const Assembled& a,
                                      const ModalResult& md) {
  std::vector<int> rows;
  for (int dof : a.tip_y_dofs) {
    auto it = std::lower_bound(a.free_dofs.begin(), a.free_dofs.end(), dof);
    if (it != a.free_dofs.end() && *it == dof)
      rows.push_back(int(it - a.free_dofs.begin()));
  }
  Eigen::VectorXd tip = Eigen::VectorXd::Zero(md.Phi.cols());
  if (rows.empty()) return tip;
  for (int r : rows) tip += md.Phi.row(r).transpose();
  return tip / double(rows.size());
}

}  // namespace detail

// |mean tip Y / base Y| in dB under unit base excitation along Y, by mode
// superposition in relative coordinates:
//   T(w) = 1 + sum_i tip_i * Gamma_i * w^2 / (w_i^2 - w^2 + 2 i zeta w_i w).
inline std::vector<double> transmissibility(const Assembled& a,
                                            const ModalResult& md,
                                            const std::vector<double>& freqs,
                                            double zeta) {
  Eigen::VectorXd L = detail::influence_load(a);
  Eigen::VectorXd gamma = md.Phi.transpose() * L;
  Eigen::VectorXd tip = detail::tip_projection(a, md);
  int m = int(md.Phi.cols());

  std::vector<double> out(freqs.size());
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    double w = 2.0 * std::numbers::pi * freqs[k];
    std::complex<double> acc(1.0, 0.0);
    for (int i = 0; i < m; ++i) {
      double wi = 2.0 * std::numbers::pi * md.freqs_hz[i];
      std::complex<double> den(wi * wi - w * w, 2.0 * zeta * wi * w);
      acc += tip(i) * gamma(i) * (w * w) / den;
    }
    out[k] = 20.0 * std::log10(std::max(std::abs(acc), 1e-300));
  }
  return out;
}

// Direct dense frequency sweep oracle: solves
//   (K - w^2 M + i w C) v = w^2 L   per bin, with C the modal damping matrix
// M Phi diag(2 zeta w_i) Phi^T M, and returns |1 + mean tip v| in dB.
// Intended for verification on small models (cubic cost per bin).
inline std::vector<double> direct_transmissibility(
    const Assembled& a, const ModalResult& md,
    const std::vector<double>& freqs, double zeta) {
  int nf = int(a.free_dofs.size());
  Eigen::MatrixXd Kff(nf, nf), Mff(nf, nf);
  for (int i = 0; i < nf; ++i)
    for (int j = 0; j < nf; ++j) {
      Kff(i, j) = a.K(a.free_dofs[i], a.free_dofs[j]);
      Mff(i, j) = a.M(a.free_dofs[i], a.free_dofs[j]);
    }
  Eigen::VectorXd L = detail::influence_load(a);

  Eigen::VectorXd two_zw(md.Phi.cols());
  for (int i = 0; i < md.Phi.cols(); ++i)
    two_zw(i) = 2.0 * zeta * 2.0 * std::numbers::pi * md.freqs_hz[i];
  Eigen::MatrixXd C =
      Mff * md.Phi * two_zw.asDiagonal() * md.Phi.transpose() * Mff;

  std::vector<int> tip_rows;
  for (int dof : a.tip_y_dofs) {
    auto it = std::lower_bound(a.free_dofs.begin(), a.free_dofs.end(), dof);
    if (it != a.free_dofs.end() && *it == dof)
      tip_rows.push_back(int(it - a.free_dofs.begin()));
  }

  std::vector<double> out(freqs.size());
  Eigen::MatrixXcd A(nf, nf);
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    double w = 2.0 * std::numbers::pi * freqs[k];
    A.real() = Kff - w * w * Mff;
    A.imag() = w * C;
    Eigen::VectorXcd rhs = (w * w) * L.cast<std::complex<double>>();
    Eigen::VectorXcd v = A.partialPivLu().solve(rhs);
    std::complex<double> tip(0, 0);
    for (int r : tip_rows) tip += v(r);
    if (!tip_rows.empty()) tip /= double(tip_rows.size());
    out[k] = 20.0 * std::log10(std::max(std::abs(1.0 + tip), 1e-300));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectrum post-processing.

struct Bandgap {
  double f_lo = 0, f_hi = 0;   // Hz, first/last bin of the attenuated run
  double depth_db = 0;         // most negative level inside the gap
};

inline double gap_center(const Bandgap& g) { return 0.5 * (g.f_lo + g.f_hi); }
inline double gap_width(const Bandgap& g) { return g.f_hi - g.f_lo; }

// Contiguous runs at or below threshold_db spanning at least min_width_hz.
inline std::vector<Bandgap> detect_bandgaps(const std::vector<double>& freqs,
                                            const std::vector<double>& t_db,
                                            double threshold_db = -20.0,
                                            double min_width_hz = 50.0) {
  if (freqs.size() != t_db.size())
    throw ValidationError("detect_bandgaps: size mismatch");
  std::vector<Bandgap> gaps;
  std::size_t i = 0;
  while (i < t_db.size()) {
    if (t_db[i] > threshold_db) {
      ++i;
      continue;
    }
    std::size_t j = i;
    double depth = t_db[i];
    while (j + 1 < t_db.size() && t_db[j + 1] <= threshold_db) {
      ++j;
      depth = std::min(depth, t_db[j]);
    }
    Bandgap g{freqs[i], freqs[j], depth};
    if (gap_width(g) >= min_width_hz) gaps.push_back(g);
    i = j + 1;
  }
  return gaps;
}

// Relative bandgap width: width over centre frequency.
inline double bg_ratio(const Bandgap& g) {
  double c = gap_center(g);
  if (!(c > 0)) throw ValidationError("bg_ratio: non-positive centre");
  return gap_width(g) / c;
}

// Half-power (-3 dB) bandwidth damping estimate around the highest peak:
// zeta = (f2 - f1) / (2 f_peak), crossings linearly interpolated.
inline double half_power_damping(const std::vector<double>& freqs,
                                 const std::vector<double>& t_db) {
  if (freqs.size() != t_db.size() || freqs.size() < 3)
    throw ValidationError("half_power_damping: bad spectrum");
  std::size_t p = 0;
  for (std::size_t i = 1; i < t_db.size(); ++i)
    if (t_db[i] > t_db[p]) p = i;
  double target = t_db[p] - 20.0 * std::log10(std::sqrt(2.0));

  auto cross = [&](bool up) -> double {
    if (up) {
      for (std::size_t i = p; i-- > 0;)
        if (t_db[i] <= target) {
          double t = (target - t_db[i]) / (t_db[i + 1] - t_db[i]);
          return freqs[i] + t * (freqs[i + 1] - freqs[i]);
        }
    } else {
      for (std::size_t i = p + 1; i < t_db.size(); ++i)
        if (t_db[i] <= target) {
          double t = (t_db[i - 1] - target) / (t_db[i - 1] - t_db[i]);
          return freqs[i - 1] + t * (freqs[i] - freqs[i - 1]);
        }
    }
    throw NumericError("half_power_damping: half-power point out of range");
  };
  double f1 = cross(true), f2 = cross(false);
  return (f2 - f1) / (2.0 * freqs[p]);
}

// ---------------------------------------------------------------------------
// Static uniaxial stiffness: grips the bottom band of nodes, displaces the
// top band by -delta along Y, and returns reaction force / delta (N/m).

inline double static_axial_stiffness(const geom::BeamGraph& g,
                                     const Material& mat, double delta_m,
                                     const AssemblyOptions& opt = {},
                                     double band_frac = 0.03) {
  if (!(delta_m > 0))
    throw ValidationError("static_axial_stiffness: delta must be positive");
  double y_min = 1e300, y_max = -1e300;
  for (auto n : g.nodes) {
    y_min = std::min(y_min, n.y);
    y_max = std::max(y_max, n.y);
  }
  double band = band_frac * (y_max - y_min) + geom::kNodeTol;

  geom::BeamGraph gg = g;
  gg.clamped_nodes.clear();  // constraints handled locally
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    if (g.nodes[i].y <= y_min + band) gg.clamped_nodes.push_back(int(i));
  Assembled a = assemble(gg, mat, opt);

  std::vector<char> kind(3 * a.n_nodes, 0);  // 0 free, 1 fixed, 2 prescribed
  for (int dof : a.fixed_dofs) kind[dof] = 1;
  std::vector<int> top;
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    if (g.nodes[i].y >= y_max - band) top.push_back(int(i));
  if (top.empty()) throw ValidationError("static: no grip nodes at the top");
  for (int node : top)
    for (int d = 0; d < 3; ++d)
      if (kind[3 * node + d] == 0) kind[3 * node + d] = 2;

  std::vector<int> free_idx, pres_idx;
  for (int i = 0; i < 3 * a.n_nodes; ++i) {
    if (kind[i] == 0) free_idx.push_back(i);
    if (kind[i] == 2) pres_idx.push_back(i);
  }
  Eigen::VectorXd up = Eigen::VectorXd::Zero(int(pres_idx.size()));
  for (std::size_t i = 0; i < pres_idx.size(); ++i)
    if (pres_idx[i] % 3 == 1) up(int(i)) = -delta_m;

  int nf = int(free_idx.size()), np = int(pres_idx.size());
  Eigen::SparseMatrix<double> Kff(nf, nf);
  Eigen::MatrixXd Kfp(nf, np);
  {
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < nf; ++i)
      for (int j = 0; j < nf; ++j) {
        double v = a.K(free_idx[i], free_idx[j]);
        if (v != 0) trip.emplace_back(i, j, v);
      }
    Kff.setFromTriplets(trip.begin(), trip.end());
    for (int i = 0; i < nf; ++i)
      for (int j = 0; j < np; ++j) Kfp(i, j) = a.K(free_idx[i], pres_idx[j]);
  }
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Kff);
  if (ldlt.info() != Eigen::Success)
    throw NumericError("static: stiffness factorization failed");
  Eigen::VectorXd uf = ldlt.solve(-Kfp * up);

  // Reaction along Y summed over the displaced grip.
  double F = 0;
  for (std::size_t i = 0; i < pres_idx.size(); ++i) {
    if (pres_idx[i] % 3 != 1) continue;
    int row = pres_idx[i];
    double r = 0;
    for (int j = 0; j < nf; ++j) r += a.K(row, free_idx[j]) * uf(j);
    for (int j = 0; j < np; ++j) r += a.K(row, pres_idx[j]) * up(j);
    F += r;
  }
  return std::abs(F) / delta_m;
}

}  // namespace bandforge::fem
