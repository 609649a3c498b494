#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "bandforge/fem/material.hpp"
#include "bandforge/geom/graph.hpp"

namespace bandforge::fem {

// Planar frame discretization: 3 DOF per node (u, v, theta). Geometry comes
// in millimetres and is converted to SI here.

struct AssemblyOptions {
  int elements_per_strut = 1;
  double default_width_mm = 1.2;  // for edges with no width assigned
};

struct Assembled {
  Eigen::MatrixXd K, M;        // full system, 3 * n_nodes, exactly symmetric
  std::vector<int> fixed_dofs;   // prescribed/clamped DOF indices (sorted)
  std::vector<int> free_dofs;    // complement (sorted)
  std::vector<int> tip_y_dofs;   // response measurement DOFs
  std::vector<int> base_y_dofs;  // excitation measurement DOFs
  int n_nodes = 0;
};

namespace detail {

// Local stiffness/mass of one Euler-Bernoulli frame element, rotated to
// global axes. Upper triangle is mirrored so the result is bitwise symmetric.
inline void frame_element(double xa, double ya, double xb, double yb, double E,
                          double rho, double A, double I,
                          Eigen::Matrix<double, 6, 6>& k,
                          Eigen::Matrix<double, 6, 6>& m) {
  double dx = xb - xa, dy = yb - ya;
  double L = std::hypot(dx, dy);
  if (!(L > 0)) throw ValidationError("fem: zero-length element");
  double c = dx / L, s = dy / L;

  double ea = E * A / L;
  double b1 = 12.0 * E * I / (L * L * L);
  double b2 = 6.0 * E * I / (L * L);
  double b3 = 4.0 * E * I / L;
  double b4 = 2.0 * E * I / L;
  Eigen::Matrix<double, 6, 6> kl;
  kl << ea, 0, 0, -ea, 0, 0,
        0, b1, b2, 0, -b1, b2,
        0, b2, b3, 0, -b2, b4,
        -ea, 0, 0, ea, 0, 0,
        0, -b1, -b2, 0, b1, -b2,
        0, b2, b4, 0, -b2, b3;

  double mr = rho * A * L;
  double ma = mr / 6.0, mb = mr / 420.0;
  Eigen::Matrix<double, 6, 6> ml;
  ml << 2 * ma, 0, 0, ma, 0, 0,
        0, 156 * mb, 22 * L * mb, 0, 54 * mb, -13 * L * mb,
        0, 22 * L * mb, 4 * L * L * mb, 0, 13 * L * mb, -3 * L * L * mb,
        ma, 0, 0, 2 * ma, 0, 0,
        0, 54 * mb, 13 * L * mb, 0, 156 * mb, -22 * L * mb,
        0, -13 * L * mb, -3 * L * L * mb, 0, -22 * L * mb, 4 * L * L * mb;

  Eigen::Matrix<double, 6, 6> T = Eigen::Matrix<double, 6, 6>::Zero();
  T(0, 0) = c; T(0, 1) = s;
  T(1, 0) = -s; T(1, 1) = c;
  T(2, 2) = 1;
  T(3, 3) = c; T(3, 4) = s;
  T(4, 3) = -s; T(4, 4) = c;
  T(5, 5) = 1;

  k = T.transpose() * kl * T;
  m = T.transpose() * ml * T;
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) {
      k(j, i) = k(i, j);
      m(j, i) = m(i, j);
    }
}

}  // namespace detail

inline Assembled assemble(const geom::BeamGraph& g, const Material& mat,
                          const AssemblyOptions& opt = {}) {
  validate_material(mat);
  if (g.nodes.empty() || g.edges.empty())
    throw ValidationError("fem: empty graph");
  if (opt.elements_per_strut < 1)
    throw ValidationError("fem: elements_per_strut must be >= 1");

  // Subdivision nodes are appended after the graph nodes.
  std::vector<geom::Vec2> coords = g.nodes;
  struct El { int a, b; double w; };
  std::vector<El> els;
  for (const auto& e : g.edges) {
    double w = e.width_mm > 0 ? e.width_mm : opt.default_width_mm;
    if (!(w > 0)) throw ValidationError("fem: non-positive strut width");
    int prev = e.a;
    for (int k = 1; k < opt.elements_per_strut; ++k) {
      double t = double(k) / opt.elements_per_strut;
      coords.push_back(g.nodes[e.a] + t * (g.nodes[e.b] - g.nodes[e.a]));
      int mid = int(coords.size()) - 1;
      els.push_back({prev, mid, w});
      prev = mid;
    }
    els.push_back({prev, e.b, w});
  }

  int n = int(coords.size());
  Assembled out;
  out.n_nodes = n;
  out.K = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  out.M = Eigen::MatrixXd::Zero(3 * n, 3 * n);

  const double mm = 1e-3;
  const double th_m = g.thickness_mm * mm;
  if (!(th_m > 0)) throw ValidationError("fem: non-positive thickness");
  for (const auto& el : els) {
    double w_m = el.w * mm;
    double A = w_m * th_m;
    double I = th_m * w_m * w_m * w_m / 12.0;
    Eigen::Matrix<double, 6, 6> k, m;
    detail::frame_element(coords[el.a].x * mm, coords[el.a].y * mm,
                          coords[el.b].x * mm, coords[el.b].y * mm, mat.E,
                          mat.rho, A, I, k, m);
    int dofs[6] = {3 * el.a, 3 * el.a + 1, 3 * el.a + 2,
                   3 * el.b, 3 * el.b + 1, 3 * el.b + 2};
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        out.K(dofs[i], dofs[j]) += k(i, j);
        out.M(dofs[i], dofs[j]) += m(i, j);
      }
  }
  for (const auto& [node, mass] : g.lumped_masses_kg) {
    out.M(3 * node, 3 * node) += mass;
    out.M(3 * node + 1, 3 * node + 1) += mass;
  }

  std::vector<char> fixed(3 * n, 0);
  for (int node : g.clamped_nodes)
    for (int d = 0; d < 3; ++d) fixed[3 * node + d] = 1;
  for (int i = 0; i < 3 * n; ++i)
    (fixed[i] ? out.fixed_dofs : out.free_dofs).push_back(i);
  for (int node : g.tip_nodes) out.tip_y_dofs.push_back(3 * node + 1);
  for (int node : g.base_nodes) out.base_y_dofs.push_back(3 * node + 1);
  if (out.fixed_dofs.empty())
    throw ValidationError("fem: no clamped nodes (free-floating structure)");
  return out;
}

}  // namespace bandforge::fem
