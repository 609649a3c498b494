#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "bandforge/geom/graph.hpp"

namespace bandforge::geom {

enum class CellFamily {
  honeycomb,
  star,
  circle,          // 12-gon ring approximating a circular cell
  auxetic,         // re-entrant (pinched-waist) hexagon
  hierarchical_honeycomb,
};

inline const char* to_string(CellFamily f) {
  switch (f) {
    case CellFamily::honeycomb: return "honeycomb";
    case CellFamily::star: return "star";
    case CellFamily::circle: return "circle";
    case CellFamily::auxetic: return "auxetic";
    case CellFamily::hierarchical_honeycomb: return "hierarchical_honeycomb";
  }
  return "?";
}

inline CellFamily cell_family_from_string(const std::string& s) {
  if (s == "honeycomb") return CellFamily::honeycomb;
  if (s == "star") return CellFamily::star;
  if (s == "circle") return CellFamily::circle;
  if (s == "auxetic") return CellFamily::auxetic;
  if (s == "hierarchical_honeycomb") return CellFamily::hierarchical_honeycomb;
  throw ConfigError("unknown cell family: " + s);
}

namespace detail {

inline BeamGraph polygon_cell(const std::vector<Vec2>& verts) {
  GraphBuilder b;
  std::vector<int> ids;
  ids.reserve(verts.size());
  for (auto v : verts) ids.push_back(b.add_node(v));
  for (std::size_t i = 0; i < ids.size(); ++i)
    b.add_edge(ids[i], ids[(i + 1) % ids.size()]);
  return b.take();
}

// Flat-top hexagon: vertices at multiples of 60 deg, top/bottom edges
// horizontal, width 2*side, height sqrt(3)*side.
inline std::vector<Vec2> hexagon_verts(double side) {
  std::vector<Vec2> v;
  for (int k = 0; k < 6; ++k) {
    double a = std::numbers::pi / 3.0 * k;
    v.push_back({side * std::cos(a), side * std::sin(a)});
  }
  return v;
}

// One refinement level: every vertex becomes a hexagon of the given side;
// every existing strut is trimmed to the aligned hexagon vertices. All strut
// directions in this construction are multiples of 60 deg, so each trimmed
// end lands exactly on a hexagon vertex.
inline BeamGraph refine_vertices(const BeamGraph& g, double hex_side) {
  GraphBuilder b;
  std::vector<std::vector<int>> ring(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    auto verts = hexagon_verts(hex_side);
    std::vector<int> ids;
    for (auto v : verts) ids.push_back(b.add_node(g.nodes[i] + v));
    for (int k = 0; k < 6; ++k) b.add_edge(ids[k], ids[(k + 1) % 6]);
    ring[i] = std::move(ids);
  }
  auto attach = [&](int owner, Vec2 toward) {
    const BeamGraph& cur = b.peek();
    Vec2 origin = g.nodes[owner];
    int best = ring[owner][0];
    double best_dot = -1e300;
    for (int id : ring[owner]) {
      double d = dot(cur.nodes[id] - origin, toward);
      if (d > best_dot) {
        best_dot = d;
        best = id;
      }
    }
    return best;
  };
  for (const auto& e : g.edges) {
    Vec2 dir = g.nodes[e.b] - g.nodes[e.a];
    b.add_edge(attach(e.a, dir), attach(e.b, {-dir.x, -dir.y}), e.width_mm);
  }
  return b.take();
}

}  // namespace detail

// Builds a single unit cell centred at the origin. fractal_order applies to
// hierarchical_honeycomb only (order 0 = plain hexagon); each level replaces
// all vertices with hexagons of 1/3 the previous side.
inline BeamGraph build_unit_cell(CellFamily family, double side_mm,
                                 int fractal_order = 0) {
  if (!(side_mm > 0))
    throw ValidationError("build_unit_cell: side_mm must be positive");
  if (fractal_order < 0)
    throw ValidationError("build_unit_cell: fractal_order must be >= 0");
  if (fractal_order > 0 && family != CellFamily::hierarchical_honeycomb)
    throw ValidationError(
        "build_unit_cell: fractal_order > 0 requires hierarchical_honeycomb");

  switch (family) {
    case CellFamily::honeycomb:
      return detail::polygon_cell(detail::hexagon_verts(side_mm));
    case CellFamily::star: {
      // 6-point star: alternating outer/inner radius, point up.
      std::vector<Vec2> v;
      for (int k = 0; k < 12; ++k) {
        double r = (k % 2 == 0) ? side_mm : 0.5 * side_mm;
        double a = std::numbers::pi / 2.0 + std::numbers::pi / 6.0 * k;
        v.push_back({r * std::cos(a), r * std::sin(a)});
      }
      return detail::polygon_cell(v);
    }
    case CellFamily::circle: {
      // Regular 12-gon, flat top.
      std::vector<Vec2> v;
      for (int k = 0; k < 12; ++k) {
        double a = std::numbers::pi / 12.0 + std::numbers::pi / 6.0 * k;
        v.push_back({side_mm * std::cos(a), side_mm * std::sin(a)});
      }
      return detail::polygon_cell(v);
    }
    case CellFamily::auxetic: {
      // Re-entrant hexagon: waist pinched inward for negative Poisson ratio.
      double a = 0.62 * side_mm, h = 0.80 * side_mm, w = 0.45 * a;
      return detail::polygon_cell(
          {{-a, -h}, {a, -h}, {w, 0}, {a, h}, {-a, h}, {-w, 0}});
    }
    case CellFamily::hierarchical_honeycomb: {
      BeamGraph g = detail::polygon_cell(detail::hexagon_verts(side_mm));
      double side = side_mm;
      for (int k = 0; k < fractal_order; ++k) {
        side /= 3.0;
        g = detail::refine_vertices(g, side);
      }
      return g;
    }
  }
  throw ValidationError("build_unit_cell: unknown family");
}

// Minimum distance from the origin to any strut: the inscribed radius of the
// free interior region of a cell.
inline double cell_apothem(const BeamGraph& g) {
  double best = 1e300;
  for (const auto& e : g.edges) {
    Vec2 a = g.nodes[e.a], b = g.nodes[e.b], d = b - a;
    double len2 = dot(d, d);
    double t = len2 > 0 ? std::clamp(-dot(a, d) / len2, 0.0, 1.0) : 0.0;
    best = std::min(best, norm(a + t * d));
  }
  return best;
}

inline double cell_circumradius(const BeamGraph& g) {
  double r = 0;
  for (auto n : g.nodes) r = std::max(r, norm(n));
  return r;
}

namespace detail {

// Splits the extreme (topmost or bottommost) edge of a cell at its midpoint
// and returns the midpoint node index. Ties broken toward the centreline.
inline int split_extreme_edge(BeamGraph& g, bool top) {
  if (g.edges.empty()) throw ValidationError("interlace: cell has no edges");
  int best = 0;
  auto better = [&](int i, int j) {  // is edge i more extreme than edge j?
    Vec2 mi = 0.5 * (g.nodes[g.edges[i].a] + g.nodes[g.edges[i].b]);
    Vec2 mj = 0.5 * (g.nodes[g.edges[j].a] + g.nodes[g.edges[j].b]);
    double yi = top ? mi.y : -mi.y, yj = top ? mj.y : -mj.y;
    if (std::abs(yi - yj) > kNodeTol) return yi > yj;
    if (std::abs(std::abs(mi.x) - std::abs(mj.x)) > kNodeTol)
      return std::abs(mi.x) < std::abs(mj.x);
    return mi.x < mj.x;
  };
  for (int i = 1; i < int(g.edges.size()); ++i)
    if (better(i, best)) best = i;
  Edge e = g.edges[best];
  g.edges.erase(g.edges.begin() + best);
  Vec2 mid = 0.5 * (g.nodes[e.a] + g.nodes[e.b]);
  GraphBuilder nb;
  auto remap = nb.merge(g);
  int m = nb.add_node(mid);
  nb.add_edge(remap[e.a], m, e.width_mm);
  nb.add_edge(m, remap[e.b], e.width_mm);
  g = nb.take();
  return m;
}

}  // namespace detail

// Nests inner_cell inside outer_cell, scaled so its circumradius equals
// fit * (outer inscribed radius), and ties the two with vertical connector
// struts at the top and bottom edge midpoints. Each connector splits one
// outer and one inner edge, adding exactly two new nodes. An empty inner
// cell returns the outer cell unchanged.
inline BeamGraph interlace(const BeamGraph& outer_cell,
                           const BeamGraph& inner_cell, double fit = 0.60,
                           std::vector<int>* inner_ids_out = nullptr) {
  if (inner_cell.nodes.empty()) return outer_cell;
  if (!(fit > 0) || !(fit < 1))
    throw ValidationError("interlace: fit must be in (0, 1)");

  double apothem = cell_apothem(outer_cell);
  double rin = cell_circumradius(inner_cell);
  if (!(apothem > 0) || !(rin > 0))
    throw ValidationError("interlace: degenerate cell");
  BeamGraph inner = scale_graph(inner_cell, fit * apothem / rin);
  BeamGraph outer = outer_cell;

  int o_top = detail::split_extreme_edge(outer, true);
  int o_bot = detail::split_extreme_edge(outer, false);
  int i_top = detail::split_extreme_edge(inner, true);
  int i_bot = detail::split_extreme_edge(inner, false);

  GraphBuilder b;
  auto omap = b.merge(outer);
  auto imap = b.merge(inner);
  b.add_edge(omap[o_top], imap[i_top]);
  b.add_edge(omap[o_bot], imap[i_bot]);
  if (inner_ids_out) *inner_ids_out = imap;
  return b.take();
}

}  // namespace bandforge::geom
