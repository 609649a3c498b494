#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bandforge/common.hpp"

namespace bandforge::geom {

struct Vec2 {
  double x = 0, y = 0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// Geometric coincidence tolerance for node merging, in mm.
inline constexpr double kNodeTol = 1e-6;

struct Edge {
  int a = -1, b = -1;
  double width_mm = 0;  // 0 = default strut width, assigned at panel assembly
};

// Bookkeeping for one tessellated cell (used by insert placement and
// rasterization of solid inserts).
struct CellRef {
  int row = 0, col = 0;
  Vec2 center;
  std::vector<int> inner_nodes;  // nodes of the innermost interlaced cell
  bool has_inner = false;
  bool has_insert = false;
};

struct BeamGraph {
  std::vector<Vec2> nodes;
  std::vector<Edge> edges;
  std::vector<std::pair<int, double>> lumped_masses_kg;
  std::vector<int> clamped_nodes;  // fully fixed DOFs
  std::vector<int> base_nodes;     // excitation input measurement set
  std::vector<int> tip_nodes;      // response output measurement set
  std::vector<CellRef> cells;
  // Solid areas (frame tabs, inserts) rendered as filled polygons.
  std::vector<std::vector<Vec2>> filled_regions;
  // Out-of-plane panel thickness, uniform across all struts.
  double thickness_mm = 5.0;
};

// Incremental graph builder with tolerance-based node dedup (spatial hash,
// 3x3 neighbourhood probe) and undirected edge dedup.
class GraphBuilder {
 public:
  explicit GraphBuilder(double tol = kNodeTol) : tol_(tol), cell_(8 * tol) {}

  int add_node(Vec2 p) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw ValidationError("graph: non-finite node coordinate");
    long ix = qx(p.x), iy = qy(p.y);
    for (long dx = -1; dx <= 1; ++dx)
      for (long dy = -1; dy <= 1; ++dy) {
        auto it = grid_.find(key(ix + dx, iy + dy));
        if (it == grid_.end()) continue;
        for (int idx : it->second)
          if (norm(g_.nodes[idx] - p) <= tol_) return idx;
      }
    g_.nodes.push_back(p);
    int idx = int(g_.nodes.size()) - 1;
    grid_[key(ix, iy)].push_back(idx);
    return idx;
  }

  void add_edge(int a, int b, double width_mm = 0) {
    if (a == b) return;  // degenerate after merging: drop
    auto k = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    auto [it, fresh] = edge_set_.emplace(pack(k.first, k.second),
                                         int(g_.edges.size()));
    if (!fresh) return;
    g_.edges.push_back({k.first, k.second, width_mm});
  }

  void add_edge(Vec2 a, Vec2 b, double width_mm = 0) {
    add_edge(add_node(a), add_node(b), width_mm);
  }

  // Appends another graph; returns the node index remapping.
  std::vector<int> merge(const BeamGraph& other, Vec2 shift = {0, 0}) {
    std::vector<int> remap(other.nodes.size());
    for (std::size_t i = 0; i < other.nodes.size(); ++i)
      remap[i] = add_node(other.nodes[i] + shift);
    for (const auto& e : other.edges)
      add_edge(remap[e.a], remap[e.b], e.width_mm);
    for (const auto& [n, m] : other.lumped_masses_kg)
      g_.lumped_masses_kg.emplace_back(remap[n], m);
    return remap;
  }

  BeamGraph take() { return std::move(g_); }
  const BeamGraph& peek() const { return g_; }

 private:
  static std::uint64_t pack(int a, int b) {
    return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b);
  }
  long qx(double x) const { return long(std::floor(x / cell_)); }
  long qy(double y) const { return long(std::floor(y / cell_)); }
  static std::uint64_t key(long ix, long iy) {
    return splitmix64(std::uint64_t(ix) * 0x9e3779b97f4a7c15ULL ^
                      std::uint64_t(iy));
  }

  double tol_, cell_;
  BeamGraph g_;
  std::unordered_map<std::uint64_t, std::vector<int>> grid_;
  std::unordered_map<std::uint64_t, int> edge_set_;
};

inline BeamGraph translate_graph(BeamGraph g, Vec2 d) {
  for (auto& n : g.nodes) n = n + d;
  for (auto& c : g.cells) c.center = c.center + d;
  for (auto& poly : g.filled_regions)
    for (auto& p : poly) p = p + d;
  return g;
}

// Uniform geometric scaling about the origin. Strut widths, thickness and
// lumped masses are left untouched: scale acts on the skeleton only.
inline BeamGraph scale_graph(BeamGraph g, double s) {
  if (!(s > 0)) throw ValidationError("scale_graph: scale must be positive");
  for (auto& n : g.nodes) n = s * n;
  for (auto& c : g.cells) c.center = s * c.center;
  for (auto& poly : g.filled_regions)
    for (auto& p : poly) p = s * p;
  return g;
}

inline BeamGraph mirror_x(BeamGraph g) {
  for (auto& n : g.nodes) n.x = -n.x;
  for (auto& c : g.cells) c.center.x = -c.center.x;
  for (auto& poly : g.filled_regions)
    for (auto& p : poly) p.x = -p.x;
  return g;
}

inline bool graph_connected(const BeamGraph& g) {
  if (g.nodes.empty()) return false;
  std::vector<int> parent(g.nodes.size());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = int(i);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : g.edges) {
    int ra = find(e.a), rb = find(e.b);
    if (ra != rb) parent[ra] = rb;
  }
  int root = find(0);
  for (std::size_t i = 1; i < g.nodes.size(); ++i)
    if (find(int(i)) != root) return false;
  return true;
}

// Andrew monotone chain; returns hull vertex indices in CCW order.
inline std::vector<int> convex_hull(const std::vector<Vec2>& pts,
                                    const std::vector<int>& subset) {
  std::vector<int> idx = subset;
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (pts[a].x != pts[b].x) return pts[a].x < pts[b].x;
    return pts[a].y < pts[b].y;
  });
  idx.erase(std::unique(idx.begin(), idx.end(),
                        [&](int a, int b) {
                          return norm(pts[a] - pts[b]) <= kNodeTol;
                        }),
            idx.end());
  if (idx.size() < 3) return idx;
  std::vector<int> hull(2 * idx.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {  // lower
    while (k >= 2 && cross(pts[hull[k - 1]] - pts[hull[k - 2]],
                           pts[idx[i]] - pts[hull[k - 2]]) <= 0)
      --k;
    hull[k++] = idx[i];
  }
  for (std::size_t i = idx.size() - 1, t = k + 1; i-- > 0;) {  // upper
    while (k >= t && cross(pts[hull[k - 1]] - pts[hull[k - 2]],
                           pts[idx[i]] - pts[hull[k - 2]]) <= 0)
      --k;
    hull[k++] = idx[i];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace bandforge::geom
