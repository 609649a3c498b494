#pragma once

#include <vector>

#include "bandforge/geom/cells.hpp"
#include "bandforge/geom/graph.hpp"

namespace bandforge::geom {

// In-plane width of frame-tab beams in the FEM model; the rendered tab is a
// solid strip of frame_mm width.
inline constexpr double kFrameStrutWidthMM = 2.5;

namespace detail {

// Cell centre of a flat-top hexagonal tiling: column pitch 1.5*side,
// row pitch sqrt(3)*side, odd columns shifted up half a row.
inline Vec2 tile_center(int row, int col, double side_mm) {
  double dy = std::numbers::sqrt3 * side_mm;
  return {1.5 * side_mm * col, dy * row + (col % 2 ? 0.5 * dy : 0.0)};
}

// Builds one end-frame tab: a ladder of two vertical spines plus rungs,
// spanning [y_lo, y_hi] at the panel edge, and a filled rectangle for
// rendering. `x_in` is the lattice boundary, `x_out` the free edge.
inline void add_frame(GraphBuilder& b, std::vector<int>& frame_nodes,
                      double x_in, double x_out, double y_lo, double y_hi,
                      const std::vector<double>& attach_ys, double width_mm) {
  std::vector<double> ys = attach_ys;
  ys.push_back(y_lo);
  ys.push_back(y_hi);
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end(),
                       [](double a, double c) { return std::abs(a - c) <= kNodeTol; }),
           ys.end());
  std::vector<int> in_ids, out_ids;
  for (double y : ys) {
    in_ids.push_back(b.add_node({x_in, y}));
    out_ids.push_back(b.add_node({x_out, y}));
  }
  for (std::size_t i = 0; i + 1 < ys.size(); ++i) {
    b.add_edge(in_ids[i], in_ids[i + 1], width_mm);
    b.add_edge(out_ids[i], out_ids[i + 1], width_mm);
  }
  for (std::size_t i = 0; i < ys.size(); ++i)
    b.add_edge(in_ids[i], out_ids[i], width_mm);
  frame_nodes = in_ids;
  frame_nodes.insert(frame_nodes.end(), out_ids.begin(), out_ids.end());
}

}  // namespace detail

// Tessellates per-position cell fragments on a flat-top hexagonal grid and
// attaches end-frame tabs of width frame_mm on the left (clamped/base) and
// right (tip) edges. cells_rc is indexed row-major (row*cols + col); each
// fragment is centred at the origin. inner_rc carries the node ids of each
// fragment's innermost interlaced cell (empty when none). frame_mm = 0 skips
// the tabs and uses the extreme lattice nodes as base/tip sets.
inline BeamGraph tessellate_cells(const std::vector<BeamGraph>& cells_rc,
                                  const std::vector<std::vector<int>>& inner_rc,
                                  int rows, int cols, double side_mm,
                                  double frame_mm) {
  if (rows < 1 || cols < 1)
    throw ValidationError("tessellate: rows and cols must be >= 1");
  if (int(cells_rc.size()) != rows * cols ||
      int(inner_rc.size()) != rows * cols)
    throw ValidationError("tessellate: cell array shape mismatch");
  if (frame_mm < 0) throw ValidationError("tessellate: frame_mm must be >= 0");

  GraphBuilder b;
  BeamGraph out;
  std::vector<CellRef> cells;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const BeamGraph& frag = cells_rc[r * cols + c];
      Vec2 ctr = detail::tile_center(r, c, side_mm);
      auto remap = b.merge(frag, ctr);
      CellRef ref;
      ref.row = r;
      ref.col = c;
      ref.center = ctr;
      for (int id : inner_rc[r * cols + c]) ref.inner_nodes.push_back(remap[id]);
      ref.has_inner = !ref.inner_nodes.empty();
      cells.push_back(std::move(ref));
    }

  double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
  for (auto n : b.peek().nodes) {
    x_min = std::min(x_min, n.x);
    x_max = std::max(x_max, n.x);
    y_min = std::min(y_min, n.y);
    y_max = std::max(y_max, n.y);
  }

  std::vector<int> left_ids, right_ids;
  if (frame_mm > 0) {
    std::vector<double> left_ys, right_ys;
    for (auto n : b.peek().nodes) {
      if (std::abs(n.x - x_min) <= kNodeTol) left_ys.push_back(n.y);
      if (std::abs(n.x - x_max) <= kNodeTol) right_ys.push_back(n.y);
    }
    const double w = kFrameStrutWidthMM;
    detail::add_frame(b, left_ids, x_min, x_min - frame_mm, y_min, y_max,
                      left_ys, w);
    detail::add_frame(b, right_ids, x_max, x_max + frame_mm, y_min, y_max,
                      right_ys, w);
    out.filled_regions.push_back({{x_min - frame_mm, y_min},
                                  {x_min, y_min},
                                  {x_min, y_max},
                                  {x_min - frame_mm, y_max}});
    out.filled_regions.push_back({{x_max, y_min},
                                  {x_max + frame_mm, y_min},
                                  {x_max + frame_mm, y_max},
                                  {x_max, y_max}});
  } else {
    const auto& ns = b.peek().nodes;
    double band = 0.02 * (x_max - x_min) + kNodeTol;
    for (std::size_t i = 0; i < ns.size(); ++i) {
      if (ns[i].x <= x_min + band) left_ids.push_back(int(i));
      if (ns[i].x >= x_max - band) right_ids.push_back(int(i));
    }
  }

  auto regions = std::move(out.filled_regions);
  out = b.take();
  out.filled_regions = std::move(regions);
  out.cells = std::move(cells);
  out.clamped_nodes = left_ids;
  out.base_nodes = left_ids;
  out.tip_nodes = right_ids;
  if (!graph_connected(out))
    throw ValidationError("tessellate: panel graph is not connected");
  return out;
}

// Uniform tessellation of a single cell fragment (no interlace bookkeeping).
inline BeamGraph tessellate(const BeamGraph& cell, int rows, int cols,
                            double frame_mm) {
  // Recover the hexagon side from the fragment's width (flat-top hexagons
  // span 2*side horizontally).
  double x_min = 1e300, x_max = -1e300;
  for (auto n : cell.nodes) {
    x_min = std::min(x_min, n.x);
    x_max = std::max(x_max, n.x);
  }
  if (!(x_max > x_min)) throw ValidationError("tessellate: degenerate cell");
  double side = 0.5 * (x_max - x_min);
  std::vector<BeamGraph> cells(std::size_t(rows) * cols, cell);
  std::vector<std::vector<int>> inner(std::size_t(rows) * cols);
  return tessellate_cells(cells, inner, rows, cols, side, frame_mm);
}

}  // namespace bandforge::geom
