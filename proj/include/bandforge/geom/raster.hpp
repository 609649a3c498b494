#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "bandforge/geom/graph.hpp"

namespace bandforge::geom {

// Struts are rendered at a fixed reference resolution (the fitted scale of
// the standard panel) so that rasterization is exactly invariant under
// uniform geometric scaling of the graph.
inline constexpr double kPxPerMMRef = 1.225;

// Thin struts are widened to this half-width on screen so that binary
// thresholding yields lines at least ~3.5 px wide (stable under 3x3
// morphology); the true sub-pixel width stays encoded in the grey plateau.
inline constexpr double kMinStrokeHalfWidthPx = 2.0;

struct Raster {
  int width = 0, height = 0;
  std::vector<float> v;  // row-major, in [-1, 1]; +1 material, -1 void

  float& at(int row, int col) { return v[std::size_t(row) * width + col]; }
  float at(int row, int col) const {
    return v[std::size_t(row) * width + col];
  }
};

namespace detail {

inline double dist_point_segment(Vec2 p, Vec2 a, Vec2 b) {
  Vec2 d = b - a;
  double len2 = dot(d, d);
  double t = len2 > 0 ? std::clamp(dot(p - a, d) / len2, 0.0, 1.0) : 0.0;
  return norm(p - (a + t * d));
}

// Signed distance to a polygon boundary: positive inside.
inline double signed_dist_polygon(Vec2 p, const std::vector<Vec2>& poly) {
  double d = 1e300;
  bool inside = false;
  std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    d = std::min(d, dist_point_segment(p, poly[j], poly[i]));
    bool crosses = (poly[i].y > p.y) != (poly[j].y > p.y);
    if (crosses) {
      double x_at = poly[j].x + (p.y - poly[j].y) / (poly[i].y - poly[j].y) *
                                    (poly[i].x - poly[j].x);
      if (p.x < x_at) inside = !inside;
    }
  }
  return inside ? d : -d;
}

}  // namespace detail

// Anti-aliased coverage rendering of struts (capsule of the strut width at
// reference resolution) and filled regions, stretched to fill the image up
// to a 2 px margin. Coverage ramps linearly over one pixel, so sub-pixel
// strut widths remain encoded in the grey levels.
inline Raster rasterize(const BeamGraph& g, int width_px, int height_px) {
  if (width_px < 8 || height_px < 8)
    throw ValidationError("rasterize: image too small");
  if (g.nodes.empty()) throw ValidationError("rasterize: empty graph");

  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (auto n : g.nodes) {
    x0 = std::min(x0, n.x);
    x1 = std::max(x1, n.x);
    y0 = std::min(y0, n.y);
    y1 = std::max(y1, n.y);
  }
  for (const auto& poly : g.filled_regions)
    for (auto p : poly) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
  double w_mm = x1 - x0, h_mm = y1 - y0;
  if (!(w_mm > 0) || !(h_mm > 0))
    throw ValidationError("rasterize: degenerate extent");

  // Uniform-scale fit, centred: one px-per-mm factor on both axes so the
  // geometry keeps its aspect ratio inside the fixed-size image.
  const double margin = 2.0;
  double ppm = std::min((width_px - 2 * margin) / w_mm,
                        (height_px - 2 * margin) / h_mm);
  double cx = 0.5 * width_px, cy = 0.5 * height_px;
  double mx = 0.5 * (x0 + x1), my = 0.5 * (y0 + y1);
  auto to_px = [&](Vec2 p) -> Vec2 {
    return {cx + (p.x - mx) * ppm, cy - (p.y - my) * ppm};
  };

  Raster img;
  img.width = width_px;
  img.height = height_px;
  img.v.assign(std::size_t(width_px) * height_px, 0.0f);
  std::vector<double> cov(img.v.size(), 0.0);

  auto paint = [&](int r, int c, double value) {
    if (r < 0 || r >= height_px || c < 0 || c >= width_px) return;
    std::size_t k = std::size_t(r) * width_px + c;
    cov[k] = std::max(cov[k], value);
  };

  for (const auto& e : g.edges) {
    Vec2 a = to_px(g.nodes[e.a]), b = to_px(g.nodes[e.b]);
    double hw_true = 0.5 * e.width_mm * kPxPerMMRef;
    double hw = std::max(hw_true, kMinStrokeHalfWidthPx);
    // Plateau in (0.5, 1]: widened struts stay above the binary threshold
    // while their grey level still discriminates the physical width.
    double plateau =
        hw_true >= hw ? 1.0 : 0.5 + 0.5 * (hw_true / hw);
    double reach = hw + 1.0;
    int c_lo = int(std::floor(std::min(a.x, b.x) - reach));
    int c_hi = int(std::ceil(std::max(a.x, b.x) + reach));
    int r_lo = int(std::floor(std::min(a.y, b.y) - reach));
    int r_hi = int(std::ceil(std::max(a.y, b.y) + reach));
    for (int r = r_lo; r <= r_hi; ++r)
      for (int c = c_lo; c <= c_hi; ++c) {
        double d = detail::dist_point_segment({c + 0.5, r + 0.5}, a, b);
        paint(r, c, plateau * std::clamp(0.5 + (hw - d), 0.0, 1.0));
      }
  }

  for (const auto& poly_mm : g.filled_regions) {
    if (poly_mm.size() < 3) continue;
    std::vector<Vec2> poly;
    double px0 = 1e300, px1 = -1e300, py0 = 1e300, py1 = -1e300;
    for (auto p : poly_mm) {
      Vec2 q = to_px(p);
      poly.push_back(q);
      px0 = std::min(px0, q.x);
      px1 = std::max(px1, q.x);
      py0 = std::min(py0, q.y);
      py1 = std::max(py1, q.y);
    }
    for (int r = int(std::floor(py0 - 1)); r <= int(std::ceil(py1 + 1)); ++r)
      for (int c = int(std::floor(px0 - 1)); c <= int(std::ceil(px1 + 1)); ++c) {
        double sd = detail::signed_dist_polygon({c + 0.5, r + 0.5}, poly);
        paint(r, c, std::clamp(0.5 + sd, 0.0, 1.0));
      }
  }

  for (std::size_t k = 0; k < cov.size(); ++k)
    img.v[k] = float(2.0 * cov[k] - 1.0);
  return img;
}

// 8-bit quantization used for the PNG artifact: -1 -> 0, +1 -> 255.
inline std::vector<std::uint8_t> raster_to_u8(const Raster& r) {
  std::vector<std::uint8_t> out(r.v.size());
  for (std::size_t i = 0; i < r.v.size(); ++i) {
    double t = (double(r.v[i]) + 1.0) * 0.5;
    out[i] = std::uint8_t(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
  }
  return out;
}

inline Raster raster_from_u8(const std::vector<std::uint8_t>& pix, int width,
                             int height) {
  Raster r;
  r.width = width;
  r.height = height;
  r.v.resize(pix.size());
  for (std::size_t i = 0; i < pix.size(); ++i)
    r.v[i] = float(pix[i] / 255.0 * 2.0 - 1.0);
  return r;
}

}  // namespace bandforge::geom
