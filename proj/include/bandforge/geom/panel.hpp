#pragma once

#include <json.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "bandforge/geom/cells.hpp"
#include "bandforge/geom/tessellate.hpp"
#include "bandforge/io/sha256.hpp"

namespace bandforge::geom {

// ---------------------------------------------------------------------------
// Placement masks: which (row, col) cells of the tessellation receive an
// interlaced inner cell.

inline const std::vector<std::string>& placement_names() {
  static const std::vector<std::string> names = {
      "full",       "alternate_cols", "checkerboard", "middle_row",
      "outer_rows", "left_half",      "right_half",   "boundary_ring"};
  return names;
}

inline std::vector<std::vector<bool>> placement_mask(const std::string& name,
                                                     int rows, int cols) {
  std::vector<std::vector<bool>> m(rows, std::vector<bool>(cols, false));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      bool v;
      if (name == "full") v = true;
      else if (name == "alternate_cols") v = (c % 2 == 0);
      else if (name == "checkerboard") v = ((r + c) % 2 == 0);
      else if (name == "middle_row") v = (r == rows / 2);
      else if (name == "outer_rows") v = (r == 0 || r == rows - 1);
      else if (name == "left_half") v = (c < cols / 2);
      else if (name == "right_half") v = (c >= cols / 2);
      else if (name == "boundary_ring")
        v = (r == 0 || r == rows - 1 || c == 0 || c == cols - 1);
      else throw ConfigError("unknown placement: " + name);
      m[r][c] = v;
    }
  return m;
}

// ---------------------------------------------------------------------------
// Named insert patterns (row 0 is the bottom row).

inline const std::vector<std::string>& insert_pattern_names() {
  static const std::vector<std::string> names = {
      "none",    "middle_row",    "staggered_mid", "cross",    "forward_arrow",
      "diamond", "outer_rows",    "outer_mid_sparse", "up_arrow", "sparse"};
  return names;
}

inline std::vector<std::vector<bool>> insert_mask(const std::string& name,
                                                  int rows, int cols) {
  std::vector<std::vector<bool>> m(rows, std::vector<bool>(cols, false));
  int mid = rows / 2, top = rows - 1, bot = 0;
  for (int c = 0; c < cols; ++c) {
    if (name == "none") {
    } else if (name == "middle_row") {
      m[mid][c] = true;
    } else if (name == "staggered_mid") {
      m[mid][c] = true;
      m[top][c] = (c % 2 == 0);
      m[bot][c] = (c % 2 == 1);
    } else if (name == "cross") {
      m[top][c] = m[bot][c] = true;
      m[mid][c] = (c % 2 == 0);
    } else if (name == "forward_arrow") {
      m[mid][c] = true;
      m[top][c] = m[bot][c] = (c >= cols / 2);
    } else if (name == "diamond") {
      m[mid][c] = true;
      m[top][c] = m[bot][c] = (c % 2 == 0);
    } else if (name == "outer_rows") {
      m[top][c] = m[bot][c] = true;
    } else if (name == "outer_mid_sparse") {
      m[top][c] = m[bot][c] = true;
      m[mid][c] = (c % 3 == 0);
    } else if (name == "up_arrow") {
      m[mid][c] = (c != 0 && c != cols - 1);
      m[top][c] = (c % 2 == 1);
      m[bot][c] = (c % 2 == 0);
    } else if (name == "sparse") {
      m[top][c] = m[bot][c] = (c % 2 == 0);
      m[mid][c] = (c % 3 == 0);
    } else {
      throw ConfigError("unknown insert pattern: " + name);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// LatticeSpec: full parametric description of one panel.

struct InterlaceLayer {
  CellFamily family = CellFamily::honeycomb;
  std::string placement = "full";
  double fit = 0.60;
};

struct InsertSpec {
  std::string name = "none";
  std::vector<std::vector<bool>> mask;  // rows x cols; empty = derive from name
};

struct LatticeSpec {
  std::string id;
  double side_mm = 9.5;
  double strut_mm = 1.2;
  double thickness_mm = 5.0;
  double frame_mm = 15.0;
  int rows = 3, cols = 12;
  double scale = 1.0;
  int fractal_order = 0;
  std::vector<InterlaceLayer> interlace;  // [secondary, tertiary?]
  InsertSpec inserts;
  double insert_mass_kg = 0.002;
};

inline void validate_spec(const LatticeSpec& s) {
  if (!(s.side_mm > 0) || !(s.strut_mm > 0) || !(s.thickness_mm > 0))
    throw ValidationError("spec: dimensions must be positive");
  if (s.frame_mm < 0) throw ValidationError("spec: frame_mm must be >= 0");
  if (s.rows < 1) throw ValidationError("spec: rows must be >= 1");
  if (s.cols < 7) throw ValidationError("spec: cols must be >= 7");
  if (!(s.scale > 0)) throw ValidationError("spec: scale must be positive");
  if (s.fractal_order < 0 || s.fractal_order > 2)
    throw ValidationError("spec: fractal_order must be in [0, 2]");
  if (s.interlace.size() > 2)
    throw ValidationError("spec: at most two interlace layers");
  if (s.fractal_order > 0) {
    bool any_hier = false;
    for (const auto& l : s.interlace)
      any_hier |= (l.family == CellFamily::hierarchical_honeycomb);
    if (!any_hier)
      throw ValidationError(
          "spec: fractal_order > 0 requires a hierarchical_honeycomb layer");
  }
  for (const auto& l : s.interlace) {
    placement_mask(l.placement, s.rows, s.cols);  // validates the name
    if (!(l.fit > 0) || !(l.fit < 1))
      throw ValidationError("spec: interlace fit must be in (0, 1)");
  }
  if (!s.inserts.mask.empty()) {
    if (int(s.inserts.mask.size()) != s.rows)
      throw ValidationError("spec: insert mask row count mismatch");
    for (const auto& row : s.inserts.mask)
      if (int(row.size()) != s.cols)
        throw ValidationError("spec: insert mask col count mismatch");
  } else if (s.inserts.name != "none") {
    insert_mask(s.inserts.name, s.rows, s.cols);  // validates the name
  }
  if (s.insert_mass_kg < 0)
    throw ValidationError("spec: insert_mass_kg must be >= 0");
}

// ---------------------------------------------------------------------------
// JSON round trip (canonical form: nlohmann sorts object keys).

inline nlohmann::json to_json(const LatticeSpec& s) {
  nlohmann::json j;
  j["id"] = s.id;
  j["side_mm"] = s.side_mm;
  j["strut_mm"] = s.strut_mm;
  j["thickness_mm"] = s.thickness_mm;
  j["frame_mm"] = s.frame_mm;
  j["rows"] = s.rows;
  j["cols"] = s.cols;
  j["scale"] = s.scale;
  j["fractal_order"] = s.fractal_order;
  j["interlace"] = nlohmann::json::array();
  for (const auto& l : s.interlace)
    j["interlace"].push_back({{"family", to_string(l.family)},
                              {"placement", l.placement},
                              {"fit", l.fit}});
  j["insert_pattern"] = {{"name", s.inserts.name}};
  if (!s.inserts.mask.empty()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : s.inserts.mask) {
      nlohmann::json row = nlohmann::json::array();
      for (bool v : r) row.push_back(int(v));
      rows.push_back(row);
    }
    j["insert_pattern"]["mask"] = rows;
  }
  j["insert_mass_kg"] = s.insert_mass_kg;
  return j;
}

inline LatticeSpec lattice_spec_from_json(const nlohmann::json& j) {
  LatticeSpec s;
  try {
    s.id = j.value("id", "");
    s.side_mm = j.at("side_mm").get<double>();
    s.strut_mm = j.at("strut_mm").get<double>();
    s.thickness_mm = j.at("thickness_mm").get<double>();
    s.frame_mm = j.value("frame_mm", 15.0);
    s.rows = j.at("rows").get<int>();
    s.cols = j.at("cols").get<int>();
    s.scale = j.value("scale", 1.0);
    s.fractal_order = j.value("fractal_order", 0);
    if (j.contains("interlace"))
      for (const auto& l : j.at("interlace")) {
        InterlaceLayer layer;
        layer.family = cell_family_from_string(l.at("family").get<std::string>());
        layer.placement = l.value("placement", "full");
        layer.fit = l.value("fit", 0.60);
        s.interlace.push_back(layer);
      }
    if (j.contains("insert_pattern")) {
      const auto& p = j.at("insert_pattern");
      s.inserts.name = p.value("name", "none");
      if (p.contains("mask"))
        for (const auto& r : p.at("mask")) {
          std::vector<bool> row;
          for (const auto& v : r) row.push_back(v.get<int>() != 0);
          s.inserts.mask.push_back(row);
        }
    }
    s.insert_mass_kg = j.value("insert_mass_kg", 0.002);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("spec: malformed JSON: ") + e.what());
  }
  validate_spec(s);
  return s;
}

inline std::string canonical_spec_json(const LatticeSpec& s) {
  return to_json(s).dump();
}

inline std::string spec_hash(const LatticeSpec& s) {
  return io::sha256_hex(canonical_spec_json(s));
}

// ---------------------------------------------------------------------------
// Insert application: a flagged cell gets a centroid hub node spoked to the
// convex hull of its inner cell, a lumped mass, and a solid fill polygon.

inline void apply_insert_pattern(BeamGraph& g,
                                 const std::vector<std::vector<bool>>& mask,
                                 double mass_kg, double spoke_width_mm) {
  for (auto& cell : g.cells) {
    if (cell.row >= int(mask.size()) || cell.col >= int(mask[cell.row].size()))
      throw ValidationError("insert pattern: mask shape mismatch");
    if (!mask[cell.row][cell.col]) continue;
    if (!cell.has_inner)
      throw ValidationError("insert pattern: flagged cell has no inner cell");
    auto hull = convex_hull(g.nodes, cell.inner_nodes);
    if (hull.size() < 3)
      throw ValidationError("insert pattern: degenerate inner cell");
    Vec2 ctr{0, 0};
    for (int id : hull) ctr = ctr + g.nodes[id];
    ctr = (1.0 / double(hull.size())) * ctr;
    int hub = int(g.nodes.size());
    g.nodes.push_back(ctr);
    for (int id : hull) g.edges.push_back({hub, id, spoke_width_mm});
    g.lumped_masses_kg.emplace_back(hub, mass_kg);
    std::vector<Vec2> poly;
    for (int id : hull) poly.push_back(g.nodes[id]);
    g.filled_regions.push_back(std::move(poly));
    cell.has_insert = true;
  }
}

inline void apply_insert_pattern(BeamGraph& g, const std::string& name,
                                 int rows, int cols, double mass_kg,
                                 double spoke_width_mm) {
  apply_insert_pattern(g, insert_mask(name, rows, cols), mass_kg,
                       spoke_width_mm);
}

// ---------------------------------------------------------------------------
// Panel assembly from a LatticeSpec. The physical scale factor acts on the
// cell geometry (side length) while frame tabs stay at their nominal width.

inline BeamGraph build_panel(const LatticeSpec& spec) {
  validate_spec(spec);
  double side = spec.side_mm * spec.scale;
  BeamGraph outer = build_unit_cell(CellFamily::honeycomb, side);

  std::vector<std::vector<bool>> sec_mask, ter_mask;
  if (!spec.interlace.empty())
    sec_mask = placement_mask(spec.interlace[0].placement, spec.rows, spec.cols);
  if (spec.interlace.size() > 1)
    ter_mask = placement_mask(spec.interlace[1].placement, spec.rows, spec.cols);

  auto order_for = [&](CellFamily f) {
    return f == CellFamily::hierarchical_honeycomb ? spec.fractal_order : 0;
  };

  // Distinct (secondary?, tertiary?) combinations are tiny in number; build
  // each composed cell once and reuse across the grid.
  BeamGraph cell_plain = outer;
  BeamGraph cell_sec, cell_sec_ter;
  std::vector<int> ids_sec, ids_sec_ter;
  if (!spec.interlace.empty()) {
    BeamGraph inner = build_unit_cell(spec.interlace[0].family, side,
                                      order_for(spec.interlace[0].family));
    cell_sec = interlace(outer, inner, spec.interlace[0].fit, &ids_sec);
    if (spec.interlace.size() > 1) {
      BeamGraph tert = build_unit_cell(spec.interlace[1].family, side,
                                       order_for(spec.interlace[1].family));
      BeamGraph nested =
          interlace(inner, tert, spec.interlace[1].fit, nullptr);
      cell_sec_ter = interlace(outer, nested, spec.interlace[0].fit,
                               &ids_sec_ter);
    }
  }

  std::vector<BeamGraph> cells(std::size_t(spec.rows) * spec.cols);
  std::vector<std::vector<int>> inner_ids(std::size_t(spec.rows) * spec.cols);
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c) {
      std::size_t k = std::size_t(r) * spec.cols + c;
      bool sec = !sec_mask.empty() && sec_mask[r][c];
      bool ter = sec && !ter_mask.empty() && ter_mask[r][c];
      if (ter) {
        cells[k] = cell_sec_ter;
        inner_ids[k] = ids_sec_ter;
      } else if (sec) {
        cells[k] = cell_sec;
        inner_ids[k] = ids_sec;
      } else {
        cells[k] = cell_plain;
      }
    }

  BeamGraph panel = tessellate_cells(cells, inner_ids, spec.rows, spec.cols,
                                     side, spec.frame_mm);
  panel.thickness_mm = spec.thickness_mm;
  for (auto& e : panel.edges)
    if (e.width_mm == 0) e.width_mm = spec.strut_mm;

  std::vector<std::vector<bool>> imask = spec.inserts.mask;
  if (imask.empty() && spec.inserts.name != "none")
    imask = insert_mask(spec.inserts.name, spec.rows, spec.cols);
  if (!imask.empty())
    apply_insert_pattern(panel, imask, spec.insert_mass_kg,
                         2.0 * spec.strut_mm);
  return panel;
}

// ---------------------------------------------------------------------------
// Deterministic enumeration of the design corpus: the cartesian grid
// (secondary family) x (placement) x (scale) x (variant), visited in
// lexicographic order, with a seeded per-sample strut-width perturbation.
// Variants toggle tertiary cells and insert patterns; for the hierarchical
// family they also select the fractal order.

inline LatticeSpec enumerate_sample(std::uint64_t seed, std::uint64_t index) {
  static const CellFamily families[] = {
      CellFamily::honeycomb, CellFamily::star, CellFamily::circle,
      CellFamily::auxetic, CellFamily::hierarchical_honeycomb};
  const auto& placements = placement_names();
  static const double scales[] = {1.0, 1.5, 2.0};
  constexpr int kVariants = 6;

  std::uint64_t grid = index % (5ULL * 8 * 3 * kVariants);
  int v = int(grid % kVariants);
  int sc = int((grid / kVariants) % 3);
  int p = int((grid / (kVariants * 3)) % 8);
  int f = int(grid / (kVariants * 3 * 8));

  LatticeSpec s;
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%04llu", (unsigned long long)index);
  s.id = buf;
  s.scale = scales[sc];
  CellFamily fam = families[f];
  bool hier = (fam == CellFamily::hierarchical_honeycomb);
  s.interlace.push_back({fam, placements[p], 0.60});

  // Hierarchical cells are refined one level in the corpus; deeper orders
  // multiply node counts ~6x per level and put full-placement panels out of
  // reach of the dense eigensolver's time/memory budget.
  s.fractal_order = hier ? 1 : 0;
  std::string tert, ins;
  if (v == 1 || v == 5) tert = "honeycomb";
  if (v == 2) tert = "star";
  if (v == 3) ins = "diamond";
  if (v == 4) ins = "outer_rows";
  if (v == 5) ins = "middle_row";
  if (!tert.empty())
    s.interlace.push_back(
        {cell_family_from_string(tert), placements[p], 0.60});

  if (!ins.empty()) {
    // Inserts can only occupy cells that actually have an inner cell: clip
    // the named pattern by the placement mask (falling back to the placement
    // itself if the intersection is empty).
    auto im = insert_mask(ins, s.rows, s.cols);
    auto pm = placement_mask(placements[p], s.rows, s.cols);
    bool any = false;
    for (int r = 0; r < s.rows; ++r)
      for (int c = 0; c < s.cols; ++c) {
        im[r][c] = im[r][c] && pm[r][c];
        any |= bool(im[r][c]);
      }
    s.inserts.name = ins;
    s.inserts.mask = any ? im : pm;
  }

  auto rng = make_rng(seed, index);
  std::uniform_real_distribution<double> jitter(1.0, 1.45);
  s.strut_mm = jitter(rng);
  return s;
}

inline std::vector<LatticeSpec> enumerate_dataset(std::uint64_t seed,
                                                  std::size_t n) {
  std::vector<LatticeSpec> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(enumerate_sample(seed, i));
  return out;
}

}  // namespace bandforge::geom
