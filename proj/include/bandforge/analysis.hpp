#pragma once
// Post-processing and design workflow: raster denoising, tailored-bandgap
// target synthesis, spectrum comparison reports, corpus projection for
// oracle verification, and deterministic SVG figure emission.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bandforge/fem/spectrum.hpp"
#include "bandforge/io/sha256.hpp"
#include "bandforge/models/normalizer.hpp"
#include "bandforge/nn/losses.hpp"
#include "bandforge/train/dataset.hpp"

namespace bandforge::analysis {

namespace fs = std::filesystem;

// ---- denoising ---------------------------------------------------------------

struct DenoiseParams {
  int min_component_px = 20;  // material specks below this are removed
  int min_hole_px = 20;       // enclosed void pockets below this are filled
  int max_iters = 8;          // fixpoint safety bound
};

namespace detail {

using Mask = std::vector<std::uint8_t>;  // 1 = material

inline Mask erode3(const Mask& in, int H, int W) {
  Mask out(in.size(), 0);
  for (int y = 1; y + 1 < H; ++y)
    for (int x = 1; x + 1 < W; ++x) {
      bool all = true;
      for (int dy = -1; dy <= 1 && all; ++dy)
        for (int dx = -1; dx <= 1 && all; ++dx)
          all = in[std::size_t(y + dy) * W + (x + dx)] != 0;
      out[std::size_t(y) * W + x] = all;
    }
  return out;
}

inline Mask dilate3(const Mask& in, int H, int W) {
  Mask out(in.size(), 0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      bool any = false;
      for (int dy = -1; dy <= 1 && !any; ++dy)
        for (int dx = -1; dx <= 1 && !any; ++dx) {
          int yy = y + dy, xx = x + dx;
          any = yy >= 0 && yy < H && xx >= 0 && xx < W &&
                in[std::size_t(yy) * W + xx] != 0;
        }
      out[std::size_t(y) * W + x] = any;
    }
  return out;
}

// Removes connected components of `phase` smaller than min_px. Material uses
// 8-connectivity; the void phase uses the dual 4-connectivity, and void
// components touching the border are background, never holes.
inline void filter_components(Mask& m, int H, int W, std::uint8_t phase,
                              int min_px, bool eight_conn) {
  std::vector<int> label(m.size(), -1);
  std::vector<std::size_t> stack;
  static const int DX8[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
  static const int DY8[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
  static const int DX4[4] = {0, 0, -1, 1};
  static const int DY4[4] = {-1, 1, 0, 0};
  const int* dx = eight_conn ? DX8 : DX4;
  const int* dy = eight_conn ? DY8 : DY4;
  int nd = eight_conn ? 8 : 4;
  int next = 0;
  std::vector<int> size;
  std::vector<bool> touches_border;
  for (std::size_t s = 0; s < m.size(); ++s) {
    if (m[s] != phase || label[s] >= 0) continue;
    int id = next++;
    size.push_back(0);
    touches_border.push_back(false);
    stack.assign(1, s);
    label[s] = id;
    while (!stack.empty()) {
      std::size_t p = stack.back();
      stack.pop_back();
      int y = int(p / std::size_t(W)), x = int(p % std::size_t(W));
      ++size[std::size_t(id)];
      if (y == 0 || y == H - 1 || x == 0 || x == W - 1)
        touches_border[std::size_t(id)] = true;
      for (int k = 0; k < nd; ++k) {
        int yy = y + dy[k], xx = x + dx[k];
        if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
        std::size_t q = std::size_t(yy) * W + xx;
        if (m[q] == phase && label[q] < 0) {
          label[q] = id;
          stack.push_back(q);
        }
      }
    }
  }
  for (std::size_t s = 0; s < m.size(); ++s) {
    if (m[s] != phase) continue;
    int id = label[s];
    if (size[std::size_t(id)] < min_px &&
        !(phase == 0 && touches_border[std::size_t(id)]))
      m[s] = phase ? 0 : 1;
  }
}

}  // namespace detail

// Noise-removal filter for generated rasters: threshold at 0 to {-1,+1},
// 3x3 morphological opening, fill enclosed void pockets < min_hole_px (the
// bounded substitute for closing -- a full 3x3 closing bridges the 1-2 px
// seams between interlaced sublattices), remove material components
// < min_component_px (8-connectivity), iterated to a fixpoint so the filter
// is exactly idempotent.
template <typename T>
nn::Tensor<T> denoise(const nn::Tensor<T>& img, const DenoiseParams& p = {}) {
  auto [H, W] = nn::detail::image_hw(img, "denoise");
  if (p.min_component_px < 0 || p.min_hole_px < 0 || p.max_iters < 1)
    throw ValidationError("denoise: bad parameters");
  detail::Mask m(img.v.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = img.v[i] > T(0);
  for (int it = 0; it < p.max_iters; ++it) {
    detail::Mask before = m;
    m = detail::dilate3(detail::erode3(m, H, W), H, W);  // opening
    detail::filter_components(m, H, W, 0, p.min_hole_px, false);
    detail::filter_components(m, H, W, 1, p.min_component_px, true);
    if (m == before) break;
  }
  nn::Tensor<T> out(img.shape);
  for (std::size_t i = 0; i < m.size(); ++i) out.v[i] = m[i] ? T(1) : T(-1);
  return out;
}

// ---- target synthesis --------------------------------------------------------

struct NotchSpec {
  double f_lo = 0, f_hi = 0;     // Hz
  double depth_db = 0;           // negative
  double edge_width_hz = 100.0;  // raised-cosine transition width
};

inline void validate(const NotchSpec& n) {
  if (!(10.0 <= n.f_lo && n.f_lo < n.f_hi && n.f_hi <= 10000.0))
    throw ValidationError("notch: need 10 <= f_lo < f_hi <= 10000");
  if (!(n.depth_db < 0)) throw ValidationError("notch: depth_db must be < 0");
  if (!(n.edge_width_hz >= 0))
    throw ValidationError("notch: edge width must be >= 0");
}

inline std::vector<double> flat_baseline() {
  return std::vector<double>(1000, 0.0);
}

// Baseline spectrum with raised-cosine notches of the requested depths. The
// taper lives inside each band, so the full depth is reached at the centre.
inline std::vector<double> synthesize_target(
    const std::vector<double>& baseline_db, std::vector<NotchSpec> notches) {
  std::vector<double> freqs = fem::standard_freqs();
  if (baseline_db.size() != freqs.size())
    throw ValidationError("synthesize_target: baseline must have 1000 bins");
  std::sort(notches.begin(), notches.end(),
            [](const NotchSpec& a, const NotchSpec& b) { return a.f_lo < b.f_lo; });
  for (std::size_t i = 0; i < notches.size(); ++i) {
    validate(notches[i]);
    if (i > 0 && notches[i].f_lo < notches[i - 1].f_hi)
      throw ValidationError("synthesize_target: overlapping notches");
  }
  std::vector<double> out = baseline_db;
  for (const auto& n : notches) {
    double ew = std::min(n.edge_width_hz, 0.5 * (n.f_hi - n.f_lo));
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      double f = freqs[i];
      if (f < n.f_lo || f > n.f_hi) continue;
      double d_edge = std::min(f - n.f_lo, n.f_hi - f);
      double w = (ew <= 0 || d_edge >= ew)
                     ? 1.0
                     : 0.5 * (1.0 - std::cos(M_PI * d_edge / ew));
      out[i] += n.depth_db * w;
    }
  }
  return out;
}

// ---- spectrum comparison -----------------------------------------------------

struct CompareReport {
  double mse = 0;         // normalized units
  double max_abs_db = 0;  // dB
  double gap_iou = 0;     // detected-bandgap intersection over union
};

namespace detail {

inline double interval_iou(const std::vector<fem::Bandgap>& a,
                           const std::vector<fem::Bandgap>& b) {
  if (a.empty() && b.empty()) return 1.0;
  auto len = [](const std::vector<fem::Bandgap>& g) {
    double s = 0;
    for (const auto& x : g) s += x.f_hi - x.f_lo;
    return s;
  };
  double inter = 0;
  for (const auto& x : a)
    for (const auto& y : b)
      inter += std::max(0.0, std::min(x.f_hi, y.f_hi) -
                                 std::max(x.f_lo, y.f_lo));
  double uni = len(a) + len(b) - inter;
  return uni > 0 ? inter / uni : 1.0;
}

}  // namespace detail

inline CompareReport compare_spectra(const std::vector<double>& a_db,
                                     const std::vector<double>& b_db,
                                     const models::NormStats& norm,
                                     double gap_threshold_db = -20.0,
                                     double gap_min_width_hz = 50.0) {
  if (a_db.size() != b_db.size())
    throw ValidationError("compare_spectra: size mismatch");
  std::vector<double> freqs = fem::standard_freqs();
  if (a_db.size() != freqs.size())
    throw ValidationError("compare_spectra: expected 1000 bins");
  auto na = models::normalize_spectrum<double>(a_db, norm);
  auto nb = models::normalize_spectrum<double>(b_db, norm);
  CompareReport r;
  for (std::size_t i = 0; i < a_db.size(); ++i) {
    double d = na.v[i] - nb.v[i];
    r.mse += d * d;
    r.max_abs_db = std::max(r.max_abs_db, std::abs(a_db[i] - b_db[i]));
  }
  r.mse /= double(a_db.size());
  r.gap_iou = detail::interval_iou(
      fem::detect_bandgaps(freqs, a_db, gap_threshold_db, gap_min_width_hz),
      fem::detect_bandgaps(freqs, b_db, gap_threshold_db, gap_min_width_hz));
  return r;
}

// ---- corpus projection -------------------------------------------------------

// Nearest corpus structure to a (typically denoised) generated raster by
// binary pixel agreement -- the automated stand-in for the manual CAD rebuild
// step before oracle verification.
struct CorpusMatch {
  int sample_pos = -1;     // position in dataset.samples
  int sample_index = -1;   // corpus index
  double mismatch = 1.0;   // fraction of disagreeing pixels
};

inline CorpusMatch nearest_corpus_raster(const nn::Tensor<float>& raster,
                                         const train::Dataset& data) {
  if (data.samples.empty())
    throw ValidationError("nearest_corpus_raster: empty dataset");
  auto [H, W] = nn::detail::image_hw(raster, "nearest_corpus_raster");
  CorpusMatch best;
  for (std::size_t s = 0; s < data.samples.size(); ++s) {
    const auto& cand = data.samples[s].raster;
    if (cand.v.size() != raster.v.size())
      throw ValidationError("nearest_corpus_raster: raster size mismatch");
    long bad = 0;
    for (std::size_t i = 0; i < raster.v.size(); ++i)
      bad += (raster.v[i] > 0) != (cand.v[i] > 0);
    double frac = double(bad) / double(std::size_t(H) * W);
    if (frac < best.mismatch || best.sample_pos < 0) {
      best.mismatch = frac;
      best.sample_pos = int(s);
      best.sample_index = data.samples[s].index;
    }
  }
  return best;
}

// ---- figure emission ---------------------------------------------------------

namespace svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline const char* color(std::size_t i) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                   "#9467bd", "#ff7f0e", "#8c564b"};
  return kPalette[i % 6];
}

struct Series {
  std::string name;
  std::vector<double> x, y;
};

// Minimal deterministic line chart: fixed layout, no timestamps, %.6g
// coordinates; identical inputs produce byte-identical files.
inline std::string line_chart(const std::string& title,
                              const std::string& x_label,
                              const std::string& y_label,
                              const std::vector<Series>& series,
                              const std::vector<fem::Bandgap>& shaded = {}) {
  const double W = 860, H = 480, L = 70, R = 20, T = 40, B = 50;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!(x0 < x1)) x1 = x0 + 1;
  if (!(y0 < y1)) y1 = y0 + 1;
  double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) +
       "\" height=\"" + num(H) + "\" viewBox=\"0 0 " + num(W) + " " + num(H) +
       "\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t g = 0; g < shaded.size(); ++g) {
    double a = std::max(shaded[g].f_lo, x0), b = std::min(shaded[g].f_hi, x1);
    if (b <= a) continue;
    o += "<rect x=\"" + num(px(a)) + "\" y=\"" + num(T) + "\" width=\"" +
         num(px(b) - px(a)) + "\" height=\"" + num(H - T - B) +
         "\" fill=\"#cccccc\" fill-opacity=\"0.5\"/>\n";
  }
  // axes + ticks
  o += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) +
       "\" y2=\"" + num(H - B) + "\" stroke=\"black\"/>\n";
  o += "<line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) +
       "\" y2=\"" + num(H - B) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    double fx = x0 + (x1 - x0) * t / 5.0, fy = y0 + (y1 - y0) * t / 5.0;
    o += "<text x=\"" + num(px(fx)) + "\" y=\"" + num(H - B + 18) +
         "\" font-size=\"12\" text-anchor=\"middle\">" + num(fx) + "</text>\n";
    o += "<text x=\"" + num(L - 8) + "\" y=\"" + num(py(fy) + 4) +
         "\" font-size=\"12\" text-anchor=\"end\">" + num(fy) + "</text>\n";
  }
  o += "<text x=\"" + num((L + W - R) / 2) + "\" y=\"" + num(H - 12) +
       "\" font-size=\"13\" text-anchor=\"middle\">" + x_label + "</text>\n";
  o += "<text x=\"16\" y=\"" + num((T + H - B) / 2) +
       "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       num((T + H - B) / 2) + ")\">" + y_label + "</text>\n";
  o += "<text x=\"" + num(W / 2) + "\" y=\"22\" font-size=\"15\" "
       "text-anchor=\"middle\">" + title + "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    o += "<polyline fill=\"none\" stroke=\"";
    o += color(s);
    o += "\" stroke-width=\"1.3\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (i) o += " ";
      o += num(px(series[s].x[i])) + "," + num(py(series[s].y[i]));
    }
    o += "\"/>\n";
    o += "<text x=\"" + num(W - R - 10) + "\" y=\"" + num(T + 18 + 16 * double(s)) +
         "\" font-size=\"12\" text-anchor=\"end\" fill=\"";
    o += color(s);
    o += "\">" + series[s].name + "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

}  // namespace svg

namespace detail {

// Parses a simple numeric CSV with a header row into column vectors.
inline std::pair<std::vector<std::string>, std::vector<std::vector<double>>>
parse_csv_columns(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line))
    throw ValidationError("csv: empty file");
  std::vector<std::string> names;
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) names.push_back(cell);
  std::vector<std::vector<double>> cols(names.size());
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    for (std::size_t c = 0; c < names.size(); ++c) {
      if (!std::getline(ls, cell, ','))
        throw ValidationError("csv: short row: " + line);
      cols[c].push_back(std::stod(cell));
    }
  }
  return {names, cols};
}

}  // namespace detail

// Renders deterministic figures for a run directory: loss curves for each
// *_log.csv, one overlay of every *spectrum*.csv with shaded detected
// bandgaps, and a plots/manifest.json hashing every emitted file. Rerunning
// on unchanged inputs reproduces byte-identical output.
inline nlohmann::json emit_plots(const fs::path& run_dir) {
  if (!fs::exists(run_dir))
    throw ValidationError("emit_plots: no such run dir " + run_dir.string());
  fs::path plot_dir = run_dir / "plots";
  fs::create_directories(plot_dir);
  nlohmann::json files = nlohmann::json::object();
  nlohmann::json sources = nlohmann::json::array();

  auto emit = [&](const fs::path& p, const std::string& content) {
    train::write_file(p, content);
    files[fs::relative(p, run_dir).generic_string()] = io::sha256_hex(content);
  };

  std::vector<fs::path> logs, spectra;
  for (const auto& e : fs::directory_iterator(run_dir)) {
    if (!e.is_regular_file()) continue;
    std::string name = e.path().filename().string();
    if (name.size() > 8 && name.substr(name.size() - 8) == "_log.csv")
      logs.push_back(e.path());
    else if (name.size() > 4 && name.find("spectrum") != std::string::npos &&
             name.substr(name.size() - 4) == ".csv")
      spectra.push_back(e.path());
  }
  std::sort(logs.begin(), logs.end());
  std::sort(spectra.begin(), spectra.end());
  if (logs.empty() && spectra.empty())
    throw ValidationError("emit_plots: no plottable artifacts in " +
                          run_dir.string());

  for (const auto& p : logs) {
    auto [names, cols] = detail::parse_csv_columns(train::read_file(p));
    if (names.empty() || cols[0].empty() || names[0] != "epoch") continue;
    std::vector<svg::Series> series;
    for (std::size_t c = 1; c < names.size(); ++c)
      series.push_back({names[c], cols[0], cols[c]});
    std::string stem = p.stem().string();
    emit(plot_dir / (stem + ".svg"),
         svg::line_chart(stem, "epoch", "value", series));
    sources.push_back(p.filename().string());
  }

  if (!spectra.empty()) {
    std::vector<svg::Series> series;
    std::vector<fem::Bandgap> shaded;
    for (const auto& p : spectra) {
      std::vector<double> freqs;
      std::vector<double> amps =
          train::parse_spectrum_csv(train::read_file(p), &freqs);
      std::string stem = p.stem().string();
      series.push_back({stem, freqs, amps});
      for (const auto& g : fem::detect_bandgaps(freqs, amps))
        shaded.push_back(g);
      sources.push_back(p.filename().string());
    }
    emit(plot_dir / "spectra.svg",
         svg::line_chart("transmissibility", "frequency (Hz)", "dB", series,
                         shaded));
  }

  nlohmann::json manifest;
  manifest["sources"] = sources;
  manifest["files"] = files;
  train::write_file(plot_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace bandforge::analysis
