#pragma once
// Dataset generation and loading. Each sample is a directory holding the
// lattice spec, the rendered raster (PNG preview + raw float32), the femlite
// transmissibility spectrum, and the material record; a top-level
// manifest.json carries per-file hashes, the corpus normalization statistics,
// and a dataset-level content hash. Generation is resumable: samples whose
// files verify against their checksums are skipped, partial or corrupt
// directories are moved to quarantine/ and rebuilt.

#include <atomic>
#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "bandforge/fem/modal.hpp"
#include "bandforge/fem/model.hpp"
#include "bandforge/fem/spectrum.hpp"
#include "bandforge/geom/panel.hpp"
#include "bandforge/geom/raster.hpp"
#include "bandforge/io/png.hpp"
#include "bandforge/io/sha256.hpp"
#include "bandforge/models/normalizer.hpp"

extern "C" void openblas_set_num_threads(int);

namespace bandforge::train {

namespace fs = std::filesystem;

struct DatasetConfig {
  int n = 720;
  std::uint64_t seed = 1;
  fem::Material material;  // PLA defaults
  int raster_w = 256, raster_h = 128;
  double f_max_hz = 10000.0;
  int jobs = 1;
  bool quiet = false;
};

inline constexpr int kDatasetFormatVersion = 1;
inline const char* const kSampleFiles[] = {"spec.json", "raster.png",
                                           "raster.f32", "spectrum.csv",
                                           "material.json"};

inline std::string sample_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%04d", index);
  return buf;
}

// ---- file codecs -----------------------------------------------------------

inline std::string spectrum_csv(const std::vector<double>& freqs,
                                const std::vector<double>& amps) {
  if (freqs.size() != amps.size())
    throw ValidationError("spectrum_csv: axis/amplitude length mismatch");
  std::string out = "freq_hz,amp_db\n";
  char line[64];
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    std::snprintf(line, sizeof line, "%.10g,%.10g\n", freqs[i], amps[i]);
    out += line;
  }
  return out;
}

inline std::vector<double> parse_spectrum_csv(const std::string& text,
                                              std::vector<double>* freqs = nullptr) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "freq_hz,amp_db")
    throw ValidationError("spectrum csv: missing freq_hz,amp_db header");
  std::vector<double> amps;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ValidationError("spectrum csv: malformed row: " + line);
    double f = std::stod(line.substr(0, comma));
    double a = std::stod(line.substr(comma + 1));
    if (!std::isfinite(f) || !std::isfinite(a))
      throw ValidationError("spectrum csv: non-finite value");
    if (freqs) freqs->push_back(f);
    amps.push_back(a);
  }
  return amps;
}

inline std::string raster_f32_bytes(const geom::Raster& r) {
  static_assert(std::endian::native == std::endian::little,
                "raster.f32 is little-endian");
  std::string out(r.v.size() * 4, '\0');
  std::memcpy(out.data(), r.v.data(), out.size());
  return out;
}

inline geom::Raster parse_raster_f32(const std::string& bytes, int w, int h) {
  if (bytes.size() != std::size_t(w) * h * 4)
    throw ValidationError("raster.f32: size does not match " +
                          std::to_string(w) + "x" + std::to_string(h));
  geom::Raster r;
  r.width = w;
  r.height = h;
  r.v.resize(std::size_t(w) * h);
  std::memcpy(r.v.data(), bytes.data(), bytes.size());
  return r;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw ValidationError("cannot read " + p.string());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

inline void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw ValidationError("cannot write " + p.string());
  os.write(bytes.data(), long(bytes.size()));
  if (!os) throw ValidationError("write failed for " + p.string());
}

// ---- generation ------------------------------------------------------------

struct BuiltSample {
  geom::LatticeSpec spec;
  geom::Raster raster;
  std::vector<double> amps_db;
};

// Pure per-index builder: geometry -> raster -> modal solve -> spectrum.
inline BuiltSample build_sample(const DatasetConfig& cfg, int index) {
  BuiltSample out;
  out.spec = geom::enumerate_sample(cfg.seed, std::uint64_t(index));
  geom::BeamGraph g = geom::build_panel(out.spec);
  out.raster = geom::rasterize(g, cfg.raster_w, cfg.raster_h);
  fem::Assembled a = fem::assemble(g, cfg.material);
  fem::ModalResult md = fem::modal(a, cfg.f_max_hz);
  out.amps_db =
      fem::transmissibility(a, md, fem::standard_freqs(), cfg.material.damping);
  return out;
}

namespace detail {

// File-name -> sha256 map for one on-disk sample, or empty if anything is
// missing/unreadable.
inline nlohmann::json hash_sample_dir(const fs::path& dir) {
  nlohmann::json files = nlohmann::json::object();
  for (const char* name : kSampleFiles) {
    fs::path p = dir / name;
    if (!fs::exists(p)) return nlohmann::json::object();
    files[name] = io::sha256_hex(read_file(p));
  }
  return files;
}

// A sample directory is complete iff its files hash to the values recorded in
// its checksums.json and the spec content identifies the expected sample.
inline bool sample_complete(const fs::path& dir,
                            const geom::LatticeSpec& expected) {
  if (!fs::exists(dir / "checksums.json")) return false;
  nlohmann::json want;
  try {
    want = nlohmann::json::parse(read_file(dir / "checksums.json"));
  } catch (...) {
    return false;
  }
  nlohmann::json got = hash_sample_dir(dir);
  if (got.empty() || got != want["files"]) return false;
  try {
    auto spec = geom::lattice_spec_from_json(
        nlohmann::json::parse(read_file(dir / "spec.json")));
    return geom::spec_hash(spec) == geom::spec_hash(expected);
  } catch (...) {
    return false;
  }
}

inline void quarantine(const fs::path& root, const fs::path& dir) {
  fs::path qdir = root / "quarantine";
  fs::create_directories(qdir);
  fs::path base = qdir / dir.filename();
  fs::path target = base;
  for (int k = 1; fs::exists(target); ++k)
    target = base.string() + "." + std::to_string(k);
  fs::rename(dir, target);
}

}  // namespace detail

// Writes one sample directory (files + checksums.json). Returns the manifest
// entry for the sample.
inline nlohmann::json write_sample(const fs::path& root,
                                   const DatasetConfig& cfg, int index,
                                   const BuiltSample& s) {
  fs::path dir = root / sample_dir_name(index);
  fs::create_directories(dir);
  write_file(dir / "spec.json", geom::canonical_spec_json(s.spec));
  write_file(dir / "raster.png",
             io::encode_png_gray8(geom::raster_to_u8(s.raster), s.raster.width,
                                  s.raster.height));
  write_file(dir / "raster.f32", raster_f32_bytes(s.raster));
  write_file(dir / "spectrum.csv", spectrum_csv(fem::standard_freqs(), s.amps_db));
  write_file(dir / "material.json", fem::to_json(cfg.material).dump(2) + "\n");

  nlohmann::json entry;
  entry["index"] = index;
  entry["dir"] = sample_dir_name(index);
  entry["spec_sha256"] = geom::spec_hash(s.spec);
  entry["files"] = detail::hash_sample_dir(dir);
  // checksums.json marks completion; written last.
  write_file(dir / "checksums.json", entry.dump(2) + "\n");
  return entry;
}

// Generates (or resumes) the corpus and writes manifest.json. Returns the
// manifest. Deterministic for fixed (seed, n, material): the manifest's
// dataset_sha256 is identical across reruns and worker counts.
inline nlohmann::json generate_dataset(const fs::path& root,
                                       const DatasetConfig& cfg) {
  if (cfg.n <= 0) throw ValidationError("dataset: n must be positive");
  fem::validate_material(cfg.material);
  fs::create_directories(root);
  openblas_set_num_threads(1);  // per-sample solves stay deterministic

  // Resume scan: decide per sample whether the on-disk copy is reusable.
  std::vector<bool> todo(std::size_t(cfg.n), true);
  for (int i = 0; i < cfg.n; ++i) {
    fs::path dir = root / sample_dir_name(i);
    if (!fs::exists(dir)) continue;
    auto expected = geom::enumerate_sample(cfg.seed, std::uint64_t(i));
    if (detail::sample_complete(dir, expected))
      todo[std::size_t(i)] = false;
    else
      detail::quarantine(root, dir);
  }

  std::atomic<int> next{0}, done{0};
  std::mutex io_mu;
  std::vector<std::string> errors;
  int workers = std::max(1, cfg.jobs);
  auto worker = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= cfg.n) return;
      if (!todo[std::size_t(i)]) continue;
      try {
        BuiltSample s = build_sample(cfg, i);
        std::lock_guard<std::mutex> lk(io_mu);
        write_sample(root, cfg, i, s);
        int d = ++done;
        if (!cfg.quiet)
          std::fprintf(stderr, "[gen] %s done (%d built)\n",
                       sample_dir_name(i).c_str(), d);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(io_mu);
        errors.push_back(sample_dir_name(i) + ": " + e.what());
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (!errors.empty()) {
    std::string msg = "dataset generation failed for " +
                      std::to_string(errors.size()) + " sample(s):";
    for (const auto& e : errors) msg += "\n  " + e;
    throw NumericError(msg);
  }

  // Finalize: collect per-sample entries and corpus statistics from disk so
  // resumed and fresh runs produce identical manifests.
  nlohmann::json samples = nlohmann::json::array();
  double db_min = 1e300, db_max = -1e300;
  std::string hash_feed;
  for (int i = 0; i < cfg.n; ++i) {
    fs::path dir = root / sample_dir_name(i);
    nlohmann::json entry =
        nlohmann::json::parse(read_file(dir / "checksums.json"));
    for (double a : parse_spectrum_csv(read_file(dir / "spectrum.csv"))) {
      db_min = std::min(db_min, a);
      db_max = std::max(db_max, a);
    }
    hash_feed += std::to_string(i) + ":" + entry["spec_sha256"].get<std::string>();
    for (const char* name : kSampleFiles)
      hash_feed += ":" + entry["files"][name].get<std::string>();
    hash_feed += "\n";
    samples.push_back(std::move(entry));
  }

  nlohmann::json manifest;
  manifest["format_version"] = kDatasetFormatVersion;
  manifest["seed"] = cfg.seed;
  manifest["n"] = cfg.n;
  manifest["material"] = fem::to_json(cfg.material);
  manifest["raster"] = {{"width", cfg.raster_w}, {"height", cfg.raster_h}};
  manifest["axis"] = {{"f_lo_hz", 10.0}, {"f_hi_hz", 10000.0}, {"bins", 1000}};
  manifest["normalization"] = {{"spec_db_min", db_min},
                               {"spec_db_max", db_max}};
  manifest["samples"] = samples;
  manifest["dataset_sha256"] = io::sha256_hex(hash_feed);
  write_file(root / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

// ---- loading ---------------------------------------------------------------

struct Sample {
  int index = 0;
  geom::LatticeSpec spec;
  nn::Tensor<float> raster;        // (1,H,W) in [-1,1]
  std::vector<double> spectrum_db;  // 1000 bins
};

struct Dataset {
  nlohmann::json manifest;
  fem::Material material;
  models::NormStats norm;
  int raster_w = 0, raster_h = 0;
  std::vector<Sample> samples;

  nn::Tensor<float> normalized_spectrum(int i) const {
    return models::normalize_spectrum<float>(
        samples[std::size_t(i)].spectrum_db, norm);
  }
  nn::Tensor<float> material_features() const {
    return models::material_tensor<float>(material);
  }
};

// Loads manifest + all samples into memory, verifying file hashes.
inline Dataset load_dataset(const fs::path& root) {
  Dataset d;
  d.manifest = nlohmann::json::parse(read_file(root / "manifest.json"));
  if (d.manifest.at("format_version").get<int>() != kDatasetFormatVersion)
    throw ConfigError("dataset: unsupported format version");
  d.material = fem::material_from_json(d.manifest.at("material"));
  d.norm.spec_db_min =
      d.manifest.at("normalization").at("spec_db_min").get<double>();
  d.norm.spec_db_max =
      d.manifest.at("normalization").at("spec_db_max").get<double>();
  models::validate(d.norm);
  d.raster_w = d.manifest.at("raster").at("width").get<int>();
  d.raster_h = d.manifest.at("raster").at("height").get<int>();

  for (const auto& entry : d.manifest.at("samples")) {
    fs::path dir = root / entry.at("dir").get<std::string>();
    Sample s;
    s.index = entry.at("index").get<int>();
    std::string spec_text = read_file(dir / "spec.json");
    std::string f32 = read_file(dir / "raster.f32");
    std::string csv = read_file(dir / "spectrum.csv");
    if (io::sha256_hex(spec_text) !=
            entry.at("files").at("spec.json").get<std::string>() ||
        io::sha256_hex(f32) !=
            entry.at("files").at("raster.f32").get<std::string>() ||
        io::sha256_hex(csv) !=
            entry.at("files").at("spectrum.csv").get<std::string>())
      throw ConfigError("dataset: checksum mismatch in " + dir.string());
    s.spec = geom::lattice_spec_from_json(nlohmann::json::parse(spec_text));
    geom::Raster r = parse_raster_f32(f32, d.raster_w, d.raster_h);
    s.raster = nn::Tensor<float>({1, d.raster_h, d.raster_w}, std::move(r.v));
    s.spectrum_db = parse_spectrum_csv(csv);
    if (s.spectrum_db.size() != 1000)
      throw ValidationError("dataset: spectrum must have 1000 bins");
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace bandforge::train
