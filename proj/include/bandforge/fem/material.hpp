#pragma once

#include <json.hpp>

#include <array>

#include "bandforge/common.hpp"

namespace bandforge::fem {

// Isotropic solid properties. damping is the modal damping ratio applied
// uniformly to all retained modes.
struct Material {
  double E = 3.5e9;      // Pa
  double rho = 1240.0;   // kg/m^3
  double nu = 0.35;
  double damping = 0.001;
};

inline void validate_material(const Material& m) {
  if (!(m.E > 0)) throw ValidationError("material: E must be positive");
  if (!(m.rho > 0)) throw ValidationError("material: rho must be positive");
  if (m.nu < 0 || m.nu >= 0.5)
    throw ValidationError("material: nu must be in [0, 0.5)");
  if (m.damping < 0 || m.damping >= 1)
    throw ValidationError("material: damping must be in [0, 1)");
}

inline nlohmann::json to_json(const Material& m) {
  return {{"E", m.E}, {"rho", m.rho}, {"nu", m.nu}, {"damping", m.damping}};
}

inline Material material_from_json(const nlohmann::json& j) {
  Material m;
  try {
    m.E = j.at("E").get<double>();
    m.rho = j.at("rho").get<double>();
    m.nu = j.at("nu").get<double>();
    m.damping = j.at("damping").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("material: malformed JSON: ") + e.what());
  }
  validate_material(m);
  return m;
}

// Normalized features fed to the networks: (E/1e9, rho/1e3, nu, 1e3*damping).
inline std::array<double, 4> normalized_material(const Material& m) {
  return {m.E / 1e9, m.rho / 1e3, m.nu, 1e3 * m.damping};
}

}  // namespace bandforge::fem
