#pragma once
// Run configuration shared by the command-line tools: one JSON document,
// validated field by field.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "carleman.hpp"
#include "evolution.hpp"
#include "io.hpp"
#include "observability.hpp"

namespace degenlab {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SpectrumConfig {
  int modes = 10;
  int hardy_bumps = 10;
  std::uint32_t seed = 7;
  bool export_matrices = false;
};

struct SolveConfig {
  int y0_mode = 1;  // terminal/initial data: this eigenvector
  int duality_pairs = 5;
  std::uint32_t seed = 11;
};

struct SweepConfig {
  std::vector<double> deltas;
  Vec2 y0_center{0.0, 0.5};
  double y0_radius = 0.3;
};

struct CarlemanConfig {
  std::vector<double> s_grid{1.0, 2.0, 4.0, 8.0, 16.0};
  int samples = 5;
  int modes = 10;
  std::uint32_t seed = 42;
  double theta_exponent = 4.0;
  double fd_step = 1e-4;
  int identity_points = 100;
  double conjugation_T = 0.0;  // 0: the run's T
  std::vector<double> conjugation_s{0.0, 1.0, 2.0};
};

struct RunConfig {
  json source;  // the document as read, echoed into the manifest
  DomainSpec domain;
  double alpha = 0.5;
  double T = 1.0;
  MeshOptions mesh;
  int steps = 64;
  SpectrumConfig spectrum;
  SolveConfig solve;
  SweepConfig sweep;
  CarlemanConfig carleman;
  EnsembleSpec ensemble;
  std::filesystem::path output = "out";
  bool timing = false;

  TimeGrid grid() const { return {T, steps}; }
};

namespace detail {

template <class V>
V field(const json& j, const std::string& key, const std::string& path, V fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + path + key + "' has the wrong type");
  }
}

inline DomainKind domain_kind(const std::string& name) {
  if (name == "flat_bottom_rect") return DomainKind::flat_bottom_rect;
  if (name == "notched_polygon") return DomainKind::notched_polygon;
  if (name == "custom") return DomainKind::custom;
  throw ConfigError("config field 'domain.kind' must be flat_bottom_rect, notched_polygon or custom");
}

inline DomainSpec parse_domain(const json& j, const std::filesystem::path& base) {
  if (!j.is_object()) throw ConfigError("config field 'domain' must be an object");
  try {
    if (j.contains("file")) {
      std::filesystem::path p = j.at("file").get<std::string>();
      if (p.is_relative()) p = base / p;
      return domain_from_json(read_json(p));
    }
    if (j.contains("vertices")) return domain_from_json(j);
    DomainParams params;
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.value().is_number()) params[it.key()] = it.value().get<double>();
    return build_canonical_domain(domain_kind(field<std::string>(j, "kind", "domain.", "flat_bottom_rect")), params);
  } catch (const GeometryError& e) {
    throw ConfigError(std::string("config field 'domain' is invalid: ") + e.what());
  } catch (const IoError& e) {
    throw ConfigError(std::string("config field 'domain': ") + e.what());
  }
}

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace detail

/// Parses and validates a configuration document. A relative domain file
/// resolves against `base` (the directory of the config file); the output
/// directory resolves against the working directory.
inline RunConfig parse_config(const json& j, const std::filesystem::path& base = ".") {
  using detail::field;
  using detail::require;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  c.source = j;
  c.domain = detail::parse_domain(j.value("domain", json::object()), base);

  c.alpha = field(j, "alpha", "", 0.5);
  require(c.alpha > 0.0 && c.alpha < 1.0, "config field 'alpha' must lie in (0, 1)");
  c.T = field(j, "T", "", 1.0);
  require(c.T > 0.0, "config field 'T' must be positive");

  const json mj = j.value("mesh", json::object());
  c.mesh.h = field(mj, "h", "mesh.", 0.05);
  require(c.mesh.h > 0.0, "config field 'mesh.h' must be positive");
  c.mesh.grading_exponent = field(mj, "grading_exponent", "mesh.", 1.0);
  require(c.mesh.grading_exponent >= 1.0, "config field 'mesh.grading_exponent' must be at least 1");

  const json tj = j.value("time", json::object());
  c.steps = field(tj, "steps", "time.", 64);
  require(c.steps >= 16, "config field 'time.steps' must be at least 16");

  const json sj = j.value("spectrum", json::object());
  c.spectrum.modes = field(sj, "modes", "spectrum.", 10);
  require(c.spectrum.modes >= 1, "config field 'spectrum.modes' must be at least 1");
  c.spectrum.hardy_bumps = field(sj, "hardy_bumps", "spectrum.", 10);
  require(c.spectrum.hardy_bumps >= 0, "config field 'spectrum.hardy_bumps' must be nonnegative");
  c.spectrum.seed = field(sj, "seed", "spectrum.", 7u);
  c.spectrum.export_matrices = field(sj, "export_matrices", "spectrum.", false);

  const json vj = j.value("solve", json::object());
  c.solve.y0_mode = field(vj, "y0_mode", "solve.", 1);
  require(c.solve.y0_mode >= 1 && c.solve.y0_mode <= c.spectrum.modes,
          "config field 'solve.y0_mode' must lie in [1, spectrum.modes]");
  c.solve.duality_pairs = field(vj, "duality_pairs", "solve.", 5);
  require(c.solve.duality_pairs >= 1, "config field 'solve.duality_pairs' must be at least 1");
  c.solve.seed = field(vj, "seed", "solve.", 11u);

  if (j.contains("sweep")) {
    const json wj = j.at("sweep");
    c.sweep.deltas = field(wj, "deltas", "sweep.", std::vector<double>{});
    require(!c.sweep.deltas.empty(), "config field 'sweep.deltas' must be a nonempty list");
    for (double d : c.sweep.deltas)
      require(d > 0.0 && d < sweep_delta_limit(c.domain),
              "config field 'sweep.deltas' has a value outside (0, R0/4)");
    if (wj.contains("y0")) {
      const json yj = wj.at("y0");
      const auto ctr = field(yj, "center", "sweep.y0.", std::vector<double>{0.0, 0.5});
      require(ctr.size() == 2, "config field 'sweep.y0.center' must be [x, y]");
      c.sweep.y0_center = {ctr[0], ctr[1]};
      c.sweep.y0_radius = field(yj, "radius", "sweep.y0.", 0.3);
      require(c.sweep.y0_radius > 0.0, "config field 'sweep.y0.radius' must be positive");
    }
  }

  const json cj = j.value("carleman", json::object());
  c.carleman.s_grid = field(cj, "s_grid", "carleman.", c.carleman.s_grid);
  require(c.carleman.s_grid.size() >= 5, "config field 'carleman.s_grid' needs at least five values");
  for (double s : c.carleman.s_grid) require(s > 0.0, "config field 'carleman.s_grid' values must be positive");
  c.carleman.samples = field(cj, "samples", "carleman.", 5);
  require(c.carleman.samples >= 1, "config field 'carleman.samples' must be at least 1");
  c.carleman.modes = field(cj, "modes", "carleman.", 10);
  require(c.carleman.modes >= 1, "config field 'carleman.modes' must be at least 1");
  c.carleman.seed = field(cj, "seed", "carleman.", 42u);
  c.carleman.theta_exponent = field(cj, "theta_exponent", "carleman.", 4.0);
  require(c.carleman.theta_exponent > 0.0, "config field 'carleman.theta_exponent' must be positive");
  c.carleman.fd_step = field(cj, "fd_step", "carleman.", 1e-4);
  require(c.carleman.fd_step > 0.0, "config field 'carleman.fd_step' must be positive");
  c.carleman.identity_points = field(cj, "identity_points", "carleman.", 100);
  require(c.carleman.identity_points >= 1, "config field 'carleman.identity_points' must be at least 1");
  c.carleman.conjugation_T = field(cj, "conjugation_T", "carleman.", c.T);
  require(c.carleman.conjugation_T > 0.0, "config field 'carleman.conjugation_T' must be positive");
  c.carleman.conjugation_s = field(cj, "conjugation_s", "carleman.", c.carleman.conjugation_s);

  const json ej = j.value("ensemble", json::object());
  c.ensemble.modes = field(ej, "modes", "ensemble.", 10);
  require(c.ensemble.modes >= 1, "config field 'ensemble.modes' must be at least 1");
  c.ensemble.samples = field(ej, "samples", "ensemble.", 20);
  require(c.ensemble.samples >= 1, "config field 'ensemble.samples' must be at least 1");
  c.ensemble.seed = field(ej, "seed", "ensemble.", 42u);

  c.output = field<std::string>(j, "output", "", "out");
  c.timing = field(j, "timing", "", false);
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = read_json(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

}  // namespace degenlab
