#pragma once

// Run configuration: a flat `key = value` text format with [section] headers.
// '#' starts a comment. Values are kept as text with their line numbers so
// that validation errors can point back into the file.

#include "deltasurf/asymptotics.hpp"
#include "deltasurf/catalog.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace deltasurf {

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

struct ConfigSection {
  std::string name;
  std::vector<ConfigEntry> entries;
  int line = 0;
};

class ConfigText {
 public:
  std::string source = "<config>";
  std::vector<ConfigSection> sections;  // the unnamed leading section is ""

  const ConfigSection* section(const std::string& name) const {
    for (const auto& s : sections)
      if (s.name == name) return &s;
    return nullptr;
  }

  const ConfigEntry* find(const std::string& sec, const std::string& key) const {
    if (const ConfigSection* s = section(sec))
      for (const auto& e : s->entries)
        if (e.key == key) return &e;
    return nullptr;
  }

  [[noreturn]] void fail(int line, const std::string& message) const {
    throw Error(ErrorKind::Config, source + ":" + std::to_string(line) + ": " + message);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

}  // namespace detail

inline ConfigText parse_config(const std::string& text, const std::string& source = "<config>") {
  ConfigText cfg;
  cfg.source = source;
  cfg.sections.push_back({"", {}, 0});
  std::istringstream in(text);
  std::string raw;
  std::set<std::string> seen_sections{""};
  for (int line = 1; std::getline(in, raw); ++line) {
    std::string s = detail::trim(raw.substr(0, raw.find('#')));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') cfg.fail(line, "unterminated section header");
      const std::string name = detail::trim(s.substr(1, s.size() - 2));
      if (!detail::valid_identifier(name)) cfg.fail(line, "invalid section name '" + name + "'");
      if (!seen_sections.insert(name).second) cfg.fail(line, "duplicate section [" + name + "]");
      cfg.sections.push_back({name, {}, line});
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) cfg.fail(line, "expected 'key = value'");
    const std::string key = detail::trim(s.substr(0, eq)), value = detail::trim(s.substr(eq + 1));
    if (!detail::valid_identifier(key)) cfg.fail(line, "invalid key '" + key + "'");
    if (value.empty()) cfg.fail(line, "empty value for '" + key + "'");
    for (const auto& e : cfg.sections.back().entries)
      if (e.key == key) cfg.fail(line, "duplicate key '" + key + "'");
    cfg.sections.back().entries.push_back({key, value, line});
  }
  return cfg;
}

inline ConfigText load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, path + ": cannot open config file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path);
}

/// Canonical text: comments and blank lines dropped, whitespace normalized,
/// order kept. serialize(parse(serialize(parse(t)))) == serialize(parse(t)).
inline std::string serialize_config(const ConfigText& cfg) {
  std::ostringstream out;
  bool first = true;
  for (const auto& s : cfg.sections) {
    if (s.name.empty() && s.entries.empty()) continue;
    if (!s.name.empty()) {
      if (!first) out << '\n';
      out << '[' << s.name << "]\n";
    }
    for (const auto& e : s.entries) out << e.key << " = " << e.value << '\n';
    first = false;
  }
  return out.str();
}

inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string config_hash(const ConfigText& cfg) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << fnv1a(serialize_config(cfg));
  return out.str();
}

/// Typed view of the config with defaults for absent keys.
struct RunConfig {
  std::string surface_name;
  CatalogParams surface_params;
  MeshOptions mesh;
  FemOptions fem;
  int modes = 4;
  // bs-solve
  double beta = 8.0;
  int bound_states = 2;
  BoundStateOptions bound;
  int field_points = 0;
  // transverse
  std::vector<double> transverse_betas{4.0, 8.0, 16.0};
  std::vector<double> transverse_widths{1.0};
  // sweep
  SweepOptions sweep;
  bool separated_bound = false;
  bool write_csv = true;
  bool write_svg = true;
  std::uint64_t seed = 0;
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(const ConfigText& cfg) : cfg_(cfg) {}

  const ConfigEntry* get(const std::string& sec, const std::string& key) {
    used_.insert(sec + "." + key);
    return cfg_.find(sec, key);
  }

  std::vector<double> numbers(const ConfigEntry& e) {
    std::string s = e.value;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream in(s);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != tok.size() || !std::isfinite(v)) cfg_.fail(e.line, "'" + e.key + "': not a number: " + tok);
      out.push_back(v);
    }
    return out;
  }

  void number(const std::string& sec, const std::string& key, double& dst, bool positive = false) {
    if (const ConfigEntry* e = get(sec, key)) {
      const auto v = numbers(*e);
      if (v.size() != 1) cfg_.fail(e->line, "'" + key + "' expects one number");
      if (positive && !(v[0] > 0.0)) cfg_.fail(e->line, "'" + key + "' must be positive");
      dst = v[0];
    }
  }

  void integer(const std::string& sec, const std::string& key, int& dst, int min_value) {
    if (const ConfigEntry* e = get(sec, key)) {
      const auto v = numbers(*e);
      if (v.size() != 1 || v[0] != std::floor(v[0])) cfg_.fail(e->line, "'" + key + "' expects one integer");
      if (v[0] < min_value) cfg_.fail(e->line, "'" + key + "' must be at least " + std::to_string(min_value));
      dst = static_cast<int>(v[0]);
    }
  }

  void list(const std::string& sec, const std::string& key, std::vector<double>& dst, bool increasing) {
    if (const ConfigEntry* e = get(sec, key)) {
      auto v = numbers(*e);
      if (v.empty()) cfg_.fail(e->line, "'" + key + "' expects a list of numbers");
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] > 0.0)) cfg_.fail(e->line, "'" + key + "' entries must be positive");
        if (increasing && i > 0 && !(v[i] > v[i - 1])) cfg_.fail(e->line, "'" + key + "' must be strictly increasing");
      }
      dst = std::move(v);
    }
  }

  void flag(const std::string& sec, const std::string& key, bool& dst) {
    if (const ConfigEntry* e = get(sec, key)) {
      if (e->value == "true" || e->value == "1") dst = true;
      else if (e->value == "false" || e->value == "0") dst = false;
      else cfg_.fail(e->line, "'" + key + "' expects true or false");
    }
  }

  void mark_section_used(const std::string& sec) {
    if (const ConfigSection* s = cfg_.section(sec))
      for (const auto& e : s->entries) used_.insert(sec + "." + e.key);
  }

  void reject_unknown() const {
    for (const auto& s : cfg_.sections) {
      if (!s.name.empty() && !known_sections().count(s.name)) cfg_.fail(s.line, "unknown section [" + s.name + "]");
      for (const auto& e : s.entries)
        if (!used_.count(s.name + "." + e.key))
          cfg_.fail(e.line, "unknown key '" + e.key + "'" + (s.name.empty() ? "" : " in [" + s.name + "]"));
    }
  }

  const ConfigText& text() const { return cfg_; }

 private:
  static const std::set<std::string>& known_sections() {
    static const std::set<std::string> names{"surface", "mesh", "solver", "bs", "transverse", "sweep", "output"};
    return names;
  }

  const ConfigText& cfg_;
  std::set<std::string> used_;
};

}  // namespace detail

inline RunConfig read_run_config(const ConfigText& cfg) {
  RunConfig rc;
  detail::ConfigReader r(cfg);

  if (const ConfigEntry* e = r.get("", "seed")) {
    const auto v = r.numbers(*e);
    if (v.size() != 1 || v[0] < 0 || v[0] != std::floor(v[0])) cfg.fail(e->line, "'seed' expects a nonnegative integer");
    rc.seed = static_cast<std::uint64_t>(v[0]);
  }

  // surface: name plus free-form numeric parameters handed to the catalog
  const ConfigEntry* name = r.get("surface", "name");
  if (!name) cfg.fail(cfg.section("surface") ? cfg.section("surface")->line : 1, "missing 'name' in [surface]");
  rc.surface_name = name->value;
  if (const ConfigSection* s = cfg.section("surface"))
    for (const auto& e : s->entries)
      if (e.key != "name") rc.surface_params[e.key] = r.numbers(e);
  r.mark_section_used("surface");
  try {
    make_surface(rc.surface_name, rc.surface_params);
  } catch (const Error& err) {
    cfg.fail(name->line, err.what());
  }

  r.number("mesh", "target_h", rc.mesh.target_h, true);
  r.number("mesh", "boundary_h", rc.mesh.boundary_h);
  rc.fem.target_h = rc.mesh.target_h;
  rc.fem.boundary_h = rc.mesh.boundary_h;
  r.integer("mesh", "levels", rc.fem.levels, 1);

  r.number("solver", "fem_tolerance", rc.fem.tolerance, true);
  r.integer("solver", "modes", rc.modes, 1);
  r.number("solver", "bem_tolerance", rc.bound.tolerance, true);
  r.integer("solver", "max_iterations", rc.bound.max_iterations, 1);

  r.number("bs", "beta", rc.beta, true);
  r.integer("bs", "count", rc.bound_states, 1);
  r.integer("bs", "field_points", rc.field_points, 0);

  r.list("transverse", "betas", rc.transverse_betas, true);
  r.list("transverse", "widths", rc.transverse_widths, false);

  SweepOptions& sw = rc.sweep;
  sw.fem = rc.fem;
  sw.bound_states.tolerance = 1e-10;
  r.list("sweep", "betas", sw.betas, true);
  r.integer("sweep", "j_max", sw.j_max, 1);
  r.number("sweep", "h_max", sw.h_max, true);
  r.number("sweep", "mesh_scale", sw.mesh_scale, true);
  r.number("sweep", "tolerance", sw.bound_states.tolerance, true);
  sw.boundary_h = rc.mesh.boundary_h;
  r.flag("sweep", "separated_bound", rc.separated_bound);
  const ConfigEntry* xi = r.get("sweep", "xi");
  r.number("sweep", "xi", sw.xi);
  if (const ConfigEntry* c = r.get("sweep", "c_geom")) {
    const auto v = r.numbers(*c);
    if (v.size() != 1) cfg.fail(c->line, "'c_geom' expects one number");
    sw.geometry_constant = v[0];
  }
  if (rc.separated_bound) {
    const ConfigSection* s = cfg.section("sweep");
    if (sw.xi < 6.0) cfg.fail(xi ? xi->line : s->line, "xi must be at least 6 when the separated bound is requested");
    if (!sw.geometry_constant) cfg.fail(s->line, "the separated bound needs 'c_geom'");
  } else {
    sw.geometry_constant.reset();
  }

  if (const ConfigEntry* f = r.get("output", "formats")) {
    rc.write_csv = rc.write_svg = false;
    std::istringstream in(f->value);
    std::string tok;
    while (in >> tok) {
      if (tok == "csv") rc.write_csv = true;
      else if (tok == "svg") rc.write_svg = true;
      else cfg.fail(f->line, "unknown output format '" + tok + "'");
    }
  }

  r.reject_unknown();
  return rc;
}

}  // namespace deltasurf
