#pragma once

// Built-in analytic surfaces, addressable by name and a parameter list.

#include "deltasurf/geometry.hpp"

#include <map>
#include <string>
#include <vector>

namespace deltasurf {

using CatalogParams = std::map<std::string, std::vector<double>>;

inline SurfacePatch flat_disk(double radius = 1.0, Vec2 center = Vec2::Zero()) {
  require(radius > 0.0, ErrorKind::InvalidArgument, "disk radius must be positive");
  return {std::make_shared<PlaneChart>(), DiskDomain{center, radius}, +1, "flat_disk"};
}

inline SurfacePatch flat_rectangle(double width = 1.0, double height = 1.0) {
  require(width > 0.0 && height > 0.0, ErrorKind::InvalidArgument, "rectangle sides must be positive");
  return {std::make_shared<PlaneChart>(), RectDomain{{0.0, 0.0}, {width, height}}, +1, "flat_rectangle"};
}

inline SurfacePatch flat_polygon(std::vector<Vec2> vertices) {
  require(vertices.size() >= 3, ErrorKind::InvalidArgument, "polygon needs at least three vertices");
  if (polygon_signed_area(vertices) < 0.0) std::reverse(vertices.begin(), vertices.end());
  return {std::make_shared<PlaneChart>(), PolygonDomain{std::move(vertices)}, +1, "flat_polygon"};
}

/// Spherical cap {polar angle < polar_angle} of the sphere of radius R,
/// outward normal. polar_angle = pi/2 gives the hemisphere.
inline SurfacePatch spherical_cap(double radius, double polar_angle) {
  require(polar_angle > 0.0 && polar_angle < kPi, ErrorKind::InvalidArgument, "cap polar angle must be in (0, pi)");
  return {std::make_shared<GeodesicCapChart>(radius), DiskDomain{Vec2::Zero(), radius * polar_angle}, +1,
          "spherical_cap"};
}

inline SurfacePatch torus_patch(double major, double minor, Vec2 theta_range, Vec2 phi_range) {
  require(theta_range.y() > theta_range.x() && theta_range.y() - theta_range.x() < 2.0 * kPi,
          ErrorKind::InvalidArgument, "torus theta range must be shorter than 2 pi");
  require(phi_range.y() > phi_range.x() && phi_range.y() - phi_range.x() < 2.0 * kPi, ErrorKind::InvalidArgument,
          "torus phi range must be shorter than 2 pi");
  return {std::make_shared<TorusChart>(major, minor),
          RectDomain{{theta_range.x(), phi_range.x()}, {theta_range.y(), phi_range.y()}}, +1, "torus_patch"};
}

inline SurfacePatch paraboloid_patch(double a, double b, double radius) {
  require(radius > 0.0, ErrorKind::InvalidArgument, "paraboloid radius must be positive");
  return {std::make_shared<ParaboloidChart>(a, b), DiskDomain{Vec2::Zero(), radius}, +1, "paraboloid"};
}

/// Closed sphere as a six-chart cube-sphere atlas, outward normal.
inline Surface closed_sphere(double radius = 1.0) {
  Surface s;
  s.closed = true;
  s.name = "sphere";
  for (int f = 0; f < 6; ++f)
    s.patches.push_back({std::make_shared<CubeFaceChart>(radius, f), RectDomain{{-1.0, -1.0}, {1.0, 1.0}}, +1,
                         "sphere_face_" + std::to_string(f)});
  return s;
}

inline double catalog_param(const CatalogParams& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  require(it->second.size() == 1, ErrorKind::Config, "parameter '" + key + "' expects one value");
  return it->second.front();
}

inline std::vector<std::string> catalog_names() {
  return {"flat_disk", "flat_rectangle", "flat_polygon", "spherical_cap", "hemisphere", "torus_patch", "paraboloid",
          "sphere"};
}

/// Construct a catalog surface. Unknown names and malformed parameters raise
/// ErrorKind::Config.
inline Surface make_surface(const std::string& name, const CatalogParams& p) {
  auto num = [&](const std::string& k, double d) { return catalog_param(p, k, d); };
  if (name == "flat_disk") return flat_disk(num("radius", 1.0));
  if (name == "flat_rectangle") return flat_rectangle(num("width", 1.0), num("height", 1.0));
  if (name == "flat_polygon") {
    auto it = p.find("vertices");
    require(it != p.end() && it->second.size() >= 6 && it->second.size() % 2 == 0, ErrorKind::Config,
            "flat_polygon needs 'vertices' as an even list of at least six numbers");
    std::vector<Vec2> v;
    for (std::size_t i = 0; i < it->second.size(); i += 2) v.emplace_back(it->second[i], it->second[i + 1]);
    return flat_polygon(std::move(v));
  }
  if (name == "spherical_cap") return spherical_cap(num("radius", 1.0), num("polar_angle", kPi / 2));
  if (name == "hemisphere") {
    SurfacePatch cap = spherical_cap(num("radius", 1.0), kPi / 2);
    cap.name = "hemisphere";
    return cap;
  }
  if (name == "torus_patch") {
    return torus_patch(num("major_radius", 2.0), num("minor_radius", 1.0),
                       {num("theta_min", -1.0), num("theta_max", 1.0)}, {num("phi_min", -1.0), num("phi_max", 1.0)});
  }
  if (name == "paraboloid") return paraboloid_patch(num("a", 1.0), num("b", 0.5), num("radius", 1.0));
  if (name == "sphere") return closed_sphere(num("radius", 1.0));
  throw Error(ErrorKind::Config, "unknown surface '" + name + "'");
}

}  // namespace deltasurf
