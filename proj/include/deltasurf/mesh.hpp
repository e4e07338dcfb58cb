#pragma once

// Triangulations of parameter domains lifted to the surface, with quadrature
// nodes that carry the surface measure sqrt(g) dy.

#include "deltasurf/delaunay.hpp"
#include "deltasurf/geometry.hpp"
#include "deltasurf/quadrature.hpp"

#include <array>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

namespace deltasurf {

struct MeshOptions {
  double target_h = 0.1;
  /// Mesh spacing normal to the boundary; 0 disables boundary grading.
  double boundary_h = 0.0;
  /// Geometric growth of the spacing away from the boundary.
  double grading = 1.3;
  /// Tangential over normal spacing allowed inside the graded layer.
  double tangential_aspect = 1.0;
};

struct MeshVertex {
  Vec3 point;
  int patch = 0;
  Vec2 param;
  GeometryJet jet;
  bool boundary = false;
};

struct MeshTriangle {
  std::array<int, 3> v;
  int patch = 0;
  std::array<Vec2, 3> param;  // counterclockwise in the patch parameter plane

  double param_area() const {
    return 0.5 * ((param[1] - param[0]).x() * (param[2] - param[0]).y() -
                  (param[1] - param[0]).y() * (param[2] - param[0]).x());
  }
  Vec2 param_at(const Vec2& st) const {
    return param[0] + st.x() * (param[1] - param[0]) + st.y() * (param[2] - param[0]);
  }
};

struct QuadNode {
  Vec3 point;
  Vec3 normal;
  Vec3 bary;
  double weight = 0.0;  // includes sqrt(g) and the parameter area
  double potential = 0.0;
};

class SurfaceMesh {
 public:
  Surface surface;
  std::vector<MeshVertex> vertices;
  std::vector<MeshTriangle> triangles;
  std::vector<int> boundary_vertices;
  /// Degree-4 quadrature, `nodes_per_triangle` consecutive entries per triangle.
  std::vector<QuadNode> quad;
  static constexpr int nodes_per_triangle = 6;
  double target_h = 0.0;

  const SurfacePatch& patch_of(const MeshTriangle& t) const { return surface.patches[t.patch]; }

  double area() const {
    double a = 0.0;
    for (const QuadNode& q : quad) a += q.weight;
    return a;
  }

  double max_edge_length() const {
    double m = 0.0;
    for (const auto& t : triangles)
      for (int e = 0; e < 3; ++e)
        m = std::max(m, (vertices[t.v[e]].point - vertices[t.v[(e + 1) % 3]].point).norm());
    return m;
  }

  std::span<const QuadNode> quad_of(std::size_t tri) const {
    return {quad.data() + tri * nodes_per_triangle, static_cast<std::size_t>(nodes_per_triangle)};
  }
};

namespace detail {

struct PatchTriangulation {
  std::vector<Vec2> points;
  std::vector<std::array<int, 3>> tris;
};

inline double physical_length(const SurfacePatch& patch, const Vec2& a, const Vec2& b, int samples = 64) {
  double len = 0.0;
  Vec3 prev = patch.chart->point(a);
  for (int k = 1; k <= samples; ++k) {
    const Vec3 cur = patch.chart->point(a + (b - a) * (double(k) / samples));
    len += (cur - prev).norm();
    prev = cur;
  }
  return len;
}

inline PatchTriangulation mesh_rect(const SurfacePatch& patch, const RectDomain& r, const MeshOptions& opt) {
  double lx = 0.0, ly = 0.0;
  for (int k = 0; k <= 4; ++k) {
    const double fy = r.lo.y() + (r.hi.y() - r.lo.y()) * k / 4.0;
    const double fx = r.lo.x() + (r.hi.x() - r.lo.x()) * k / 4.0;
    lx = std::max(lx, physical_length(patch, {r.lo.x(), fy}, {r.hi.x(), fy}));
    ly = std::max(ly, physical_length(patch, {fx, r.lo.y()}, {fx, r.hi.y()}));
  }
  auto divisions = [&](double len) {
    int n = std::max(2, static_cast<int>(std::ceil(len / opt.target_h - 1e-9)));
    return n + (n % 2);
  };
  const int nx = divisions(lx), ny = divisions(ly);
  PatchTriangulation out;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      out.points.emplace_back(r.lo.x() + (r.hi.x() - r.lo.x()) * i / nx, r.lo.y() + (r.hi.y() - r.lo.y()) * j / ny);
  auto id = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      out.tris.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      out.tris.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return out;
}

// Concentric rings, optionally graded towards the boundary circle, zipped
// pairwise into triangle strips.
inline PatchTriangulation mesh_disk(const SurfacePatch& patch, const DiskDomain& d, const MeshOptions& opt) {
  const double stretch = std::max(max_stretch(patch), 1e-12);
  std::vector<double> radii{d.radius};
  std::vector<double> spacing{opt.boundary_h > 0.0 ? std::min(opt.boundary_h, opt.target_h) : opt.target_h};
  double r = d.radius;
  if (opt.boundary_h > 0.0) {
    double h = std::min(opt.boundary_h, opt.target_h);
    while (h < opt.target_h && r - h / stretch > 0.5 * opt.target_h / stretch) {
      r -= h / stretch;
      radii.push_back(r);
      h = std::min(h * opt.grading, opt.target_h);
      spacing.push_back(h);
    }
  }
  const int inner = std::max(1, static_cast<int>(std::ceil(r * stretch / opt.target_h - 1e-9)));
  for (int i = inner - 1; i >= 1; --i) {
    radii.push_back(r * i / inner);
    spacing.push_back(opt.target_h);
  }

  PatchTriangulation out;
  struct Ring {
    std::vector<int> ids;
    std::vector<double> frac;
  };
  std::vector<Ring> rings;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    const double rad = radii[k];
    double circ = 0.0;
    const int samples = 256;
    Vec3 prev = patch.chart->point(d.center + Vec2(rad, 0.0));
    for (int s = 1; s <= samples; ++s) {
      const double t = 2.0 * kPi * s / samples;
      const Vec3 cur = patch.chart->point(d.center + rad * Vec2(std::cos(t), std::sin(t)));
      circ += (cur - prev).norm();
      prev = cur;
    }
    const double tangential = std::min(opt.target_h, spacing[k] * std::max(opt.tangential_aspect, 1.0));
    const int n = std::max(6, static_cast<int>(std::ceil(circ / tangential - 1e-9)));
    Ring ring;
    const double shift = (k % 2) * 0.5 / n;
    for (int i = 0; i < n; ++i) {
      const double f = double(i) / n + shift;
      const double t = 2.0 * kPi * f;
      ring.ids.push_back(static_cast<int>(out.points.size()));
      ring.frac.push_back(f);
      out.points.push_back(d.center + rad * Vec2(std::cos(t), std::sin(t)));
    }
    rings.push_back(std::move(ring));
  }
  const int center = static_cast<int>(out.points.size());
  out.points.push_back(d.center);

  auto add = [&](int a, int b, int c) {
    if (detail::orient2d(out.points[a], out.points[b], out.points[c]) < 0.0) std::swap(b, c);
    out.tris.push_back({a, b, c});
  };
  for (std::size_t k = 0; k + 1 < rings.size(); ++k) {
    const Ring& A = rings[k];
    const Ring& B = rings[k + 1];
    const int na = static_cast<int>(A.ids.size()), nb = static_cast<int>(B.ids.size());
    int j0 = 0;
    double best = 2.0;
    for (int j = 0; j < nb; ++j) {
      double df = std::abs(B.frac[j] - A.frac[0]);
      df = std::min(df, 1.0 - df);
      if (df < best) {
        best = df;
        j0 = j;
      }
    }
    auto step = [](double from, double to) {
      double d = to - from;
      while (d <= 0.0) d += 1.0;
      while (d > 1.0) d -= 1.0;
      return d;
    };
    std::vector<double> fas(na + 1), fbs(nb + 1);
    fas[0] = A.frac[0];
    for (int i = 1; i <= na; ++i) fas[i] = fas[i - 1] + step(A.frac[(i - 1) % na], A.frac[i % na]);
    fbs[0] = B.frac[j0];
    while (fbs[0] < fas[0] - 0.5) fbs[0] += 1.0;
    while (fbs[0] >= fas[0] + 0.5) fbs[0] -= 1.0;
    for (int j = 1; j <= nb; ++j)
      fbs[j] = fbs[j - 1] + step(B.frac[(j0 + j - 1) % nb], B.frac[(j0 + j) % nb]);
    int i = 0, j = 0;
    while (i < na || j < nb) {
      const bool advance_a = (j == nb) || (i < na && fas[i + 1] <= fbs[j + 1]);
      const int ai = A.ids[i % na], bj = B.ids[(j0 + j) % nb];
      if (advance_a) {
        add(ai, bj, A.ids[(i + 1) % na]);
        ++i;
      } else {
        add(ai, bj, B.ids[(j0 + j + 1) % nb]);
        ++j;
      }
    }
  }
  const Ring& last = rings.back();
  for (std::size_t i = 0; i < last.ids.size(); ++i) add(center, last.ids[i], last.ids[(i + 1) % last.ids.size()]);
  return out;
}

inline PatchTriangulation mesh_polygon(const SurfacePatch& patch, const PolygonDomain& poly, const MeshOptions& opt) {
  const double stretch = std::max(max_stretch(patch), 1e-12);
  const double hp = opt.target_h / stretch;
  PatchTriangulation out;
  const auto& v = poly.vertices;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 a = v[i], b = v[(i + 1) % v.size()];
    const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / hp - 1e-9)));
    for (int k = 0; k < n; ++k) out.points.push_back(a + (b - a) * (double(k) / n));
  }
  const auto [lo, hi] = domain_bounds(poly);
  const double dy = hp * std::sqrt(3.0) / 2.0;
  int row = 0;
  for (double y = lo.y() + dy; y < hi.y(); y += dy, ++row) {
    for (double x = lo.x() + ((row % 2) ? 0.5 * hp : hp); x < hi.x(); x += hp) {
      const Vec2 p(x, y);
      if (domain_signed_distance(poly, p) < -0.5 * hp) out.points.push_back(p);
    }
  }
  for (const auto& t : delaunay_triangulate(out.points)) {
    const Vec2 c = (out.points[t[0]] + out.points[t[1]] + out.points[t[2]]) / 3.0;
    if (polygon_contains(v, c)) out.tris.push_back(t);
  }
  require(!out.tris.empty(), ErrorKind::MeshGeneration, "polygon produced no triangles");
  return out;
}

struct PointHash {
  std::size_t operator()(const std::array<long long, 3>& k) const {
    return std::hash<long long>()(k[0] * 73856093LL ^ k[1] * 19349663LL ^ k[2] * 83492791LL);
  }
};

}  // namespace detail

/// Triangulate every patch of the surface and lift it; vertices shared by
/// neighbouring patches (atlas seams) are merged.
inline SurfaceMesh build_mesh(const Surface& surface, const MeshOptions& opt) {
  require(opt.target_h > 0.0, ErrorKind::InvalidArgument, "target_h must be positive");
  require(!surface.patches.empty(), ErrorKind::MeshGeneration, "surface has no patches");
  SurfaceMesh mesh;
  mesh.surface = surface;
  mesh.target_h = opt.target_h;

  const double cell = 1e-7;
  std::unordered_map<std::array<long long, 3>, std::vector<int>, detail::PointHash> lookup;
  auto key = [&](const Vec3& p) {
    return std::array<long long, 3>{std::llround(p.x() / cell), std::llround(p.y() / cell), std::llround(p.z() / cell)};
  };
  auto find_or_add = [&](int patch, const Vec2& y) {
    const Vec3 p = surface.patches[patch].chart->point(y);
    const auto k = key(p);
    for (long long dx = -1; dx <= 1; ++dx)
      for (long long dy = -1; dy <= 1; ++dy)
        for (long long dz = -1; dz <= 1; ++dz) {
          auto it = lookup.find({k[0] + dx, k[1] + dy, k[2] + dz});
          if (it == lookup.end()) continue;
          for (int id : it->second)
            if ((mesh.vertices[id].point - p).norm() < 1e-9) return id;
        }
    MeshVertex v;
    v.point = p;
    v.patch = patch;
    v.param = y;
    v.jet = jet_from_chart(surface.patches[patch].chart->eval(y), surface.patches[patch].orientation);
    mesh.vertices.push_back(v);
    lookup[k].push_back(static_cast<int>(mesh.vertices.size()) - 1);
    return static_cast<int>(mesh.vertices.size()) - 1;
  };

  for (int pi = 0; pi < static_cast<int>(surface.patches.size()); ++pi) {
    const SurfacePatch& patch = surface.patches[pi];
    detail::PatchTriangulation tri = std::visit(
        [&](const auto& d) -> detail::PatchTriangulation {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, RectDomain>)
            return detail::mesh_rect(patch, d, opt);
          else if constexpr (std::is_same_v<T, DiskDomain>)
            return detail::mesh_disk(patch, d, opt);
          else
            return detail::mesh_polygon(patch, d, opt);
        },
        patch.domain);
    for (const Vec2& y : tri.points)
      if (!patch.chart->admissible(y)) throw Error(ErrorKind::ChartDomain, "mesh point outside the chart");
    std::vector<int> ids(tri.points.size());
    for (std::size_t i = 0; i < tri.points.size(); ++i) ids[i] = find_or_add(pi, tri.points[i]);
    for (const auto& t : tri.tris) {
      MeshTriangle mt;
      mt.patch = pi;
      for (int k = 0; k < 3; ++k) {
        mt.v[k] = ids[t[k]];
        mt.param[k] = tri.points[t[k]];
      }
      if (mt.param_area() < 0.0) {
        std::swap(mt.v[1], mt.v[2]);
        std::swap(mt.param[1], mt.param[2]);
      }
      if (!(mt.param_area() > 1e-16)) throw Error(ErrorKind::MeshGeneration, "degenerate triangle");
      mesh.triangles.push_back(mt);
    }
  }

  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) {
      const int a = t.v[e], b = t.v[(e + 1) % 3];
      ++edge_count[{std::min(a, b), std::max(a, b)}];
    }
  for (const auto& [edge, count] : edge_count) {
    if (count > 2) throw Error(ErrorKind::MeshGeneration, "non-manifold edge");
    if (count == 1) mesh.vertices[edge.first].boundary = mesh.vertices[edge.second].boundary = true;
  }
  for (int i = 0; i < static_cast<int>(mesh.vertices.size()); ++i)
    if (mesh.vertices[i].boundary) mesh.boundary_vertices.push_back(i);

  const TriangleRule rule = triangle_degree4();
  mesh.quad.reserve(mesh.triangles.size() * SurfaceMesh::nodes_per_triangle);
  for (const auto& t : mesh.triangles) {
    const SurfacePatch& patch = mesh.surface.patches[t.patch];
    const double area = t.param_area();
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const GeometryJet j = jet_from_chart(patch.chart->eval(t.param_at(rule.points[q])), patch.orientation);
      QuadNode node;
      node.point = j.point;
      node.normal = j.normal;
      node.bary = barycentric(rule.points[q]);
      node.weight = rule.weights[q] * area * j.area_density;
      node.potential = curvature_potential(j);
      mesh.quad.push_back(node);
    }
  }
  return mesh;
}

inline SurfaceMesh build_mesh(const SurfacePatch& patch, double target_h) {
  MeshOptions opt;
  opt.target_h = target_h;
  return build_mesh(Surface(patch), opt);
}

/// Plain-text triangle list: vertex table (x y z u v patch) then index triples.
inline void write_mesh(std::ostream& os, const SurfaceMesh& mesh) {
  os << "# deltasurf triangle mesh\n";
  os << "vertices " << mesh.vertices.size() << "\n";
  os.precision(17);
  for (const auto& v : mesh.vertices)
    os << v.point.x() << ' ' << v.point.y() << ' ' << v.point.z() << ' ' << v.param.x() << ' ' << v.param.y() << ' '
       << v.patch << '\n';
  os << "triangles " << mesh.triangles.size() << "\n";
  for (const auto& t : mesh.triangles) os << t.v[0] << ' ' << t.v[1] << ' ' << t.v[2] << '\n';
}

}  // namespace deltasurf
