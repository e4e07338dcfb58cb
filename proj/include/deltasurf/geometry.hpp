#pragma once

// Parametrized surface patches: charts with closed-form derivatives, parameter
// domains, pointwise differential geometry and the normal tube map.

#include "deltasurf/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace deltasurf {

/// Position and first derivatives of a chart at one parameter point.
struct ChartFirst {
  Vec3 point;
  std::array<Vec3, 2> tangents;
};

/// Position with first and second derivatives (d11, d12, d22).
struct ChartSecond {
  Vec3 point;
  std::array<Vec3, 2> tangents;
  std::array<Vec3, 3> second;
};

/// A smooth map from a planar parameter set into R^3.
class Chart {
 public:
  virtual ~Chart() = default;
  virtual ChartSecond eval(const Vec2& y) const = 0;
  virtual ChartFirst first(const Vec2& y) const {
    const ChartSecond s = eval(y);
    return {s.point, s.tangents};
  }
  virtual Vec3 point(const Vec2& y) const { return first(y).point; }
  /// Whether y lies in the maximal set on which the chart is an injective immersion.
  virtual bool admissible(const Vec2& y) const = 0;
  virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Charts of the built-in catalog

class PlaneChart final : public Chart {
 public:
  ChartSecond eval(const Vec2& y) const override {
    return {{y.x(), y.y(), 0.0}, {Vec3::UnitX(), Vec3::UnitY()}, {Vec3::Zero(), Vec3::Zero(), Vec3::Zero()}};
  }
  ChartFirst first(const Vec2& y) const override { return {{y.x(), y.y(), 0.0}, {Vec3::UnitX(), Vec3::UnitY()}}; }
  Vec3 point(const Vec2& y) const override { return {y.x(), y.y(), 0.0}; }
  bool admissible(const Vec2&) const override { return true; }
  std::string name() const override { return "plane"; }
};

/// Sphere of radius R in geodesic polar coordinates around the north pole:
/// the parameter y has |y| equal to the geodesic distance from the pole.
class GeodesicCapChart final : public Chart {
 public:
  explicit GeodesicCapChart(double radius) : radius_(radius) {
    require(radius > 0.0, ErrorKind::InvalidArgument, "sphere radius must be positive");
  }

  ChartSecond eval(const Vec2& y) const override {
    const Vec2 u = y / radius_;
    const double q = u.squaredNorm();
    const auto [f, df, ddf] = sinc_sqrt(q);
    ChartSecond out;
    out.point = radius_ * Vec3(f * u.x(), f * u.y(), std::cos(std::sqrt(q)));
    for (int a = 0; a < 2; ++a) {
      Vec3 t;
      for (int i = 0; i < 2; ++i) t[i] = f * (a == i ? 1.0 : 0.0) + 2.0 * df * u[a] * u[i];
      t[2] = -f * u[a];
      out.tangents[a] = t;
    }
    const int pairs[3][2] = {{0, 0}, {0, 1}, {1, 1}};
    for (int p = 0; p < 3; ++p) {
      const int a = pairs[p][0], b = pairs[p][1];
      const double dab = a == b ? 1.0 : 0.0;
      Vec3 s;
      for (int i = 0; i < 2; ++i) {
        const double dai = a == i ? 1.0 : 0.0, dbi = b == i ? 1.0 : 0.0;
        s[i] = 2.0 * df * (dai * u[b] + dbi * u[a] + dab * u[i]) + 4.0 * ddf * u[a] * u[b] * u[i];
      }
      s[2] = -f * dab - 2.0 * df * u[a] * u[b];
      out.second[p] = s / radius_;
    }
    return out;
  }

  ChartFirst first(const Vec2& y) const override {
    const Vec2 u = y / radius_;
    const double q = u.squaredNorm();
    double f, df, c;
    if (q < 1e-2) {
      f = 1.0 - q / 6.0 + q * q / 120.0 - q * q * q / 5040.0 + q * q * q * q / 362880.0;
      df = -1.0 / 6.0 + q / 60.0 - q * q / 1680.0 + q * q * q / 90720.0;
      c = 1.0 - q / 2.0 + q * q / 24.0 - q * q * q / 720.0 + q * q * q * q / 40320.0 - q * q * q * q * q / 3628800.0;
    } else {
      const double r = std::sqrt(q), sn = std::sin(r);
      c = std::cos(r);
      f = sn / r;
      df = (r * c - sn) / (2.0 * q * r);
    }
    ChartFirst out;
    out.point = radius_ * Vec3(f * u.x(), f * u.y(), c);
    for (int a = 0; a < 2; ++a)
      out.tangents[a] = Vec3((a == 0 ? f : 0.0) + 2.0 * df * u[a] * u.x(), (a == 1 ? f : 0.0) + 2.0 * df * u[a] * u.y(),
                             -f * u[a]);
    return out;
  }

  bool admissible(const Vec2& y) const override { return y.norm() < kPi * radius_ * (1.0 - 1e-9); }
  std::string name() const override { return "geodesic_cap"; }
  double radius() const { return radius_; }

 private:
  // f(q) = sin(sqrt q)/sqrt q with its first two q-derivatives.
  static std::array<double, 3> sinc_sqrt(double q) {
    if (q < 1e-2) {
      const double f = 1.0 - q / 6.0 + q * q / 120.0 - q * q * q / 5040.0 + q * q * q * q / 362880.0;
      const double df = -1.0 / 6.0 + q / 60.0 - q * q / 1680.0 + q * q * q / 90720.0;
      const double ddf = 1.0 / 60.0 - q / 840.0 + q * q / 30240.0 - q * q * q / 1330560.0;
      return {f, df, ddf};
    }
    const double s = std::sqrt(q), sn = std::sin(s), cs = std::cos(s);
    const double f = sn / s;
    const double df = (s * cs - sn) / (2.0 * s * s * s);
    const double ddf = (3.0 * sn - 3.0 * s * cs - s * s * sn) / (4.0 * std::pow(s, 5));
    return {f, df, ddf};
  }

  double radius_;
};

/// Torus with major radius R and minor radius r; y = (theta, phi) with theta
/// the angle around the tube (theta = 0 on the outer equator).
class TorusChart final : public Chart {
 public:
  TorusChart(double major, double minor) : major_(major), minor_(minor) {
    require(major > minor && minor > 0.0, ErrorKind::InvalidArgument, "torus needs R > r > 0");
  }

  ChartSecond eval(const Vec2& y) const override {
    const double ct = std::cos(y.x()), st = std::sin(y.x());
    const double cp = std::cos(y.y()), sp = std::sin(y.y());
    const double rho = major_ + minor_ * ct;
    ChartSecond out;
    out.point = {rho * cp, rho * sp, minor_ * st};
    out.tangents[0] = {-minor_ * st * cp, -minor_ * st * sp, minor_ * ct};
    out.tangents[1] = {-rho * sp, rho * cp, 0.0};
    out.second[0] = {-minor_ * ct * cp, -minor_ * ct * sp, -minor_ * st};
    out.second[1] = {minor_ * st * sp, -minor_ * st * cp, 0.0};
    out.second[2] = {-rho * cp, -rho * sp, 0.0};
    return out;
  }

  bool admissible(const Vec2&) const override { return true; }
  std::string name() const override { return "torus"; }

 private:
  double major_, minor_;
};

/// Graph z = (a y1^2 + b y2^2) / 2; curvatures a, b at the apex.
class ParaboloidChart final : public Chart {
 public:
  ParaboloidChart(double a, double b) : a_(a), b_(b) {}

  ChartSecond eval(const Vec2& y) const override {
    ChartSecond out;
    out.point = {y.x(), y.y(), 0.5 * (a_ * y.x() * y.x() + b_ * y.y() * y.y())};
    out.tangents[0] = {1.0, 0.0, a_ * y.x()};
    out.tangents[1] = {0.0, 1.0, b_ * y.y()};
    out.second[0] = {0.0, 0.0, a_};
    out.second[1] = Vec3::Zero();
    out.second[2] = {0.0, 0.0, b_};
    return out;
  }

  bool admissible(const Vec2&) const override { return true; }
  std::string name() const override { return "paraboloid"; }

 private:
  double a_, b_;
};

/// One face of the gnomonic cube-sphere: (u, v) in [-1, 1]^2 mapped radially
/// from the cube face onto the sphere of radius R. Faces share their edges
/// parameter-linearly, so vertices along seams coincide.
class CubeFaceChart final : public Chart {
 public:
  CubeFaceChart(double radius, int face) : radius_(radius) {
    require(face >= 0 && face < 6, ErrorKind::InvalidArgument, "cube face index out of range");
    static const double frames[6][9] = {
        {1, 0, 0, 0, 1, 0, 0, 0, 1},  {-1, 0, 0, 0, 0, 1, 0, 1, 0}, {0, 1, 0, 0, 0, 1, 1, 0, 0},
        {0, -1, 0, 1, 0, 0, 0, 0, 1}, {0, 0, 1, 1, 0, 0, 0, 1, 0},  {0, 0, -1, 0, 1, 0, 1, 0, 0}};
    const double* f = frames[face];
    normal_ = {f[0], f[1], f[2]};
    e1_ = {f[3], f[4], f[5]};
    e2_ = {f[6], f[7], f[8]};
  }

  ChartSecond eval(const Vec2& y) const override {
    const Vec3 p = normal_ + y.x() * e1_ + y.y() * e2_;
    const double r = p.norm();
    const Vec3 n = p / r;
    const std::array<Vec3, 2> dp = {e1_, e2_};
    std::array<Vec3, 2> dn;
    for (int a = 0; a < 2; ++a) dn[a] = (dp[a] - n * n.dot(dp[a])) / r;
    ChartSecond out;
    out.point = radius_ * n;
    out.tangents = {radius_ * dn[0], radius_ * dn[1]};
    const int pairs[3][2] = {{0, 0}, {0, 1}, {1, 1}};
    for (int k = 0; k < 3; ++k) {
      const int a = pairs[k][0], b = pairs[k][1];
      const Vec3 dab = -(dn[b] * n.dot(dp[a]) + n * dn[b].dot(dp[a])) / r - (dp[a] - n * n.dot(dp[a])) * n.dot(dp[b]) / (r * r);
      out.second[k] = radius_ * dab;
    }
    return out;
  }

  ChartFirst first(const Vec2& y) const override {
    const Vec3 p = normal_ + y.x() * e1_ + y.y() * e2_;
    const double r = p.norm();
    const Vec3 n = p / r;
    return {radius_ * n, {radius_ * (e1_ - n * n.dot(e1_)) / r, radius_ * (e2_ - n * n.dot(e2_)) / r}};
  }

  Vec3 point(const Vec2& y) const override { return radius_ * (normal_ + y.x() * e1_ + y.y() * e2_).normalized(); }
  bool admissible(const Vec2& y) const override { return std::abs(y.x()) < 1.5 && std::abs(y.y()) < 1.5; }
  std::string name() const override { return "cube_face"; }

 private:
  double radius_;
  Vec3 normal_, e1_, e2_;
};

// ---------------------------------------------------------------------------
// Parameter domains

struct RectDomain {
  Vec2 lo, hi;
};
struct DiskDomain {
  Vec2 center;
  double radius;
};
/// Simple polygon, vertices in counterclockwise order.
struct PolygonDomain {
  std::vector<Vec2> vertices;
};

using ParameterDomain = std::variant<RectDomain, DiskDomain, PolygonDomain>;

inline double polygon_signed_area(const std::vector<Vec2>& v) {
  double a = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2& p = v[i];
    const Vec2& q = v[(i + 1) % v.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

inline double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

inline bool polygon_contains(const std::vector<Vec2>& v, const Vec2& p) {
  bool inside = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    if ((v[i].y() > p.y()) != (v[j].y() > p.y()) &&
        p.x() < (v[j].x() - v[i].x()) * (p.y() - v[i].y()) / (v[j].y() - v[i].y()) + v[i].x())
      inside = !inside;
  }
  return inside;
}

/// Signed distance in parameter space: negative inside, positive outside.
inline double domain_signed_distance(const ParameterDomain& domain, const Vec2& y) {
  return std::visit(
      [&](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, RectDomain>) {
          const Vec2 c = 0.5 * (d.lo + d.hi), half = 0.5 * (d.hi - d.lo);
          const Vec2 q = (y - c).cwiseAbs() - half;
          const double outside = q.cwiseMax(0.0).norm();
          return outside > 0.0 ? outside : std::max(q.x(), q.y());
        } else if constexpr (std::is_same_v<T, DiskDomain>) {
          return (y - d.center).norm() - d.radius;
        } else {
          double m = std::numeric_limits<double>::infinity();
          for (std::size_t i = 0; i < d.vertices.size(); ++i)
            m = std::min(m, segment_distance(y, d.vertices[i], d.vertices[(i + 1) % d.vertices.size()]));
          return polygon_contains(d.vertices, y) ? -m : m;
        }
      },
      domain);
}

inline bool domain_contains(const ParameterDomain& domain, const Vec2& y, double tol = 1e-10) {
  return domain_signed_distance(domain, y) <= tol;
}

inline bool on_domain_boundary(const ParameterDomain& domain, const Vec2& y, double tol = 1e-9) {
  return std::abs(domain_signed_distance(domain, y)) <= tol;
}

/// Closest point on the boundary for curved boundaries; identity otherwise.
inline Vec2 snap_to_boundary(const ParameterDomain& domain, const Vec2& y) {
  if (const auto* disk = std::get_if<DiskDomain>(&domain)) {
    const Vec2 d = y - disk->center;
    return disk->center + disk->radius * d / d.norm();
  }
  return y;
}

inline bool domain_has_curved_boundary(const ParameterDomain& domain) {
  return std::holds_alternative<DiskDomain>(domain);
}

/// Axis-aligned bounding box of the domain.
inline std::pair<Vec2, Vec2> domain_bounds(const ParameterDomain& domain) {
  return std::visit(
      [](const auto& d) -> std::pair<Vec2, Vec2> {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, RectDomain>) {
          return {d.lo, d.hi};
        } else if constexpr (std::is_same_v<T, DiskDomain>) {
          const Vec2 r(d.radius, d.radius);
          return {d.center - r, d.center + r};
        } else {
          Vec2 lo = d.vertices.front(), hi = d.vertices.front();
          for (const Vec2& v : d.vertices) {
            lo = lo.cwiseMin(v);
            hi = hi.cwiseMax(v);
          }
          return {lo, hi};
        }
      },
      domain);
}

/// Points sampled along the domain boundary (used for offset calibration and
/// chart admissibility checks).
inline std::vector<Vec2> domain_boundary_samples(const ParameterDomain& domain, int per_side = 64) {
  std::vector<Vec2> out;
  auto polyline = [&](const std::vector<Vec2>& v) {
    for (std::size_t i = 0; i < v.size(); ++i)
      for (int k = 0; k < per_side; ++k)
        out.push_back(v[i] + (v[(i + 1) % v.size()] - v[i]) * (double(k) / per_side));
  };
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, RectDomain>) {
          polyline({d.lo, {d.hi.x(), d.lo.y()}, d.hi, {d.lo.x(), d.hi.y()}});
        } else if constexpr (std::is_same_v<T, DiskDomain>) {
          for (int k = 0; k < 4 * per_side; ++k) {
            const double t = 2.0 * kPi * k / (4 * per_side);
            out.push_back(d.center + d.radius * Vec2(std::cos(t), std::sin(t)));
          }
        } else {
          polyline(d.vertices);
        }
      },
      domain);
  return out;
}

enum class BoundaryClass { Closed, Smooth, Lipschitz };

inline const char* to_string(BoundaryClass b) {
  switch (b) {
    case BoundaryClass::Closed: return "closed";
    case BoundaryClass::Smooth: return "smooth";
    case BoundaryClass::Lipschitz: return "lipschitz";
  }
  return "?";
}

/// A chart restricted to a parameter domain, with a chosen normal orientation.
struct SurfacePatch {
  std::shared_ptr<const Chart> chart;
  ParameterDomain domain;
  int orientation = +1;
  std::string name;

  SurfacePatch flipped() const {
    SurfacePatch p = *this;
    p.orientation = -orientation;
    return p;
  }
};

/// Boundary regularity as seen by the asymptotic remainder: corners of the
/// parameter domain make the boundary only Lipschitz.
inline BoundaryClass boundary_class(const SurfacePatch& patch) {
  return std::holds_alternative<DiskDomain>(patch.domain) ? BoundaryClass::Smooth : BoundaryClass::Lipschitz;
}

/// One or more patches meshed together; closed atlases have no boundary.
struct Surface {
  std::vector<SurfacePatch> patches;
  bool closed = false;
  std::string name;

  Surface() = default;
  Surface(SurfacePatch patch) : patches{std::move(patch)}, name(patches.front().name) {}  // NOLINT: implicit by intent

  BoundaryClass boundary() const {
    if (closed) return BoundaryClass::Closed;
    for (const auto& p : patches)
      if (boundary_class(p) == BoundaryClass::Lipschitz) return BoundaryClass::Lipschitz;
    return BoundaryClass::Smooth;
  }
};

// ---------------------------------------------------------------------------
// Pointwise geometry

struct GeometryJet {
  Vec3 point;
  std::array<Vec3, 2> tangents;
  Vec3 normal;
  Mat2 metric;
  Mat2 inverse_metric;
  double area_density = 0.0;
  double k1 = 0.0, k2 = 0.0;  // k1 >= k2
  double gauss = 0.0;
  double mean = 0.0;
};

inline constexpr double kImmersionTolerance = 1e-14;

/// Jet from raw chart derivatives; no domain check.
inline GeometryJet jet_from_chart(const ChartSecond& c, int orientation) {
  GeometryJet j;
  j.point = c.point;
  j.tangents = c.tangents;
  const Vec3& d1 = c.tangents[0];
  const Vec3& d2 = c.tangents[1];
  j.metric << d1.dot(d1), d1.dot(d2), d1.dot(d2), d2.dot(d2);
  const double det = j.metric.determinant();
  const double scale = std::max(d1.squaredNorm() * d2.squaredNorm(), 1e-300);
  if (!(det > kImmersionTolerance * scale))
    throw Error(ErrorKind::ImmersionFailure, "degenerate metric, det g = " + std::to_string(det));
  j.inverse_metric << j.metric(1, 1) / det, -j.metric(0, 1) / det, -j.metric(1, 0) / det, j.metric(0, 0) / det;
  j.area_density = std::sqrt(det);
  j.normal = orientation * d1.cross(d2) / d1.cross(d2).norm();
  Mat2 second;
  second << c.second[0].dot(j.normal), c.second[1].dot(j.normal), c.second[1].dot(j.normal), c.second[2].dot(j.normal);
  // Eigenvalues of the shape operator g^{-1} II, computed from the symmetric
  // form L^{-1} II L^{-T} (g = L L^T) so umbilic points stay exactly umbilic.
  const double l11 = std::sqrt(j.metric(0, 0));
  const double l21 = j.metric(1, 0) / l11;
  const double l22 = std::sqrt(std::max(j.metric(1, 1) - l21 * l21, 0.0));
  const double s00 = second(0, 0) / (l11 * l11);
  const double s01 = (second(1, 0) - l21 * s00 * l11) / (l11 * l22);
  const double s11 = (second(1, 1) - 2.0 * l21 * (second(1, 0) / l11) + l21 * l21 * s00) / (l22 * l22);
  const double half_trace = 0.5 * (s00 + s11);
  const double radius = std::hypot(0.5 * (s00 - s11), s01);
  j.k1 = half_trace + radius;
  j.k2 = half_trace - radius;
  j.gauss = j.k1 * j.k2;
  j.mean = 0.5 * (j.k1 + j.k2);
  return j;
}

/// Differential geometry of the patch at parameter point y.
inline GeometryJet jet(const SurfacePatch& patch, const Vec2& y) {
  if (!domain_contains(patch.domain, y, 1e-9))
    throw Error(ErrorKind::OutsideDomain, "parameter point outside the patch domain");
  return jet_from_chart(patch.chart->eval(y), patch.orientation);
}

/// The effective potential K - M^2, evaluated in the form -(k1 - k2)^2 / 4
/// which is exactly invariant under orientation flips and never positive.
inline double curvature_potential(const GeometryJet& j) {
  const double d = j.k1 - j.k2;
  return -0.25 * d * d;
}

/// Point s + t nu(s) of the normal tube of half-width `half_width`.
inline Vec3 tube_point(const SurfacePatch& patch, const Vec2& y, double t, double half_width) {
  require(half_width > 0.0, ErrorKind::InvalidArgument, "tube half-width must be positive");
  if (!(std::abs(t) < half_width)) throw Error(ErrorKind::OutOfTube, "|t| must be below the tube half-width");
  const GeometryJet j = jet(patch, y);
  return j.point + t * j.normal;
}

/// Uniform random parameter point of the domain (rejection sampling).
template <class Rng>
Vec2 sample_domain(const ParameterDomain& domain, Rng& rng) {
  const auto [lo, hi] = domain_bounds(domain);
  std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uy(lo.y(), hi.y());
  for (int i = 0; i < 100000; ++i) {
    const Vec2 y(ux(rng), uy(rng));
    if (domain_signed_distance(domain, y) < 0.0) return y;
  }
  throw Error(ErrorKind::InvalidArgument, "could not sample the parameter domain");
}

/// Probabilistic injectivity check: distinct parameter samples must map to
/// distinct points, and the chart must be an immersion at every sample.
template <class Rng>
bool check_injective(const SurfacePatch& patch, Rng& rng, int samples = 400) {
  std::vector<Vec2> ys;
  std::vector<Vec3> xs;
  for (int i = 0; i < samples; ++i) {
    ys.push_back(sample_domain(patch.domain, rng));
    const ChartFirst c = patch.chart->first(ys.back());
    const double cross = c.tangents[0].cross(c.tangents[1]).norm();
    if (cross <= 1e-7 * c.tangents[0].norm() * c.tangents[1].norm()) return false;
    xs.push_back(c.point);
  }
  for (int i = 0; i < samples; ++i)
    for (int k = i + 1; k < samples; ++k)
      if ((ys[i] - ys[k]).norm() > 1e-6 && (xs[i] - xs[k]).norm() < 1e-9) return false;
  return true;
}

/// Largest stretch |dPhi(y) e| over unit e, sampled over the domain.
inline double max_stretch(const SurfacePatch& patch, int samples_per_axis = 24) {
  const auto [lo, hi] = domain_bounds(patch.domain);
  double m = 0.0;
  for (int i = 0; i <= samples_per_axis; ++i) {
    for (int k = 0; k <= samples_per_axis; ++k) {
      const Vec2 y = lo + Vec2((hi - lo).x() * i / samples_per_axis, (hi - lo).y() * k / samples_per_axis);
      if (!domain_contains(patch.domain, y, 1e-12) || !patch.chart->admissible(y)) continue;
      const ChartFirst c = patch.chart->first(y);
      Mat2 g;
      g << c.tangents[0].dot(c.tangents[0]), c.tangents[0].dot(c.tangents[1]), c.tangents[0].dot(c.tangents[1]),
          c.tangents[1].dot(c.tangents[1]);
      const double tr = g.trace(), det = g.determinant();
      m = std::max(m, std::sqrt(0.5 * tr + std::sqrt(std::max(0.25 * tr * tr - det, 0.0))));
    }
  }
  return m;
}

}  // namespace deltasurf
