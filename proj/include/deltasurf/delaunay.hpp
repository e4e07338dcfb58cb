#pragma once

// Bowyer-Watson Delaunay triangulation of a planar point set.

#include "deltasurf/common.hpp"

#include <array>
#include <map>
#include <vector>

namespace deltasurf {

namespace detail {

inline double orient2d(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// Positive when d lies strictly inside the circumcircle of the ccw triangle abc.
inline double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
  const double ad = adx * adx + ady * ady, bd = bdx * bdx + bdy * bdy, cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

}  // namespace detail

/// Triangles (counterclockwise index triples into `points`). Points are
/// inserted in the given order, so the result is deterministic.
inline std::vector<std::array<int, 3>> delaunay_triangulate(const std::vector<Vec2>& points) {
  require(points.size() >= 3, ErrorKind::MeshGeneration, "Delaunay needs at least three points");
  Vec2 lo = points.front(), hi = points.front();
  for (const Vec2& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double span = std::max((hi - lo).maxCoeff(), 1e-12);
  const Vec2 mid = 0.5 * (lo + hi);
  std::vector<Vec2> pts = points;
  const int n = static_cast<int>(points.size());
  pts.push_back(mid + Vec2(-20.0 * span, -10.0 * span));
  pts.push_back(mid + Vec2(20.0 * span, -10.0 * span));
  pts.push_back(mid + Vec2(0.0, 20.0 * span));

  std::vector<std::array<int, 3>> tris = {{n, n + 1, n + 2}};
  const double eps = 1e-14 * span * span * span * span;
  for (int ip = 0; ip < n; ++ip) {
    const Vec2& p = pts[ip];
    std::vector<std::array<int, 3>> keep;
    std::map<std::pair<int, int>, int> boundary;  // directed edge -> count
    keep.reserve(tris.size() + 2);
    for (const auto& t : tris) {
      if (detail::incircle(pts[t[0]], pts[t[1]], pts[t[2]], p) > eps) {
        for (int e = 0; e < 3; ++e) {
          const int a = t[e], b = t[(e + 1) % 3];
          auto rev = boundary.find({b, a});
          if (rev != boundary.end())
            boundary.erase(rev);
          else
            boundary[{a, b}] = 1;
        }
      } else {
        keep.push_back(t);
      }
    }
    require(!boundary.empty(), ErrorKind::MeshGeneration, "degenerate point set in Delaunay insertion");
    for (const auto& [edge, count] : boundary) {
      (void)count;
      keep.push_back({edge.first, edge.second, ip});
    }
    tris.swap(keep);
  }
  std::vector<std::array<int, 3>> out;
  for (const auto& t : tris) {
    if (t[0] >= n || t[1] >= n || t[2] >= n) continue;
    if (detail::orient2d(pts[t[0]], pts[t[1]], pts[t[2]]) <= 0.0) continue;
    out.push_back(t);
  }
  return out;
}

}  // namespace deltasurf
