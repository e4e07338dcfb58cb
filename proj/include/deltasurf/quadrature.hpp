#pragma once

#include "deltasurf/common.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <vector>

namespace deltasurf {

/// Gauss-Legendre rule mapped to [0, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::size_t size() const { return nodes.size(); }
};

inline GaussRule make_gauss_legendre(int n) {
  require(n >= 1, ErrorKind::InvalidArgument, "Gauss rule needs at least one node");
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = 0.5 * (1.0 - x);
    rule.nodes[n - 1 - i] = 0.5 * (1.0 + x);
    rule.weights[i] = rule.weights[n - 1 - i] = 0.5 * w;
  }
  return rule;
}

/// Cached Gauss-Legendre rules, safe for concurrent readers.
inline const GaussRule& gauss_legendre(int n) {
  static std::mutex mutex;
  static std::map<int, GaussRule> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make_gauss_legendre(n)).first;
  return it->second;
}

/// Quadrature on the reference triangle {(s, t) : s, t >= 0, s + t <= 1}.
/// Weights sum to 1 (the rule integrates the mean value); scale by the area.
struct TriangleRule {
  std::vector<Vec2> points;
  std::vector<double> weights;
  std::size_t size() const { return points.size(); }
};

/// Symmetric 6-point rule, exact for polynomials of degree 4.
inline TriangleRule triangle_degree4() {
  TriangleRule rule;
  const double a1 = 0.445948490915965, w1 = 0.223381589678011;
  const double a2 = 0.091576213509771, w2 = 0.109951743655322;
  for (auto [a, w] : {std::pair{a1, w1}, std::pair{a2, w2}}) {
    const double b = 1.0 - 2.0 * a;
    rule.points.push_back({a, a});
    rule.points.push_back({b, a});
    rule.points.push_back({a, b});
    rule.weights.insert(rule.weights.end(), {w, w, w});
  }
  return rule;
}

/// Collapsed (conical) Gauss product rule with n*n points, exact to degree 2n-1.
inline TriangleRule triangle_conical(int n) {
  const GaussRule& g = gauss_legendre(n);
  TriangleRule rule;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double u = g.nodes[i];
      const double v = g.nodes[j];
      rule.points.push_back({u, v * (1.0 - u)});
      rule.weights.push_back(2.0 * g.weights[i] * g.weights[j] * (1.0 - u));
    }
  }
  return rule;
}

inline Vec3 barycentric(const Vec2& st) { return {1.0 - st.x() - st.y(), st.x(), st.y()}; }

}  // namespace deltasurf
