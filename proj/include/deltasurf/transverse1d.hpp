#pragma once

// The one-dimensional transverse operators -v'' - beta delta_0 v on (-a, a),
// with Dirichlet ends or with the boundary term -C (|v(-a)|^2 + |v(a)|^2).

#include "deltasurf/eigensolvers.hpp"

#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

namespace deltasurf {

enum class TransverseBoundary { Dirichlet, NeumannPenalized };

struct TransverseSpec {
  double a = 1.0;
  double beta = 1.0;
  TransverseBoundary boundary = TransverseBoundary::Dirichlet;
  /// Weight of the boundary term; only read for NeumannPenalized, and must
  /// then be given explicitly.
  std::optional<double> boundary_weight;
};

/// Below this value of beta * a the bracket of the Dirichlet ground state is
/// not asserted (a bound state may still exist down to beta * a = 2).
inline constexpr double kTransverseValidity = 8.0 / 3.0;

inline bool transverse_valid(const TransverseSpec& s) { return s.beta * s.a > kTransverseValidity; }

inline void check_spec(const TransverseSpec& s) {
  require(s.a > 0.0, ErrorKind::InvalidArgument, "half-width must be positive");
  require(s.beta >= 0.0, ErrorKind::InvalidArgument, "coupling must be nonnegative");
}

/// Ground state of the Dirichlet operator. The even bound state
/// sinh(kappa (a - |x|)) satisfies the jump condition iff
/// 2 kappa = beta tanh(kappa a); the root in (0, beta/2) exists iff beta a > 2.
inline std::optional<double> dirichlet_ground(const TransverseSpec& s) {
  check_spec(s);
  if (s.beta * s.a <= 2.0) return std::nullopt;
  auto f = [&](double k) { return s.beta * std::tanh(k * s.a) - 2.0 * k; };
  double lo = 0.0, hi = 0.5 * s.beta;
  // f > 0 just above 0 and f(beta/2) < 0; move lo off the trivial root
  lo = std::min(1e-6 / s.a, 0.25 * hi);
  while (f(lo) <= 0.0 && lo > 1e-300) lo *= 0.5;
  for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  const double kappa = 0.5 * (lo + hi);
  return -kappa * kappa;
}

/// Bracket [-beta^2/4, -beta^2/4 + 2 beta^2 exp(-beta a / 2)].
inline std::pair<double, double> dirichlet_bracket(const TransverseSpec& s) {
  const double b2 = s.beta * s.beta;
  return {-0.25 * b2, -0.25 * b2 + 2.0 * b2 * std::exp(-0.5 * s.beta * s.a)};
}

/// Lowest `count` eigenvalues of the lumped P1 (second-order finite
/// difference) discretization on `intervals` uniform cells. The delta enters
/// as -beta/h on the centre node; the boundary term as -2C/h on the end nodes.
inline std::vector<double> fd_spectrum(const TransverseSpec& s, int intervals, int count) {
  check_spec(s);
  require(intervals >= 4 && intervals % 2 == 0, ErrorKind::InvalidArgument, "need an even number of cells >= 4");
  const double h = 2.0 * s.a / intervals;
  const double inv_h2 = 1.0 / (h * h);
  const int centre = intervals / 2;
  std::vector<double> diag, off;
  if (s.boundary == TransverseBoundary::Dirichlet) {
    for (int i = 1; i < intervals; ++i) {
      diag.push_back(2.0 * inv_h2 - (i == centre ? s.beta / h : 0.0));
      if (i + 1 < intervals) off.push_back(-inv_h2);
    }
  } else {
    require(s.boundary_weight.has_value(), ErrorKind::InvalidArgument, "boundary weight C must be supplied");
    const double c = *s.boundary_weight;
    require(c >= 0.0, ErrorKind::InvalidArgument, "boundary weight must be nonnegative");
    for (int i = 0; i <= intervals; ++i) {
      const bool end = i == 0 || i == intervals;
      diag.push_back(2.0 * inv_h2 - (i == centre ? s.beta / h : 0.0) - (end ? 2.0 * c / h : 0.0));
      if (i < intervals) off.push_back((i == 0 || i + 1 == intervals) ? -std::sqrt(2.0) * inv_h2 : -inv_h2);
    }
  }
  require(count >= 1 && count <= static_cast<int>(diag.size()), ErrorKind::InvalidArgument,
          "eigenvalue count exceeds grid dofs");
  std::vector<double> out;
  for (int k = 0; k < count; ++k) out.push_back(tridiagonal_eigenvalue(diag, off, k));
  return out;
}

struct TransverseGrid {
  /// Cells on the coarsest level; 0 picks about 50 cells per decay length.
  int intervals = 0;
  /// Romberg levels, each doubling the cell count.
  int levels = 3;
};

/// Finite-difference eigenvalues with Romberg extrapolation in h^2.
inline std::vector<double> fd_spectrum_extrapolated(const TransverseSpec& s, int count, const TransverseGrid& grid = {}) {
  int n = grid.intervals;
  if (n <= 0) n = std::max(400, static_cast<int>(std::ceil(25.0 * s.beta * s.a)));
  n += n % 2;
  std::vector<std::vector<double>> table;
  for (int level = 0; level < std::max(grid.levels, 1); ++level) table.push_back(fd_spectrum(s, n << level, count));
  for (int order = 1; order < static_cast<int>(table.size()); ++order) {
    const double factor = std::pow(4.0, order);
    for (std::size_t l = table.size() - 1; l >= static_cast<std::size_t>(order); --l)
      for (int k = 0; k < count; ++k) table[l][k] = (factor * table[l][k] - table[l - 1][k]) / (factor - 1.0);
  }
  return table.back();
}

/// Lowest eigenvalues of the operator with the boundary term (diagnostic).
inline std::vector<double> penalized_spectrum(const TransverseSpec& s, int count, const TransverseGrid& grid = {}) {
  require(s.boundary == TransverseBoundary::NeumannPenalized, ErrorKind::InvalidArgument,
          "penalized spectrum needs the NeumannPenalized boundary");
  require(s.boundary_weight.has_value(), ErrorKind::InvalidArgument, "boundary weight C must be supplied");
  return fd_spectrum_extrapolated(s, count, grid);
}

/// Upper bound -beta^2/4 + 2 beta^2 e^{-beta a/2} + mu + C_geom a (1 + mu)
/// with a = xi log(beta) / beta.
inline double separated_upper_bound(double mu, double beta, double xi, double geometry_constant) {
  require(xi >= 6.0, ErrorKind::Validity, "xi must be at least 6");
  require(beta > 1.0, ErrorKind::Validity, "beta must exceed 1");
  const double a = xi * std::log(beta) / beta;
  require(beta * a > kTransverseValidity, ErrorKind::Validity, "beta * a must exceed 8/3");
  return -0.25 * beta * beta + 2.0 * beta * beta * std::exp(-0.5 * beta * a) + mu + geometry_constant * a * (1.0 + mu);
}

/// CSV columns: beta, a, lambda1, bracket_low, bracket_high, valid. lambda1
/// is left empty when no negative eigenvalue exists.
inline void write_transverse_csv(std::ostream& os, const std::vector<TransverseSpec>& rows) {
  os << "beta,a,lambda1,bracket_low,bracket_high,valid\n";
  os.precision(15);
  for (const auto& s : rows) {
    const auto ground = dirichlet_ground(s);
    const auto [lo, hi] = dirichlet_bracket(s);
    os << s.beta << ',' << s.a << ',';
    if (ground) os << *ground;
    os << ',' << lo << ',' << hi << ',' << (transverse_valid(s) ? 1 : 0) << '\n';
  }
}

}  // namespace deltasurf
