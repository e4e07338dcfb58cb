#pragma once

// Strong-coupling sweeps: bound states E_j(beta) from the layer operators set
// against the Dirichlet eigenvalues mu_j of -Laplace-Beltrami + W, with the
// remainder E_j + beta^2/4 - mu_j, its rate fit and the separated upper bound.

#include "deltasurf/bs_bem.hpp"
#include "deltasurf/surface_fem.hpp"
#include "deltasurf/transverse1d.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace deltasurf {

struct SweepRecord {
  double beta = 0.0;
  int j = 1;  // 1-based
  std::optional<double> energy;
  double shifted = std::numeric_limits<double>::quiet_NaN();
  double surface_eigenvalue = std::numeric_limits<double>::quiet_NaN();
  double remainder = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> upper_bound;
  /// Energy on the coarser mesh of the pair, and whether the change between
  /// the two stays below the remainder at the largest beta.
  std::optional<double> coarse_energy;
  bool converged = false;
  int panels = 0;
  int coarse_panels = 0;
  double mesh_h = 0.0;
  double bisection_residual = std::numeric_limits<double>::quiet_NaN();
};

struct SweepOptions {
  std::vector<double> betas{8.0, 16.0, 32.0, 64.0};
  int j_max = 1;
  /// BEM spacing h = min(h_max, mesh_scale / beta) on the fine mesh; the
  /// coarse mesh uses h * refinement so that it has about half the panels.
  double mesh_scale = 3.2;
  double h_max = 0.15;
  double refinement = std::sqrt(2.0);
  double boundary_h = 0.0;
  FemOptions fem;
  BoundStateOptions bound_states{LayerOptions{}, 1e-10, 60, {}, false};
  /// Separated upper bound parameters; the bound is skipped without a constant.
  double xi = 6.0;
  std::optional<double> geometry_constant;
};

struct SweepResult {
  std::vector<SweepRecord> records;  // ordered by (beta, j)
  SpectralResult surface;
  BoundaryClass boundary = BoundaryClass::Smooth;
  /// Betas dropped before solving, with the reason.
  std::vector<std::pair<double, std::string>> dropped;
};

namespace detail {

inline std::shared_ptr<const LayerGeometry> sweep_geometry(const Surface& s, double h, double boundary_h) {
  MeshOptions mo{h};
  mo.boundary_h = boundary_h;
  return std::make_shared<LayerGeometry>(std::make_shared<SurfaceMesh>(build_mesh(s, mo)));
}

}  // namespace detail

inline SweepResult sweep(const Surface& surface, const SweepOptions& opt) {
  require(!opt.betas.empty(), ErrorKind::InvalidArgument, "empty beta list");
  require(opt.j_max >= 1, ErrorKind::InvalidArgument, "j_max must be at least 1");
  for (std::size_t i = 1; i < opt.betas.size(); ++i)
    require(opt.betas[i] > opt.betas[i - 1], ErrorKind::InvalidArgument, "betas must be strictly increasing");
  SweepResult out;
  out.boundary = surface.boundary();
  out.surface = dirichlet_modes(surface, opt.j_max, opt.fem);

  struct Cell {
    double beta;
    BoundStateResult fine, coarse;
  };
  std::vector<Cell> cells;
  for (double beta : opt.betas) {
    const double h = std::min(opt.h_max, opt.mesh_scale / beta);
    BoundStateOptions bo = opt.bound_states;
    bo.kappa_guess.clear();
    for (int j = 0; j < opt.j_max; ++j) {
      const double e = -0.25 * beta * beta + out.surface.eigenvalues[j];
      bo.kappa_guess.push_back(e < 0.0 ? std::sqrt(-e) : 0.5 * beta);
    }
    const auto fine_geo = detail::sweep_geometry(surface, h, opt.boundary_h);
    Cell cell{beta, solve_bound_states(fine_geo, beta, opt.j_max, bo), {}};
    if (cells.empty() && !cell.fine.eigenvalues[0]) {
      out.dropped.emplace_back(beta, "no bound state at the smallest beta");
      continue;
    }
    const auto coarse_geo = detail::sweep_geometry(surface, h * opt.refinement, opt.boundary_h);
    cell.coarse = solve_bound_states(coarse_geo, beta, opt.j_max, bo);
    cells.push_back(std::move(cell));
  }

  for (const Cell& c : cells)
    for (int j = 0; j < opt.j_max; ++j) {
      SweepRecord r;
      r.beta = c.beta;
      r.j = j + 1;
      r.surface_eigenvalue = out.surface.eigenvalues[j];
      r.panels = c.fine.geometry->panel_count();
      r.coarse_panels = c.coarse.geometry->panel_count();
      r.mesh_h = c.fine.geometry->mesh().target_h;
      r.energy = c.fine.eigenvalues[j];
      r.coarse_energy = c.coarse.eigenvalues[j];
      if (r.energy) {
        r.shifted = *r.energy + 0.25 * c.beta * c.beta;
        r.remainder = r.shifted - r.surface_eigenvalue;
        r.bisection_residual = c.fine.bisection_residuals[j];
        const double a = opt.xi * std::log(c.beta) / c.beta;
        if (opt.geometry_constant && opt.xi >= 6.0 && c.beta > 1.0 && c.beta * a > kTransverseValidity)
          r.upper_bound = separated_upper_bound(r.surface_eigenvalue, c.beta, opt.xi, *opt.geometry_constant);
      }
      out.records.push_back(r);
    }

  // discretization control against the remainder at the largest beta
  for (int j = 1; j <= opt.j_max; ++j) {
    double reference = std::numeric_limits<double>::quiet_NaN();
    for (const SweepRecord& r : out.records)
      if (r.j == j && r.energy) reference = std::abs(r.remainder);
    for (SweepRecord& r : out.records)
      if (r.j == j)
        r.converged = r.energy && r.coarse_energy && std::abs(*r.energy - *r.coarse_energy) < reference;
  }
  return out;
}

/// Least-squares fit |remainder| ~ c log(beta) / beta through the origin.
struct RateFit {
  double fitted_c = 0.0;
  double max_rel_misfit = 0.0;
  bool monotone_flag = false;
  std::vector<double> betas;
  std::vector<double> remainders;  // absolute values
};

inline double rate_model(double beta) { return std::log(beta) / beta; }

inline RateFit fit_rate(const std::vector<SweepRecord>& records, int j) {
  RateFit fit;
  std::vector<const SweepRecord*> rows;
  for (const SweepRecord& r : records)
    if (r.j == j && r.energy && r.converged) rows.push_back(&r);
  std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->beta < b->beta; });
  require(rows.size() >= 4, ErrorKind::InsufficientData, "rate fit needs at least 4 converged records");
  require(rows.back()->beta >= 8.0 * rows.front()->beta, ErrorKind::InsufficientData,
          "rate fit needs betas spanning a factor of 8");
  double sxy = 0.0, sxx = 0.0;
  for (const SweepRecord* r : rows) {
    const double x = rate_model(r->beta), y = std::abs(r->remainder);
    fit.betas.push_back(r->beta);
    fit.remainders.push_back(y);
    sxy += x * y;
    sxx += x * x;
  }
  fit.fitted_c = sxy / sxx;
  fit.monotone_flag = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double y = fit.remainders[i], model = fit.fitted_c * rate_model(fit.betas[i]);
    fit.max_rel_misfit = std::max(fit.max_rel_misfit, y > 0.0 ? std::abs(y - model) / y : INFINITY);
    if (i > 0 && y > fit.remainders[i - 1]) fit.monotone_flag = false;
  }
  return fit;
}

/// |remainder| nonincreasing over the last `count` records of index j that
/// have an energy.
inline bool tail_nonincreasing(const std::vector<SweepRecord>& records, int j, int count = 3) {
  std::vector<double> rem;
  for (const SweepRecord& r : records)
    if (r.j == j && r.energy) rem.push_back(std::abs(r.remainder));
  if (static_cast<int>(rem.size()) < count) return false;
  for (std::size_t i = rem.size() - count + 1; i < rem.size(); ++i)
    if (rem[i] > rem[i - 1]) return false;
  return true;
}

/// |r(2 beta)| <= |r(beta)| for every converged pair of records a factor 2 apart.
inline bool doubling_nonincreasing(const std::vector<SweepRecord>& records, int j) {
  for (const SweepRecord& a : records)
    for (const SweepRecord& b : records)
      if (a.j == j && b.j == j && a.converged && b.converged && std::abs(b.beta - 2.0 * a.beta) < 1e-12 * b.beta &&
          std::abs(b.remainder) > std::abs(a.remainder))
        return false;
  return true;
}

enum class BoundStatus { Pass, Fail, Skipped };

inline const char* to_string(BoundStatus s) {
  switch (s) {
    case BoundStatus::Pass: return "pass";
    case BoundStatus::Fail: return "fail";
    case BoundStatus::Skipped: return "skipped";
  }
  return "?";
}

struct BoundCheck {
  double beta = 0.0;
  int j = 1;
  BoundStatus status = BoundStatus::Skipped;
  std::optional<double> bound;
  std::string reason;
};

/// E_j <= separated upper bound for every record; rows where the bound is not
/// valid or no bound state was found are skipped with a reason.
inline std::vector<BoundCheck> cross_check_bounds(const std::vector<SweepRecord>& records, double geometry_constant,
                                                  double xi) {
  require(xi >= 6.0, ErrorKind::Validity, "xi must be at least 6");
  std::vector<BoundCheck> out;
  for (const SweepRecord& r : records) {
    BoundCheck c;
    c.beta = r.beta;
    c.j = r.j;
    if (!r.energy) {
      c.reason = "no bound state";
    } else {
      try {
        c.bound = separated_upper_bound(r.surface_eigenvalue, r.beta, xi, geometry_constant);
        c.status = *r.energy <= *c.bound ? BoundStatus::Pass : BoundStatus::Fail;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Validity) throw;
        c.reason = e.what();
      }
    }
    out.push_back(c);
  }
  return out;
}

/// Rate fit for smooth-boundary or closed surfaces; Lipschitz boundaries only
/// get the trend checks, so the fit is withheld.
inline std::optional<RateFit> gated_rate_fit(const SweepResult& s, int j) {
  if (s.boundary == BoundaryClass::Lipschitz) return std::nullopt;
  return fit_rate(s.records, j);
}

/// CSV columns: beta, j, E_j, shifted, muD_j, remainder, upper_bound, converged.
inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRecord>& records) {
  os << "beta,j,E_j,shifted,muD_j,remainder,upper_bound,converged\n";
  os << std::setprecision(15);
  for (const SweepRecord& r : records) {
    os << r.beta << ',' << r.j << ',';
    if (r.energy) os << *r.energy << ',' << r.shifted;
    else os << ',';
    os << ',' << r.surface_eigenvalue << ',';
    if (r.energy) os << r.remainder;
    os << ',';
    if (r.upper_bound) os << *r.upper_bound;
    os << ',' << (r.converged ? 1 : 0) << '\n';
  }
}

/// Log-log plot of |remainder| against beta with the c log(beta)/beta line.
inline void write_sweep_svg(std::ostream& os, const std::vector<SweepRecord>& records, int j,
                            std::optional<double> fitted_c = std::nullopt) {
  std::vector<std::pair<double, double>> pts;
  for (const SweepRecord& r : records)
    if (r.j == j && r.energy && std::abs(r.remainder) > 0.0) pts.emplace_back(r.beta, std::abs(r.remainder));
  const double width = 480, height = 360, margin = 50;
  double bx0 = 1e300, bx1 = -1e300, by0 = 1e300, by1 = -1e300;
  for (auto [b, y] : pts) {
    bx0 = std::min(bx0, b);
    bx1 = std::max(bx1, b);
    by0 = std::min(by0, y);
    by1 = std::max(by1, y);
    if (fitted_c) {
      by0 = std::min(by0, *fitted_c * rate_model(b));
      by1 = std::max(by1, *fitted_c * rate_model(b));
    }
  }
  if (pts.empty()) bx0 = 1, bx1 = 10, by0 = 0.1, by1 = 1;
  const double lx0 = std::log10(bx0) - 0.05, lx1 = std::log10(bx1) + 0.05;
  const double ly0 = std::log10(by0) - 0.1, ly1 = std::log10(by1) + 0.1;
  auto sx = [&](double b) { return margin + (std::log10(b) - lx0) / (lx1 - lx0) * (width - 2 * margin); };
  auto sy = [&](double y) { return height - margin - (std::log10(y) - ly0) / (ly1 - ly0) * (height - 2 * margin); };
  os << std::setprecision(8);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << width - 2 * margin << "\" height=\""
     << height - 2 * margin << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">beta (log)</text>\n";
  os << "<text x=\"14\" y=\"" << height / 2 << "\" transform=\"rotate(-90 14 " << height / 2
     << ")\" text-anchor=\"middle\">|remainder| (log), j = " << j << "</text>\n";
  if (fitted_c && pts.size() > 1) {
    os << "<polyline fill=\"none\" stroke=\"gray\" stroke-dasharray=\"4 3\" points=\"";
    for (int k = 0; k <= 40; ++k) {
      const double b = std::pow(10.0, std::log10(bx0) + (std::log10(bx1) - std::log10(bx0)) * k / 40.0);
      os << sx(b) << ',' << sy(*fitted_c * rate_model(b)) << ' ';
    }
    os << "\"/>\n";
  }
  for (auto [b, y] : pts)
    os << "<circle cx=\"" << sx(b) << "\" cy=\"" << sy(y) << "\" r=\"4\" fill=\"steelblue\" data-beta=\"" << b
       << "\" data-remainder=\"" << y << "\"/>\n";
  os << "</svg>\n";
}

}  // namespace deltasurf
