// Acceptance suite: one PASS/FAIL line per criterion with its runtime.
// Exit status is the number of failed criteria.

#include "deltasurf/asymptotics.hpp"
#include "deltasurf/catalog.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace deltasurf;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(int id, const std::string& name, const std::function<void(Outcome&)>& body) {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!out.pass) ++failures;
  std::printf("%s criterion %d (%s): %.1f s;%s\n", out.pass ? "PASS" : "FAIL", id, name.c_str(), secs,
              out.detail.str().c_str());
  std::fflush(stdout);
}

void within(Outcome& o, const std::string& what, double value, double target, double rel) {
  o.detail << ' ' << what << '=' << value;
  o.check(std::abs(value - target) <= rel * std::abs(target), what);
}

Vec2 sample_domain(const ParameterDomain& d, std::mt19937& rng) {
  const auto [lo, hi] = domain_bounds(d);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    const Vec2 y(lo.x() + u(rng) * (hi.x() - lo.x()), lo.y() + u(rng) * (hi.y() - lo.y()));
    if (domain_contains(d, y, 0.0)) return y;
  }
}

std::shared_ptr<const LayerGeometry> sphere_layer(double h) {
  return std::make_shared<LayerGeometry>(std::make_shared<SurfaceMesh>(build_mesh(closed_sphere(1.0), MeshOptions{h})));
}

void geometry(Outcome& o) {
  const GeometryJet j = jet(torus_patch(2.0, 1.0, {-1.0, 1.0}, {-1.0, 1.0}), Vec2::Zero());
  within(o, "W_outer_equator", curvature_potential(j), -1.0 / 9.0, 1e-6);

  std::mt19937 rng(2024);
  const std::vector<Surface> catalog{flat_disk(1.0),
                                     flat_rectangle(1.0, 2.0),
                                     flat_polygon({{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}}),
                                     spherical_cap(1.0, 1.2),
                                     spherical_cap(2.0, kPi / 2),
                                     torus_patch(2.0, 1.0, {-3.0, 3.0}, {-1.0, 1.0}),
                                     torus_patch(3.0, 0.5, {-1.0, 2.0}, {0.0, 2.0}),
                                     paraboloid_patch(1.0, 0.5, 1.0),
                                     paraboloid_patch(2.0, -1.0, 0.8),
                                     closed_sphere(1.0)};
  int samples = 0, violations = 0;
  double w_max = -1e300;
  while (samples < 10000)
    for (const Surface& s : catalog)
      for (const SurfacePatch& p : s.patches) {
        const double w = curvature_potential(jet(p, sample_domain(p.domain, rng)));
        w_max = std::max(w_max, w);
        violations += w > 0.0;
        ++samples;
      }
  o.detail << " samples=" << samples << " max_W=" << w_max;
  o.check(violations == 0, "W <= 0 everywhere");
}

void surface_fem(Outcome& o) {
  FemOptions opt;
  opt.target_h = 0.1;
  opt.levels = 3;
  const double j01 = 2.404825557695773;
  auto timed = [&](const Surface& s, int count) {
    const auto t0 = std::chrono::steady_clock::now();
    SpectralResult r = dirichlet_modes(s, count, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.check(secs < 120.0, "runtime per surface");
    o.check(r.extrapolated, "extrapolated");
    return r;
  };
  within(o, "disk_mu1", timed(flat_disk(1.0), 1).eigenvalues[0], j01 * j01, 0.01);
  within(o, "square_mu1", timed(flat_rectangle(1.0, 1.0), 1).eigenvalues[0], 2 * kPi * kPi, 0.01);
  const SpectralResult hemi = timed(spherical_cap(1.0, kPi / 2), 3);
  within(o, "hemisphere_mu1", hemi.eigenvalues[0], 2.0, 0.02);
  within(o, "hemisphere_mu2", hemi.eigenvalues[1], 6.0, 0.02);
  within(o, "hemisphere_mu3", hemi.eigenvalues[2], 6.0, 0.02);
}

void transverse(Outcome& o) {
  const TransverseSpec d{1.0, 10.0, TransverseBoundary::Dirichlet, std::nullopt};
  const auto ground = dirichlet_ground(d);
  o.check(ground.has_value(), "negative eigenvalue exists");
  if (!ground) return;
  const double lo = -25.0, hi = -25.0 + 200.0 * std::exp(-5.0);
  o.detail << " Lambda1=" << *ground;
  o.check(*ground >= lo && *ground <= hi, "inside bracket");
  TransverseGrid grid;
  grid.intervals = 100000;
  grid.levels = 2;
  within(o, "fd_oracle", fd_spectrum_extrapolated(d, 1, grid)[0], *ground, 1e-4);

  // penalized operator in the window a = 6 log(beta) / beta with C = 1: the
  // constant c is the running envelope of beta |Lambda_1 + beta^2 / 4|
  std::vector<double> envelope;
  double c = 0.0;
  for (double beta : {40.0, 80.0, 160.0}) {
    const double a = 6.0 * std::log(beta) / beta;
    const auto ev = penalized_spectrum({a, beta, TransverseBoundary::NeumannPenalized, 1.0}, 2);
    o.check(ev[1] >= 0.0, "Lambda2 >= 0");
    const double c_beta = beta * std::abs(ev[0] + 0.25 * beta * beta);
    o.detail << " c(" << beta << ")=" << c_beta;
    c = std::max(c, c_beta);
    envelope.push_back(c);
  }
  o.detail << " envelope=" << envelope.front() << ".." << envelope.back();
  for (double e : envelope) o.check(std::abs(e - envelope.back()) <= 0.5 * envelope.back(), "c stable within 50%");
}

void bem_validation(Outcome& o) {
  const auto geo = sphere_layer(0.14);
  o.detail << " panels=" << geo->panel_count();
  const std::vector<double> mu = bs_eigenvalues(assemble_layer(geo, 0.0), 9);
  within(o, "mu1", mu[0], 1.0, 0.02);
  for (int j = 1; j < 4; ++j) within(o, "mu" + std::to_string(j + 1), mu[j], 1.0 / 3.0, 0.02);
  for (int j = 4; j < 9; ++j) within(o, "mu" + std::to_string(j + 1), mu[j], 0.2, 0.02);
}

void monotonicity(Outcome& o) {
  const auto coarse = sphere_layer(0.3);
  std::vector<double> prev;
  for (double kappa : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 12.0}) {
    const std::vector<double> mu = bs_eigenvalues(assemble_layer(coarse, kappa), 5);
    if (!prev.empty())
      for (int j = 0; j < 5; ++j) o.check(mu[j] < prev[j], "mu_j decreasing in kappa");
    prev = mu;
  }

  BoundStateOptions bo;
  bo.tolerance = 1e-10;
  bo.normalize = false;
  std::optional<double> prev_e[2];
  for (double beta : {4.0, 8.0, 12.0, 20.0}) {
    const BoundStateResult r = solve_bound_states(coarse, beta, 2, bo);
    for (int j = 0; j < 2; ++j) {
      o.check(r.eigenvalues[j].has_value(), "bound state found");
      if (prev_e[j] && r.eigenvalues[j]) o.check(*r.eigenvalues[j] < *prev_e[j], "E_j decreasing in beta");
      prev_e[j] = r.eigenvalues[j];
    }
  }

  // the ground-state density is constant and reproduced exactly by P1, so
  // its defect is quadrature noise; the l = 1 state carries the trend
  const BoundStateResult before = solve_bound_states(coarse, 20.0, 2, bo);
  const BoundStateResult after = solve_bound_states(sphere_layer(0.2), 20.0, 2, bo);
  const double d0 = trace_consistency(before, 1), d1 = trace_consistency(after, 1);
  o.detail << " trace_defect_l1: " << d0 << " -> " << d1 << " (ground: " << trace_consistency(before, 0) << " -> "
           << trace_consistency(after, 0) << ")";
  o.check(d1 < d0, "trace defect decreasing under refinement");
}

void strong_coupling(Outcome& o) {
  SweepOptions opt;
  opt.betas = {8.0, 16.0, 32.0, 64.0};
  opt.j_max = 1;
  opt.fem.target_h = 0.05;
  opt.fem.levels = 3;
  opt.xi = 6.0;
  opt.geometry_constant = 1.0;
  const SweepResult s = sweep(spherical_cap(1.0, kPi / 2), opt);
  o.detail << " muD=" << s.surface.eigenvalues[0] << " remainders:";
  for (const SweepRecord& r : s.records) {
    o.check(r.energy.has_value(), "bound state at every beta");
    o.detail << ' ' << r.remainder << (r.converged ? "" : "(unconverged)");
  }
  o.check(s.dropped.empty(), "no beta dropped");
  o.check(tail_nonincreasing(s.records, 1, 3), "(a) |remainder| nonincreasing over the last three betas");
  o.check(std::abs(s.records.back().remainder) < std::abs(s.records.front().remainder), "(a) approaches muD");
  const RateFit fit = fit_rate(s.records, 1);
  o.detail << " c=" << fit.fitted_c << " misfit=" << fit.max_rel_misfit;
  o.check(fit.max_rel_misfit <= 0.5, "(b) misfit <= 50%");
  o.check(fit.monotone_flag, "(b) monotone");
  for (const BoundCheck& c : cross_check_bounds(s.records, 1.0, 6.0)) {
    o.check(c.status == BoundStatus::Pass, "(c) separated bound at beta=" + std::to_string(c.beta));
  }
}

void eigenfunction_bounds(Outcome& o) {
  const BoundStateResult r = solve_bound_states(sphere_layer(0.2), 20.0, 1);
  o.check(r.kappas[0].has_value(), "ground state");
  if (!r.kappas[0]) return;
  const double kappa = *r.kappas[0], l1 = density_l1(*r.geometry, r.densities[0]);
  std::mt19937 rng(20);
  std::uniform_real_distribution<double> radius(1.02, 3.0);
  std::normal_distribution<double> normal;
  double worst = -1e300;
  int violations = 0;
  for (int i = 0; i < 100; ++i) {
    Vec3 x(normal(rng), normal(rng), normal(rng));
    x *= radius(rng) / x.norm();
    const double d = distance_to_surface(*r.geometry, x);
    const FieldValue u = reconstruct_eigenfunction(r, 0, x);
    const double kernel = std::exp(-kappa * d) / (4 * kPi * d);
    const double excess = std::max(std::abs(u.value) - kernel * l1, u.gradient.norm() - kernel * (kappa + 1.0 / d) * l1);
    worst = std::max(worst, excess);
    violations += excess > 1e-6;
  }
  o.detail << " max(|u| - bound)=" << worst;
  o.check(violations == 0, "pointwise bound at 100 points");
}

}  // namespace

int main() {
  criterion(1, "geometry", geometry);
  criterion(2, "surface FEM", surface_fem);
  criterion(3, "transverse 1D", transverse);
  criterion(4, "BEM validation", bem_validation);
  criterion(5, "Birman-Schwinger monotonicity", monotonicity);
  criterion(6, "strong-coupling asymptotics", strong_coupling);
  criterion(7, "eigenfunction bounds", eigenfunction_bounds);
  std::printf("%d of 7 criteria failed\n", failures);
  return failures;
}
