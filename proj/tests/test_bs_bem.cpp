#include "deltasurf/bs_bem.hpp"
#include "deltasurf/catalog.hpp"
#include "deltasurf/transverse1d.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

using namespace deltasurf;

namespace {

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol, int depth = 40) {
  std::function<double(double, double, double, double, double, double, int)> rec =
      [&](double a, double b, double fa, double fm, double fb, double whole, int d) {
        const double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
        const double flm = f(lm), frm = f(rm);
        const double left = (m - a) / 6.0 * (fa + 4 * flm + fm), right = (b - m) / 6.0 * (fm + 4 * frm + fb);
        if (d <= 0 || std::abs(left + right - whole) <= 15 * tol) return left + right + (left + right - whole) / 15.0;
        return rec(a, m, fa, flm, fm, left, d - 1) + rec(m, b, fm, frm, fb, right, d - 1);
      };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec(a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4 * fm + fb), depth);
}

double legendre(int l, double t) {
  double p0 = 1.0, p1 = t;
  if (l == 0) return p0;
  for (int k = 1; k < l; ++k) {
    const double p2 = ((2 * k + 1) * t * p1 - k * p0) / (k + 1);
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

// Eigenvalue of the Yukawa single layer on the unit sphere for degree l, by
// Funk-Hecke: 2 pi int_{-1}^{1} G(|x - y|) P_l(t) dt with |x - y| = sqrt(2 - 2t).
// With t = 1 - u^2 / 2 the distance is u and the 1/r singularity cancels.
double sphere_layer_eigenvalue(int l, double kappa) {
  auto f = [&](double u) { return std::exp(-kappa * u) / (4.0 * kPi) * legendre(l, 1.0 - 0.5 * u * u); };
  return 2.0 * kPi * adaptive_simpson(f, 0.0, 2.0, 1e-13);
}

// beta mu_0(kappa) = 1 on the unit sphere, by bisection.
double sphere_ground_kappa(double beta) {
  double lo = 1e-12, hi = beta;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (beta * sphere_layer_eigenvalue(0, mid) > 1.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::shared_ptr<const LayerGeometry> layer_geometry(const Surface& s, MeshOptions opt) {
  return std::make_shared<LayerGeometry>(std::make_shared<SurfaceMesh>(build_mesh(s, opt)));
}

std::shared_ptr<const LayerGeometry> sphere(double h) { return layer_geometry(closed_sphere(), MeshOptions{h}); }

const std::shared_ptr<const LayerGeometry>& coarse_sphere() {
  static const auto geo = sphere(0.3);
  return geo;
}

const BoundStateResult& coarse_sphere_beta8() {
  static const BoundStateResult r = solve_bound_states(coarse_sphere(), 8.0, 1);
  return r;
}

}  // namespace

TEST(SphereOracle, FunkHeckeReproducesTheClosedForms) {
  for (int l = 0; l < 4; ++l) EXPECT_NEAR(sphere_layer_eigenvalue(l, 0.0), 1.0 / (2 * l + 1), 1e-10);
  const double k = 3.0;
  EXPECT_NEAR(sphere_layer_eigenvalue(0, k), (1.0 - std::exp(-2 * k)) / (2 * k), 1e-10);
}

TEST(LayerOperator, LaplaceSphereSpectrum) {
  const LayerOperator op = assemble_layer(coarse_sphere(), 0.0);
  const std::vector<double> mu = bs_eigenvalues(op, 9);
  EXPECT_NEAR(mu[0], 1.0, 0.005);
  for (int j = 1; j < 4; ++j) EXPECT_NEAR(mu[j], 1.0 / 3.0, 0.005 / 3.0);
  for (int j = 4; j < 9; ++j) EXPECT_NEAR(mu[j], 0.2, 0.005 * 0.2);
}

TEST(LayerOperator, YukawaSphereSpectrum) {
  const double kappa = 2.5;
  const std::vector<double> mu = bs_eigenvalues(assemble_layer(coarse_sphere(), kappa), 9);
  const int degree[9] = {0, 1, 1, 1, 2, 2, 2, 2, 2};
  for (int j = 0; j < 9; ++j) {
    const double exact = sphere_layer_eigenvalue(degree[j], kappa);
    EXPECT_NEAR(mu[j], exact, 2e-3 * exact) << j;
  }
}

TEST(LayerOperator, SymmetricBeforeAveragingAndPositive) {
  LayerOptions opt;
  opt.ordered_pairs = true;
  const LayerOperator op = assemble_layer(layer_geometry(spherical_cap(1.0, kPi / 2), MeshOptions{0.2}), 4.0, opt);
  EXPECT_LE(op.asymmetry, 1e-8);
  EXPECT_EQ((op.matrix - op.matrix.transpose()).norm(), 0.0);
  const EigenPairs all = dense_generalized_largest(op.matrix, MatrixXd(op.mass), static_cast<int>(op.matrix.rows()));
  EXPECT_GT(all.values.minCoeff(), 0.0);
}

TEST(LayerOperator, StrictlyDecreasingInKappa) {
  const auto geo = sphere(0.45);
  std::vector<double> prev;
  for (double kappa : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    const std::vector<double> mu = bs_eigenvalues(assemble_layer(geo, kappa), 5);
    if (!prev.empty())
      for (int j = 0; j < 5; ++j) EXPECT_LT(mu[j], prev[j]) << kappa << ' ' << j;
    prev = mu;
  }
  EXPECT_LT(prev[0], 0.07);
}

TEST(LayerOperator, LumpedAndConsistentGramAgree) {
  LayerOptions lumped;
  lumped.lumped_mass = true;
  const auto geo = sphere(0.2);
  const double consistent = bs_eigenvalues(assemble_layer(geo, 1.0), 1)[0];
  const double lumped_value = bs_eigenvalues(assemble_layer(geo, 1.0, lumped), 1)[0];
  EXPECT_NEAR(lumped_value, consistent, 0.01 * consistent);
}

TEST(LayerOperator, FarPatchesOffBlockBound) {
  Surface two;
  two.patches = {flat_disk(0.5), flat_disk(0.5, Vec2(4.0, 0.0))};
  two.name = "two_disks";
  const auto geo = layer_geometry(two, MeshOptions{0.15});
  const double kappa = 3.0;
  const LayerOperator op = assemble_layer(geo, kappa);
  const auto& mesh = geo->mesh();
  std::vector<int> side(mesh.vertices.size());
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) side[v] = mesh.vertices[v].point.x() > 2.0 ? 1 : 0;
  double off = 0.0;
  for (std::size_t i = 0; i < side.size(); ++i)
    for (std::size_t j = 0; j < side.size(); ++j)
      if (side[i] != side[j]) off += std::abs(op.matrix(i, j));
  const double dist = 3.0, area = kPi * 0.25;
  // the hat functions sum to one, so the block sum is the pair integral over both patches
  EXPECT_LE(0.5 * off, std::exp(-kappa * dist) / (4 * kPi * dist) * area * area);
  EXPECT_GT(off, 0.0);
}

TEST(BoundStates, SphereGroundStateMatchesTheRadialOracle) {
  const BoundStateResult& r = coarse_sphere_beta8();
  ASSERT_TRUE(r.eigenvalues[0]);
  const double kappa = sphere_ground_kappa(8.0);
  EXPECT_NEAR(*r.eigenvalues[0], -kappa * kappa, 1e-3 * kappa * kappa);
  EXPECT_LE(r.bisection_residuals[0], 1e-6);
  EXPECT_GE(*r.eigenvalues[0] + 16.0, -2.0);
  EXPECT_LE(*r.eigenvalues[0] + 16.0, 2.0);
}

TEST(BoundStates, ThresholdGivesOneShallowState) {
  const double mu0 = bs_eigenvalues(assemble_layer(coarse_sphere(), 0.0), 1)[0];
  const double beta = 1.02 / mu0;
  const BoundStateResult r = solve_bound_states(coarse_sphere(), beta, 2);
  ASSERT_TRUE(r.eigenvalues[0]);
  EXPECT_LT(*r.eigenvalues[0], 0.0);
  EXPECT_GT(*r.eigenvalues[0], -0.01);
  EXPECT_FALSE(r.eigenvalues[1]);
}

TEST(BoundStates, DecreasingInBeta) {
  double prev = 0.0;
  for (double beta : {4.0, 6.0, 8.0}) {
    const BoundStateResult r = solve_bound_states(coarse_sphere(), beta, 1);
    ASSERT_TRUE(r.eigenvalues[0]);
    EXPECT_LT(*r.eigenvalues[0], prev);
    prev = *r.eigenvalues[0];
  }
}

TEST(BoundStates, LargerDiskBindsDeeper) {
  const double beta = 12.0;
  const BoundStateResult small = solve_bound_states(layer_geometry(flat_disk(0.7), MeshOptions{0.12}), beta, 1);
  const BoundStateResult large = solve_bound_states(layer_geometry(flat_disk(1.0), MeshOptions{0.12}), beta, 1);
  ASSERT_TRUE(small.eigenvalues[0] && large.eigenvalues[0]);
  EXPECT_LT(*large.eigenvalues[0], *small.eigenvalues[0]);
  EXPECT_GE(*large.eigenvalues[0], -0.25 * beta * beta);
}

TEST(BoundStates, DegenerateLevelsReportMultiplicity) {
  const BoundStateResult r = solve_bound_states(coarse_sphere(), 8.0, 4);
  for (int j = 1; j < 4; ++j) ASSERT_TRUE(r.eigenvalues[j]);
  // the l = 1 triplet of the sphere
  EXPECT_NEAR(*r.eigenvalues[3], *r.eigenvalues[1], 1e-3 * std::abs(*r.eigenvalues[1]));
  EXPECT_LT(*r.eigenvalues[0], *r.eigenvalues[1]);
  for (int j = 0; j < 4; ++j) EXPECT_GE(r.multiplicities[j], 1);
}

TEST(Field, ZeroDensityGivesZeroField) {
  const auto& geo = coarse_sphere();
  const FieldValue f = layer_potential(*geo, 2.0, SurfaceDensity::Zero(geo->vertex_count()), Vec3(0.3, 0.2, 1.7));
  EXPECT_EQ(f.value, 0.0);
  EXPECT_EQ(f.gradient.norm(), 0.0);
}

TEST(Field, DiskAxisMatchesRadialQuadrature) {
  const auto geo = layer_geometry(flat_disk(1.0), MeshOptions{0.04});
  const double kappa = 1.5;
  const SurfaceDensity ones = SurfaceDensity::Ones(geo->vertex_count());
  for (double z : {0.05, 0.4, 2.0}) {
    auto integrand = [&](double rho) {
      const double r = std::hypot(rho, z);
      return 2.0 * kPi * rho * std::exp(-kappa * r) / (4.0 * kPi * r);
    };
    const double oracle = adaptive_simpson(integrand, 0.0, 1.0, 1e-13);
    const FieldValue f = layer_potential(*geo, kappa, ones, Vec3(0.0, 0.0, z));
    EXPECT_NEAR(f.value, oracle, 2e-3 * oracle) << z;
    EXPECT_NEAR(f.gradient.x(), 0.0, 1e-3 * std::abs(f.gradient.z()));
    EXPECT_LT(f.gradient.z(), 0.0);
  }
}

TEST(Field, ExponentialBoundsAtRandomExteriorPoints) {
  const BoundStateResult& r = coarse_sphere_beta8();
  ASSERT_TRUE(r.kappas[0]);
  const double kappa = *r.kappas[0];
  const double l1 = density_l1(*r.geometry, r.densities[0]);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> radius(1.05, 3.0);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 20; ++i) {
    Vec3 x(normal(rng), normal(rng), normal(rng));
    x *= radius(rng) / x.norm();
    const double d = distance_to_surface(*r.geometry, x);
    EXPECT_NEAR(d, x.norm() - 1.0, 2e-3);
    const FieldValue u = reconstruct_eigenfunction(r, 0, x);
    const double kernel = std::exp(-kappa * d) / (4 * kPi * d);
    EXPECT_LE(std::abs(u.value), kernel * l1 + 1e-6);
    EXPECT_LE(u.gradient.norm(), kernel * (kappa + 1.0 / d) * l1 + 1e-6);
  }
}

TEST(Field, TraceDefectSmallAndShrinksUnderRefinement) {
  // Constants are in the P1 space and the l = 0 mode is an exact discrete
  // fixed point: its defect is quadrature noise. The l = 1 states are not.
  const BoundStateResult coarse = solve_bound_states(sphere(0.45), 8.0, 2);
  const BoundStateResult fine = solve_bound_states(coarse_sphere(), 8.0, 2);
  EXPECT_LE(trace_consistency(coarse, 0), 1e-4);
  EXPECT_LE(trace_consistency(fine, 0), 1e-4);
  const double before = trace_consistency(coarse, 1), after = trace_consistency(fine, 1);
  EXPECT_LE(after, 0.05);
  EXPECT_LT(after, before);
}

TEST(Field, NormalizedDensityGivesUnitFieldNorm) {
  // radial check: |u|^2 integrated over spherical shells, u from the layer potential
  const BoundStateResult& r = coarse_sphere_beta8();
  const double kappa = *r.kappas[0];
  double norm2 = 0.0;
  const GaussRule& g = gauss_legendre(16);
  // interior r in (0, 1) and exterior r in (1, 1 + 12 / kappa); angular average over 26 directions
  std::vector<Vec3> dirs;
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      for (int c = -1; c <= 1; ++c)
        if (a || b || c) dirs.push_back(Vec3(a, b, c).normalized());
  auto shell = [&](double rad) {
    double s = 0.0;
    for (const Vec3& d : dirs) s += std::pow(reconstruct_eigenfunction(r, 0, rad * d).value, 2);
    return 4.0 * kPi * rad * rad * s / dirs.size();
  };
  const double outer = 12.0 / kappa;
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    norm2 += g.weights[i] * (shell(g.nodes[i]) + outer * shell(1.0 + outer * g.nodes[i]));
  EXPECT_NEAR(norm2, 1.0, 0.1);
}

TEST(BoundStateCsv, HeaderAndRows) {
  std::ostringstream os;
  write_bound_states_csv(os, {coarse_sphere_beta8()}, {{0.01}});
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "beta,j,E_j,kappa_j,bisection_residual,trace_defect");
  EXPECT_NE(s.find("\n8,1,"), std::string::npos);
}
