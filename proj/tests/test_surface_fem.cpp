#include "deltasurf/catalog.hpp"
#include "deltasurf/surface_fem.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

using namespace deltasurf;

namespace {

// J0 by its power series, first zero by bisection.
double bessel_j0_series(double x) {
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 80; ++k) {
    term *= -(x * x / 4.0) / (double(k) * k);
    sum += term;
  }
  return sum;
}

double first_j0_zero() {
  double lo = 2.0, hi = 3.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (bessel_j0_series(lo) * bessel_j0_series(mid) <= 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

// Adaptive Simpson in one variable, nested for rectangles.
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

}  // namespace

TEST(Fem, FlatStiffnessIsTheEuclideanForm) {
  const SurfaceMesh mesh = build_mesh(flat_rectangle(), 0.25);
  const StiffnessSystem sys = assemble(mesh);
  // P2 interpolants of quadratics are exact, so the form is integrated exactly.
  auto interpolate = [&](const std::function<double(const Vec2&)>& f) {
    const detail::P2Layout layout = detail::p2_layout(mesh);
    VectorXd u(sys.dof_count);
    for (std::size_t t = 0; t < layout.dofs.size(); ++t)
      for (int k = 0; k < 6; ++k) u[layout.dofs[t][k]] = f(layout.nodes[t][k]);
    return u;
  };
  const VectorXd x = interpolate([](const Vec2& y) { return y.x(); });
  const VectorXd xx = interpolate([](const Vec2& y) { return y.x() * y.x(); });
  const VectorXd yy = interpolate([](const Vec2& y) { return y.y() * y.y(); });
  EXPECT_NEAR(x.dot(sys.full_laplace * x), 1.0, 1e-12);
  EXPECT_NEAR(xx.dot(sys.full_laplace * xx), 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(x.dot(sys.full_laplace * yy), 0.0, 1e-12);
  EXPECT_NEAR(xx.dot(sys.full_mass * yy), 1.0 / 9.0, 1e-12);
  EXPECT_EQ(sys.full_potential.norm(), 0.0);
}

TEST(Fem, MatricesAreSymmetricAndLaplacianSemidefinite) {
  const SurfaceMesh mesh = build_mesh(torus_patch(2.0, 1.0, {-1, 1}, {-1, 1}), 0.3);
  const StiffnessSystem sys = assemble(mesh);
  for (const SparseMatrix* m : {&sys.stiffness, &sys.mass, &sys.full_laplace}) {
    const SparseMatrix t = m->transpose();
    EXPECT_LE((*m - t).norm(), 1e-13 * m->norm());
  }
  const MatrixXd dense(sys.full_laplace);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(dense);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10 * es.eigenvalues().maxCoeff());
}

TEST(Fem, UmbilicCapHasNoPotential) {
  const StiffnessSystem sys = assemble(build_mesh(spherical_cap(1.0, 1.0), 0.2));
  EXPECT_LE(sys.full_potential.norm(), 1e-13);
}

TEST(Fem, TorusPotentialIntegralMatchesAdaptiveOracle) {
  const double big = 2.0, small = 1.0;
  const StiffnessSystem sys = assemble(build_mesh(torus_patch(big, small, {-1, 1}, {-1, 1}), 0.1));
  const VectorXd one = VectorXd::Ones(sys.dof_count);
  const double quadrature = one.dot(sys.full_potential * one);
  // closed form on the torus: k = 1/r and cos(theta)/(R + r cos(theta)), dA = r (R + r cos) dtheta dphi
  auto integrand = [&](double theta) {
    const double rho = big + small * std::cos(theta);
    const double diff = 1.0 / small - std::cos(theta) / rho;
    return -0.25 * diff * diff * small * rho;
  };
  const double oracle = 2.0 * adaptive_simpson(integrand, -1.0, 1.0, 1e-12);
  EXPECT_NEAR(quadrature, oracle, 1e-3 * std::abs(oracle));
}

TEST(Fem, LanczosMatchesDenseSolve) {
  const StiffnessSystem sys = assemble(build_mesh(flat_disk(), 0.15));
  ASSERT_GT(sys.stiffness.rows(), 300);
  const SpectralResult lanczos = solve_modes(sys, 6);
  EigenPairs dense = dense_generalized_largest(-MatrixXd(sys.stiffness), MatrixXd(sys.mass), 6);
  for (int j = 0; j < 6; ++j) {
    EXPECT_NEAR(lanczos.eigenvalues[j], -dense.values[j], 1e-8 * std::abs(dense.values[j]));
    EXPECT_LE(lanczos.residuals[j], 1e-6);
  }
  for (int j = 1; j < 6; ++j) EXPECT_LE(lanczos.eigenvalues[j - 1], lanczos.eigenvalues[j]);
}

TEST(Fem, UnitDiskGroundState) {
  const double j01 = first_j0_zero();
  EXPECT_NEAR(j01, 2.404825557695773, 1e-12);
  const SpectralResult r = solve_modes(assemble(build_mesh(flat_disk(), 0.03)), 1);
  EXPECT_NEAR(r.eigenvalues[0], j01 * j01, 0.01 * j01 * j01);
}

TEST(Fem, UnitSquareModes) {
  const double pi2 = kPi * kPi;
  const SpectralResult r = solve_modes(assemble(build_mesh(flat_rectangle(), 0.05)), 3);
  EXPECT_NEAR(r.eigenvalues[0], 2 * pi2, 0.01 * 2 * pi2);
  EXPECT_NEAR(r.eigenvalues[1], 5 * pi2, 0.01 * 5 * pi2);
  EXPECT_NEAR(r.eigenvalues[2], 5 * pi2, 0.01 * 5 * pi2);
}

TEST(Fem, HemisphereModesExtrapolated) {
  FemOptions opt;
  opt.target_h = 0.1;
  const SpectralResult r = dirichlet_modes(spherical_cap(1.0, kPi / 2), 3, opt);
  ASSERT_TRUE(r.extrapolated);
  EXPECT_NEAR(r.eigenvalues[0], 2.0, 0.02 * 2.0);
  EXPECT_NEAR(r.eigenvalues[1], 6.0, 0.02 * 6.0);
  EXPECT_NEAR(r.eigenvalues[2], 6.0, 0.02 * 6.0);
}

TEST(Fem, ClosedSphereBottomIsZero) {
  const SpectralResult r = solve_modes(assemble(build_mesh(closed_sphere(), MeshOptions{0.3})), 4);
  EXPECT_NEAR(r.eigenvalues[0], 0.0, 1e-8);
  for (int j = 1; j < 4; ++j) EXPECT_NEAR(r.eigenvalues[j], 2.0, 0.02);
}

TEST(Fem, MultiplicitiesGroupNearlyEqualValues) {
  const std::vector<int> m = detail::cluster_sizes({1.0, 2.0, 2.0 + 1e-9, 2.0 + 2e-9, 3.0, 3.1});
  EXPECT_EQ(m, (std::vector<int>{1, 3, 3, 3, 1, 1}));
}

TEST(Fem, ConstantShiftCovariance) {
  const SurfaceMesh mesh = build_mesh(torus_patch(2.0, 1.0, {-1, 1}, {-1, 1}), 0.2);
  const SpectralResult base = solve_modes(assemble(mesh), 4);
  const double c = 3.7;
  const SpectralResult shifted = solve_modes(assemble(mesh, c), 4);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(shifted.eigenvalues[j] - base.eigenvalues[j], c, 1e-8);
}

TEST(Fem, PotentialBoundFromTheForm) {
  const SurfaceMesh mesh = build_mesh(torus_patch(2.0, 1.0, {-1.2, 1.2}, {-1, 1}), 0.15);
  const StiffnessSystem sys = assemble(mesh);
  StiffnessSystem bare = sys;
  bare.stiffness = sys.laplace;
  bare.min_potential = 0.0;
  const double lb1 = solve_modes(bare, 1).eigenvalues[0];
  const SpectralResult r = solve_modes(sys, 4);
  for (double mu : r.eigenvalues) EXPECT_GE(mu, lb1 + sys.min_potential - 1e-9);
  EXPECT_LT(sys.min_potential, 0.0);
}

TEST(Fem, RefinementConvergesMonotonically) {
  std::vector<double> values;
  for (double h : {0.4, 0.2, 0.1}) values.push_back(solve_modes(assemble(build_mesh(flat_disk(), h)), 1).eigenvalues[0]);
  const double exact = std::pow(first_j0_zero(), 2);
  EXPECT_GT(std::abs(values[0] - exact), std::abs(values[1] - exact));
  EXPECT_GT(std::abs(values[1] - exact), std::abs(values[2] - exact));
  EXPECT_LT(std::abs(richardson(values, 4.0) - exact), std::abs(values[2] - exact));
}

TEST(Fem, RichardsonOnSyntheticSequences) {
  std::vector<double> seq;
  for (double h : {0.4, 0.2, 0.1}) seq.push_back(7.0 + 3.0 * std::pow(h, 2));
  double order = 0.0;
  EXPECT_NEAR(richardson(seq, 4.0, &order), 7.0, 1e-12);
  EXPECT_NEAR(order, 2.0, 1e-9);
  EXPECT_EQ(richardson({1.0, 1.0, 1.0}, 4.0), 1.0);
}

TEST(Offset, ZeroMarginIsTheOriginalProblem) {
  FemOptions opt;
  opt.target_h = 0.1;
  opt.levels = 1;
  const SpectralResult a = offset_modes(flat_disk(), 0.0, 2, opt);
  const SpectralResult b = dirichlet_modes(flat_disk(), 2, opt);
  for (int j = 0; j < 2; ++j) EXPECT_EQ(a.eigenvalues[j], b.eigenvalues[j]);
}

TEST(Offset, DiskScalingLaw) {
  const double j2 = std::pow(first_j0_zero(), 2);
  FemOptions opt;
  opt.target_h = 0.05;
  opt.levels = 1;
  const SpectralResult r = offset_modes(flat_disk(), 0.05, 1, opt);
  EXPECT_NEAR(r.eigenvalues[0], j2 / (1.05 * 1.05), 0.01 * j2 / (1.05 * 1.05));
}

TEST(Offset, LipschitzSlopeAndDomainMonotonicity) {
  FemOptions opt;
  opt.target_h = 0.1;
  opt.levels = 1;
  const double mu0 = dirichlet_modes(flat_disk(), 2, opt).eigenvalues[0];
  std::vector<double> slopes;
  double prev = mu0;
  std::vector<double> prev_all = dirichlet_modes(flat_disk(), 2, opt).eigenvalues;
  for (double a : {0.02, 0.04, 0.08}) {
    const SpectralResult r = offset_modes(flat_disk(), a, 2, opt);
    slopes.push_back(std::abs(r.eigenvalues[0] - mu0) / a);
    EXPECT_LT(r.eigenvalues[0], prev);
    for (int j = 0; j < 2; ++j) EXPECT_LE(r.eigenvalues[j], prev_all[j]);
    prev = r.eigenvalues[0];
    prev_all = r.eigenvalues;
  }
  const double c = slopes.front();
  for (double s : slopes) EXPECT_NEAR(s, c, 0.25 * c);
}

TEST(Offset, RectangleAndPolygonOffsetsAndChartLimit) {
  const SurfacePatch rect = offset_patch(flat_rectangle(), 0.1);
  const auto& r = std::get<RectDomain>(rect.domain);
  EXPECT_NEAR(r.lo.x(), -0.1, 1e-12);
  EXPECT_NEAR(r.hi.y(), 1.1, 1e-12);
  const std::vector<Vec2> corners{{0, 0}, {1, 0}, {0, 1}};
  const auto moved = std::get<PolygonDomain>(offset_patch(flat_polygon(corners), 0.1).domain).vertices;
  auto line_distance = [](const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 d = (b - a).normalized();
    return std::abs(d.x() * (p - a).y() - d.y() * (p - a).x());
  };
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(line_distance(moved[i], corners[i], corners[(i + 1) % 3]), 0.1, 1e-12);
    EXPECT_NEAR(line_distance(moved[i], corners[(i + 2) % 3], corners[i]), 0.1, 1e-12);
  }
  // torus side phi: metric scale 1 / (R + r cos theta) on the phi sides
  const SurfacePatch torus = offset_patch(torus_patch(2.0, 1.0, {-0.5, 0.5}, {-0.5, 0.5}), 0.05);
  EXPECT_NEAR(std::get<RectDomain>(torus.domain).lo.x(), -0.55, 1e-12);
  // geodesic cap: enlarging past the antipode is impossible
  try {
    offset_patch(spherical_cap(1.0, 3.0), 0.2);
    FAIL() << "expected chart-domain error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ChartDomain);
  }
}
