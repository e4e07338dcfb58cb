#include "deltasurf/asymptotics.hpp"
#include "deltasurf/catalog.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace deltasurf;

namespace {

std::vector<SweepRecord> synthetic(const std::vector<double>& betas, auto remainder) {
  std::vector<SweepRecord> out;
  for (double b : betas) {
    SweepRecord r;
    r.beta = b;
    r.j = 1;
    r.surface_eigenvalue = 2.0;
    r.remainder = remainder(b);
    r.shifted = r.surface_eigenvalue + r.remainder;
    r.energy = r.shifted - 0.25 * b * b;
    r.converged = true;
    out.push_back(r);
  }
  return out;
}

const SweepResult& disk_sweep() {
  static const SweepResult s = [] {
    SweepOptions opt;
    opt.betas = {10.0, 20.0};
    opt.j_max = 2;
    opt.h_max = 0.25;
    opt.fem.target_h = 0.08;
    opt.fem.levels = 2;
    opt.geometry_constant = 1.0;
    return sweep(flat_disk(1.0), opt);
  }();
  return s;
}

}  // namespace

TEST(RateFit, ExactModelGivesItsConstant) {
  const auto rows = synthetic({4, 8, 16, 32, 64}, [](double b) { return -3.0 * std::log(b) / b; });
  const RateFit fit = fit_rate(rows, 1);
  EXPECT_NEAR(fit.fitted_c, 3.0, 1e-12);
  EXPECT_LT(fit.max_rel_misfit, 1e-12);
  EXPECT_TRUE(fit.monotone_flag);
}

TEST(RateFit, ConstantRemainderIsNotMonotoneDecay) {
  auto rows = synthetic({4, 8, 16, 32}, [](double) { return 0.5; });
  rows[2].remainder = 0.6;
  const RateFit fit = fit_rate(rows, 1);
  EXPECT_FALSE(fit.monotone_flag);
  EXPECT_GT(fit.max_rel_misfit, 0.1);
  EXPECT_FALSE(tail_nonincreasing(rows, 1));
}

TEST(RateFit, RejectsTooFewOrTooNarrowData) {
  auto model = [](double b) { return std::log(b) / b; };
  try {
    fit_rate(synthetic({4, 8, 32}, model), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
  }
  EXPECT_THROW(fit_rate(synthetic({4, 5, 6, 7, 8}, model), 1), Error);
  auto rows = synthetic({4, 8, 16, 32}, model);
  rows[1].converged = false;
  EXPECT_THROW(fit_rate(rows, 1), Error);
}

TEST(RateFit, DoublingCheck) {
  auto rows = synthetic({4, 8, 16}, [](double b) { return 1.0 / b; });
  EXPECT_TRUE(doubling_nonincreasing(rows, 1));
  rows[2].remainder = 0.3;
  EXPECT_FALSE(doubling_nonincreasing(rows, 1));
}

TEST(RateFit, LipschitzBoundaryWithholdsTheFit) {
  SweepResult s;
  s.records = synthetic({4, 8, 16, 32}, [](double b) { return std::log(b) / b; });
  s.boundary = BoundaryClass::Lipschitz;
  EXPECT_FALSE(gated_rate_fit(s, 1).has_value());
  s.boundary = BoundaryClass::Smooth;
  EXPECT_TRUE(gated_rate_fit(s, 1).has_value());
}

TEST(BoundCrossCheck, SkipsInvalidRowsAndMissingStates) {
  auto rows = synthetic({1.2, 20}, [](double) { return 0.0; });
  rows.push_back(rows.back());
  rows.back().energy.reset();
  const auto checks = cross_check_bounds(rows, 1.0, 6.0);
  ASSERT_EQ(checks.size(), 3u);
  // beta a = 6 log 1.2 is below the transverse validity threshold
  EXPECT_EQ(checks[0].status, BoundStatus::Skipped);
  EXPECT_FALSE(checks[0].reason.empty());
  EXPECT_EQ(checks[1].status, BoundStatus::Pass);
  EXPECT_EQ(checks[2].status, BoundStatus::Skipped);
  EXPECT_EQ(checks[2].reason, "no bound state");
  EXPECT_THROW(cross_check_bounds(rows, 1.0, 5.0), Error);
}

TEST(Sweep, BookkeepingAndBound) {
  const SweepResult& s = disk_sweep();
  ASSERT_EQ(s.records.size(), 4u);
  EXPECT_EQ(s.boundary, BoundaryClass::Smooth);
  for (const SweepRecord& r : s.records) {
    ASSERT_TRUE(r.energy);
    EXPECT_NEAR(r.shifted - r.remainder, r.surface_eigenvalue, 1e-12);
    EXPECT_NEAR(r.shifted, *r.energy + 0.25 * r.beta * r.beta, 1e-12);
    EXPECT_LT(r.bisection_residual, 1e-8);
    EXPECT_GT(r.panels, r.coarse_panels);
    ASSERT_TRUE(r.upper_bound);
    EXPECT_LE(*r.energy, *r.upper_bound);
  }
  for (const BoundCheck& c : cross_check_bounds(s.records, 1.0, 6.0)) EXPECT_NE(c.status, BoundStatus::Fail);
}

TEST(Sweep, ShiftedEnergyMovesTowardTheSurfaceLevel) {
  const SweepResult& s = disk_sweep();
  // records ordered (beta, j): j = 1 at indices 0 and 2
  EXPECT_LT(std::abs(s.records[2].remainder), std::abs(s.records[0].remainder));
  EXPECT_LT(std::abs(s.records[3].remainder), std::abs(s.records[1].remainder));
}

TEST(Sweep, CsvAndSvg) {
  const SweepResult& s = disk_sweep();
  std::ostringstream csv, svg;
  write_sweep_csv(csv, s.records);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "beta,j,E_j,shifted,muD_j,remainder,upper_bound,converged");
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 7);
    ++rows;
  }
  EXPECT_EQ(rows, 4);
  write_sweep_svg(svg, s.records, 1, 1.0);
  EXPECT_NE(svg.str().find("<svg"), std::string::npos);
  EXPECT_NE(svg.str().find("<polyline"), std::string::npos);
  EXPECT_NE(svg.str().find("data-beta=\"20\""), std::string::npos);
}

TEST(Sweep, RejectsUnsortedBetas) {
  SweepOptions opt;
  opt.betas = {8, 4};
  EXPECT_THROW(sweep(flat_disk(1.0), opt), Error);
}
