#pragma once

// Dirichlet eigenvalues of -Laplace-Beltrami + W on a parametrized surface,
// with piecewise-quadratic isoparametric elements in the parameter plane.

#include "deltasurf/eigensolvers.hpp"
#include "deltasurf/mesh.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace deltasurf {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Galerkin matrices on the free (non-Dirichlet) degrees of freedom, plus the
/// unconstrained versions for diagnostics. Vertex dofs come first, in mesh
/// vertex order, followed by one dof per edge.
struct StiffnessSystem {
  SparseMatrix stiffness;  // laplace + potential
  SparseMatrix mass;
  SparseMatrix laplace;
  SparseMatrix potential;
  SparseMatrix full_laplace, full_mass, full_potential;
  std::vector<int> constrained_dofs;
  std::vector<int> free_dofs;
  int dof_count = 0;
  int vertex_count = 0;
  double min_potential = 0.0;  // includes the shift
  double potential_shift = 0.0;
  double mesh_h = 0.0;
};

struct SpectralResult {
  std::vector<double> eigenvalues;
  /// Coefficient vectors over all dofs (zero on constrained ones).
  std::vector<VectorXd> eigenvectors;
  std::vector<double> residuals;
  /// Size of the cluster each eigenvalue belongs to.
  std::vector<int> multiplicities;
  double mesh_h = 0.0;
  /// Refinement ladder behind an extrapolated result (coarse to fine).
  std::vector<double> ladder_h;
  std::vector<std::vector<double>> ladder_values;
  std::vector<double> observed_orders;
  bool extrapolated = false;
};

namespace detail {

struct P2Basis {
  std::array<double, 6> value;
  std::array<Vec2, 6> grad;  // with respect to the reference (s, t)
};

inline P2Basis p2_basis(const Vec2& st) {
  const double l0 = 1.0 - st.x() - st.y(), l1 = st.x(), l2 = st.y();
  const Vec2 d0(-1.0, -1.0), d1(1.0, 0.0), d2(0.0, 1.0);
  P2Basis b;
  b.value = {l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0};
  b.grad = {(4 * l0 - 1) * d0,         (4 * l1 - 1) * d1,         (4 * l2 - 1) * d2,
            4.0 * (l1 * d0 + l0 * d1), 4.0 * (l2 * d1 + l1 * d2), 4.0 * (l0 * d2 + l2 * d0)};
  return b;
}

struct P2Layout {
  int vertex_count = 0;
  int dof_count = 0;
  std::vector<std::array<int, 6>> dofs;
  std::vector<std::array<Vec2, 6>> nodes;  // parameter-space element nodes
  std::vector<bool> constrained;
};

inline P2Layout p2_layout(const SurfaceMesh& mesh) {
  P2Layout out;
  out.vertex_count = static_cast<int>(mesh.vertices.size());
  std::map<std::pair<int, int>, int> edge_index, edge_count;
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) {
      const int a = t.v[e], b = t.v[(e + 1) % 3];
      ++edge_count[{std::min(a, b), std::max(a, b)}];
    }
  int next = out.vertex_count;
  for (const auto& [edge, count] : edge_count) edge_index[edge] = next++;
  out.dof_count = next;
  out.constrained.assign(out.dof_count, false);
  if (!mesh.surface.closed) {
    for (int v : mesh.boundary_vertices) out.constrained[v] = true;
    for (const auto& [edge, count] : edge_count)
      if (count == 1) out.constrained[edge_index[edge]] = true;
  }
  for (const auto& t : mesh.triangles) {
    const SurfacePatch& patch = mesh.patch_of(t);
    std::array<int, 6> d{};
    std::array<Vec2, 6> y{};
    for (int k = 0; k < 3; ++k) {
      d[k] = t.v[k];
      y[k] = t.param[k];
    }
    for (int e = 0; e < 3; ++e) {
      const int a = t.v[e], b = t.v[(e + 1) % 3];
      const std::pair<int, int> key{std::min(a, b), std::max(a, b)};
      d[3 + e] = edge_index[key];
      Vec2 mid = 0.5 * (t.param[e] + t.param[(e + 1) % 3]);
      if (edge_count[key] == 1 && domain_has_curved_boundary(patch.domain)) mid = snap_to_boundary(patch.domain, mid);
      y[3 + e] = mid;
    }
    out.dofs.push_back(d);
    out.nodes.push_back(y);
  }
  return out;
}

struct ElementMatrices {
  Eigen::Matrix<double, 6, 6> laplace, mass, potential;
  double min_potential = 0.0;
};

inline ElementMatrices p2_element(const SurfacePatch& patch, const std::array<Vec2, 6>& nodes, const TriangleRule& rule,
                                  double shift) {
  ElementMatrices m;
  m.laplace.setZero();
  m.mass.setZero();
  m.potential.setZero();
  m.min_potential = std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < rule.size(); ++q) {
    const P2Basis b = p2_basis(rule.points[q]);
    Vec2 y = Vec2::Zero();
    Mat2 jac = Mat2::Zero();  // columns d y / d s, d y / d t
    for (int k = 0; k < 6; ++k) {
      y += b.value[k] * nodes[k];
      jac += nodes[k] * b.grad[k].transpose();
    }
    const double det = jac.determinant();
    if (!(det > 0.0)) throw Error(ErrorKind::MeshQuality, "inverted isoparametric element");
    const GeometryJet j = jet_from_chart(patch.chart->eval(y), patch.orientation);
    const double w = rule.weights[q] * 0.5 * det * j.area_density;  // reference area 1/2
    const double pot = curvature_potential(j) + shift;
    m.min_potential = std::min(m.min_potential, pot);
    const Mat2 jinv_t = jac.inverse().transpose();
    std::array<Vec2, 6> gy;
    for (int k = 0; k < 6; ++k) gy[k] = jinv_t * b.grad[k];
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c) {
        m.laplace(r, c) += w * gy[r].dot(j.inverse_metric * gy[c]);
        const double uv = w * b.value[r] * b.value[c];
        m.mass(r, c) += uv;
        m.potential(r, c) += pot * uv;
      }
  }
  return m;
}

}  // namespace detail

/// Assemble the form <grad u, g^-1 grad v> + <(W + shift) u, v> and the L2
/// mass over P2 elements; boundary dofs of open surfaces are eliminated.
inline StiffnessSystem assemble(const SurfaceMesh& mesh, double potential_shift = 0.0) {
  require(!mesh.triangles.empty(), ErrorKind::MeshQuality, "empty mesh");
  const detail::P2Layout layout = detail::p2_layout(mesh);
  const TriangleRule rule = triangle_degree4();
  const int nt = static_cast<int>(mesh.triangles.size());
  std::vector<detail::ElementMatrices> elements(nt);
#pragma omp parallel for schedule(static)
  for (int t = 0; t < nt; ++t)
    elements[t] = detail::p2_element(mesh.patch_of(mesh.triangles[t]), layout.nodes[t], rule, potential_shift);

  StiffnessSystem sys;
  sys.dof_count = layout.dof_count;
  sys.vertex_count = layout.vertex_count;
  sys.potential_shift = potential_shift;
  sys.mesh_h = mesh.target_h;
  std::vector<int> free_index(layout.dof_count, -1);
  for (int d = 0; d < layout.dof_count; ++d) {
    if (layout.constrained[d]) {
      sys.constrained_dofs.push_back(d);
    } else {
      free_index[d] = static_cast<int>(sys.free_dofs.size());
      sys.free_dofs.push_back(d);
    }
  }
  require(!sys.free_dofs.empty(), ErrorKind::MeshQuality, "no free degrees of freedom");

  using Triplet = Eigen::Triplet<double>;
  std::vector<Triplet> fl, fm, fp, rl, rm, rp;
  sys.min_potential = std::numeric_limits<double>::infinity();
  for (int t = 0; t < nt; ++t) {  // fixed order: deterministic summation
    const auto& e = elements[t];
    sys.min_potential = std::min(sys.min_potential, e.min_potential);
    const auto& d = layout.dofs[t];
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c) {
        fl.emplace_back(d[r], d[c], e.laplace(r, c));
        fm.emplace_back(d[r], d[c], e.mass(r, c));
        fp.emplace_back(d[r], d[c], e.potential(r, c));
        const int fr = free_index[d[r]], fc = free_index[d[c]];
        if (fr < 0 || fc < 0) continue;
        rl.emplace_back(fr, fc, e.laplace(r, c));
        rm.emplace_back(fr, fc, e.mass(r, c));
        rp.emplace_back(fr, fc, e.potential(r, c));
      }
  }
  const int n = layout.dof_count, nf = static_cast<int>(sys.free_dofs.size());
  auto build = [](int size, const std::vector<Triplet>& trips) {
    SparseMatrix m(size, size);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
  };
  sys.full_laplace = build(n, fl);
  sys.full_mass = build(n, fm);
  sys.full_potential = build(n, fp);
  sys.laplace = build(nf, rl);
  sys.mass = build(nf, rm);
  sys.potential = build(nf, rp);
  sys.stiffness = sys.laplace + sys.potential;

  Eigen::SimplicialLLT<SparseMatrix> mass_check(sys.mass);
  if (mass_check.info() != Eigen::Success) throw Error(ErrorKind::MeshQuality, "singular mass matrix");
  return sys;
}

namespace detail {

inline std::vector<int> cluster_sizes(const std::vector<double>& values, double rel_gap = 1e-6) {
  std::vector<int> out(values.size(), 1);
  std::size_t start = 0;
  for (std::size_t i = 1; i <= values.size(); ++i) {
    const bool split = i == values.size() ||
                       std::abs(values[i] - values[i - 1]) >= rel_gap * std::max(std::abs(values[i]), 1e-300);
    if (split) {
      for (std::size_t k = start; k < i; ++k) out[k] = static_cast<int>(i - start);
      start = i;
    }
  }
  return out;
}

}  // namespace detail

/// Lowest `count` eigenpairs of (stiffness, mass), by shift-invert around
/// min W - 1 (below the whole spectrum).
inline SpectralResult solve_modes(const StiffnessSystem& sys, int count, double tolerance = 1e-10) {
  const Index n = sys.stiffness.rows();
  require(count >= 1 && count <= n, ErrorKind::InvalidArgument, "mode count must be in [1, free dofs]");
  const double sigma = sys.min_potential - 1.0;
  EigenPairs pairs;
  if (n <= 300) {
    pairs = dense_generalized_largest(-MatrixXd(sys.stiffness), MatrixXd(sys.mass), count);
    pairs.values = -pairs.values;
  } else {
    const SparseMatrix shifted = sys.stiffness - sigma * sys.mass;
    Eigen::SimplicialLDLT<SparseMatrix> factor(shifted);
    require(factor.info() == Eigen::Success, ErrorKind::MeshQuality, "shifted stiffness factorization failed");
    LanczosOptions opt;
    opt.block_size = std::clamp(count, 3, 6);
    opt.tolerance = tolerance;
    auto op = [&](const MatrixXd& x) -> MatrixXd { return factor.solve(MatrixXd(sys.mass * x)); };
    auto bmul = [&](const MatrixXd& x) -> MatrixXd { return sys.mass * x; };
    try {
      pairs = block_lanczos_largest(n, op, bmul, count, opt);
    } catch (const IterationLimitError& e) {
      EigenPairs partial = e.partial();
      for (Index j = 0; j < partial.values.size(); ++j) partial.values[j] = sigma + 1.0 / partial.values[j];
      throw IterationLimitError(e.what(), std::move(partial));
    }
    for (Index j = 0; j < pairs.values.size(); ++j) pairs.values[j] = sigma + 1.0 / pairs.values[j];
  }

  SpectralResult out;
  out.mesh_h = sys.mesh_h;
  std::vector<Index> order(count);
  for (int j = 0; j < count; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return pairs.values[a] < pairs.values[b]; });
  for (Index j : order) {
    const VectorXd v = pairs.vectors.col(j);
    const double lambda = pairs.values[j];
    out.eigenvalues.push_back(lambda);
    out.residuals.push_back((sys.stiffness * v - lambda * (sys.mass * v)).norm() / v.norm());
    VectorXd full = VectorXd::Zero(sys.dof_count);
    for (Index i = 0; i < n; ++i) full[sys.free_dofs[i]] = v[i];
    out.eigenvectors.push_back(std::move(full));
  }
  out.multiplicities = detail::cluster_sizes(out.eigenvalues);
  return out;
}

struct FemOptions {
  /// Finest mesh spacing of the ladder.
  double target_h = 0.05;
  int levels = 3;
  double potential_shift = 0.0;
  double boundary_h = 0.0;
  double tolerance = 1e-10;
};

/// Richardson extrapolation of a sequence computed at h, h/2, h/4, ... (coarse
/// to fine). The order is estimated from the last three values when they show
/// a clean asymptotic ratio, otherwise `nominal_order` is assumed.
inline double richardson(const std::vector<double>& values, double nominal_order, double* observed_order = nullptr) {
  require(!values.empty(), ErrorKind::InsufficientData, "nothing to extrapolate");
  const std::size_t n = values.size();
  if (observed_order) *observed_order = std::numeric_limits<double>::quiet_NaN();
  if (n == 1) return values.back();
  const double fine = values[n - 1], mid = values[n - 2];
  const double d2 = mid - fine;
  if (std::abs(d2) <= 1e-12 * std::max(1.0, std::abs(fine))) return fine;
  double p = nominal_order;
  if (n >= 3) {
    const double ratio = (values[n - 3] - mid) / d2;
    if (std::isfinite(ratio) && ratio > 1.5) {
      p = std::clamp(std::log2(ratio), 1.0, 2.0 * nominal_order);
      if (observed_order) *observed_order = std::log2(ratio);
    }
  }
  return fine - d2 / (std::pow(2.0, p) - 1.0);
}

/// Dirichlet modes on a ladder of meshes (spacing halved per level), with
/// Richardson-extrapolated eigenvalues. Eigenvectors and residuals are those
/// of the finest level.
inline SpectralResult dirichlet_modes(const Surface& surface, int count, const FemOptions& opt = {}) {
  require(opt.levels >= 1, ErrorKind::InvalidArgument, "need at least one mesh level");
  SpectralResult finest;
  std::vector<std::vector<double>> per_level;
  std::vector<double> hs;
  for (int level = 0; level < opt.levels; ++level) {
    MeshOptions mo;
    mo.target_h = opt.target_h * std::pow(2.0, opt.levels - 1 - level);
    mo.boundary_h = opt.boundary_h > 0.0 ? opt.boundary_h * std::pow(2.0, opt.levels - 1 - level) : 0.0;
    const SurfaceMesh mesh = build_mesh(surface, mo);
    finest = solve_modes(assemble(mesh, opt.potential_shift), count, opt.tolerance);
    per_level.push_back(finest.eigenvalues);
    hs.push_back(mo.target_h);
  }
  SpectralResult out = finest;
  out.ladder_h = hs;
  out.ladder_values = per_level;
  if (opt.levels >= 2) {
    out.extrapolated = true;
    for (int j = 0; j < count; ++j) {
      std::vector<double> seq;
      for (const auto& lv : per_level) seq.push_back(lv[j]);
      double order = 0.0;
      out.eigenvalues[j] = richardson(seq, 4.0, &order);
      out.observed_orders.push_back(order);
    }
    out.multiplicities = detail::cluster_sizes(out.eigenvalues);
  }
  return out;
}

/// The patch with its parameter domain pushed outwards so that the new
/// boundary lies at surface distance `margin` from the old one. Exact for
/// disks in geodesic polar or flat charts; first order in `margin` otherwise,
/// using the metric normal to each side.
inline SurfacePatch offset_patch(const SurfacePatch& patch, double margin) {
  require(margin >= 0.0, ErrorKind::InvalidArgument, "offset margin must be nonnegative");
  if (margin == 0.0) return patch;
  auto normal_scale = [&](const Vec2& y, const Vec2& n) {
    require(patch.chart->admissible(y), ErrorKind::ChartDomain, "offset boundary leaves the chart");
    const ChartFirst f = patch.chart->first(y);
    Mat2 g;
    g << f.tangents[0].dot(f.tangents[0]), f.tangents[0].dot(f.tangents[1]), f.tangents[0].dot(f.tangents[1]),
        f.tangents[1].dot(f.tangents[1]);
    return std::sqrt(n.dot(g.inverse() * n));
  };
  auto mean_scale = [&](const Vec2& a, const Vec2& b, const Vec2& n) {
    double s = 0.0;
    const int samples = 16;
    for (int k = 0; k < samples; ++k) s += normal_scale(a + (b - a) * ((k + 0.5) / samples), n);
    return s / samples;
  };
  SurfacePatch out = patch;
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, DiskDomain>) {
          double s = 0.0;
          const int samples = 64;
          for (int k = 0; k < samples; ++k) {
            const Vec2 n(std::cos(2 * kPi * k / samples), std::sin(2 * kPi * k / samples));
            s += normal_scale(d.center + d.radius * n, n);
          }
          out.domain = DiskDomain{d.center, d.radius + margin * s / samples};
        } else if constexpr (std::is_same_v<T, RectDomain>) {
          const Vec2 c00 = d.lo, c10(d.hi.x(), d.lo.y()), c11 = d.hi, c01(d.lo.x(), d.hi.y());
          const double left = margin * mean_scale(c00, c01, {-1, 0}), right = margin * mean_scale(c10, c11, {1, 0});
          const double bottom = margin * mean_scale(c00, c10, {0, -1}), top = margin * mean_scale(c01, c11, {0, 1});
          out.domain = RectDomain{{d.lo.x() - left, d.lo.y() - bottom}, {d.hi.x() + right, d.hi.y() + top}};
        } else {
          const auto& v = d.vertices;
          const std::size_t m = v.size();
          std::vector<Vec2> normals(m), points(m);
          for (std::size_t i = 0; i < m; ++i) {
            const Vec2 e = v[(i + 1) % m] - v[i];
            normals[i] = Vec2(e.y(), -e.x()).normalized();  // outward for ccw
            points[i] = v[i] + normals[i] * (margin * mean_scale(v[i], v[(i + 1) % m], normals[i]));
          }
          std::vector<Vec2> moved(m);
          for (std::size_t i = 0; i < m; ++i) {
            const std::size_t p = (i + m - 1) % m;
            // intersect the offset lines of edges p and i
            const Vec2 dp = v[i] - v[p], di = v[(i + 1) % m] - v[i];
            Mat2 a;
            a << dp.x(), -di.x(), dp.y(), -di.y();
            const Vec2 rhs = points[i] - points[p];
            require(std::abs(a.determinant()) > 1e-14, ErrorKind::MeshGeneration, "degenerate polygon corner");
            moved[i] = points[p] + dp * a.inverse().row(0).dot(rhs);
          }
          out.domain = PolygonDomain{moved};
        }
      },
      patch.domain);
  for (const Vec2& y : domain_boundary_samples(out.domain))
    require(patch.chart->admissible(y), ErrorKind::ChartDomain, "offset boundary leaves the chart");
  out.name = patch.name + "_offset";
  return out;
}

/// Dirichlet modes of the surface enlarged by a margin along its boundary.
inline SpectralResult offset_modes(const SurfacePatch& patch, double margin, int count, const FemOptions& opt = {}) {
  return dirichlet_modes(Surface(offset_patch(patch, margin)), count, opt);
}

/// CSV columns: j, eigenvalue, residual, mesh_h.
inline void write_spectral_csv(std::ostream& os, const SpectralResult& r) {
  os << "j,eigenvalue,residual,mesh_h\n";
  os.precision(12);
  for (std::size_t j = 0; j < r.eigenvalues.size(); ++j)
    os << j + 1 << ',' << r.eigenvalues[j] << ',' << r.residuals[j] << ',' << r.mesh_h << '\n';
}

/// Eigenvector values at the mesh vertices, one row per vertex.
inline void write_eigenvectors_csv(std::ostream& os, const SpectralResult& r, int vertex_count) {
  os << "vertex";
  for (std::size_t j = 0; j < r.eigenvectors.size(); ++j) os << ",v" << j + 1;
  os << '\n';
  os.precision(12);
  for (int v = 0; v < vertex_count; ++v) {
    os << v;
    for (const auto& vec : r.eigenvectors) os << ',' << vec[v];
    os << '\n';
  }
}

}  // namespace deltasurf
