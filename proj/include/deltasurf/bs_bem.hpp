#pragma once

// Birman-Schwinger layer operators: Galerkin discretization of the Yukawa
// single layer e^{-kappa r} / (4 pi r) with continuous piecewise-linear
// densities on a curved surface mesh, the search for bound states
// beta * mu_j(kappa) = 1, and evaluation of the layer potential in R^3.

#include "deltasurf/eigensolvers.hpp"
#include "deltasurf/mesh.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <vector>

namespace deltasurf {

using Mat3 = Eigen::Matrix3d;

// ---------------------------------------------------------------------------
// Kernels of r = |x - y|

struct YukawaKernel {
  double kappa = 0.0;
  static constexpr bool singular = true;
  double operator()(double r) const { return std::exp(-kappa * r) / (4.0 * kPi * r); }
};

/// d/dkappa of the Yukawa kernel; bounded.
struct YukawaKappaDerivative {
  double kappa = 0.0;
  static constexpr bool singular = false;
  double operator()(double r) const { return -std::exp(-kappa * r) / (4.0 * kPi); }
};

/// int_{R^3} G(x - s) G(x - t) dx = e^{-kappa |s - t|} / (8 pi kappa): the
/// Gram kernel of single-layer potentials in L2(R^3).
struct YukawaEnergyKernel {
  double kappa = 1.0;
  static constexpr bool singular = false;
  double operator()(double r) const { return std::exp(-kappa * r) / (8.0 * kPi * kappa); }
};

// ---------------------------------------------------------------------------
// Panel hierarchy with cached quadrature nodes

struct LayerNode {
  Vec3 point;
  double weight;  // includes the surface measure
  Vec3 bary;      // barycentric coordinates in the parent panel
};

struct SubPanelBox {
  Vec3 centre;
  double radius;
};

/// Curved panels of a mesh with quadrature nodes on uniformly subdivided
/// sub-triangles (4^level per panel, degree-4 rule on each).
class LayerGeometry {
 public:
  static constexpr int kCachedLevels = 4;
  static constexpr int kNodesPerSub = 6;

  explicit LayerGeometry(std::shared_ptr<const SurfaceMesh> mesh) : mesh_(std::move(mesh)) {
    require(mesh_ && !mesh_->triangles.empty(), ErrorKind::MeshQuality, "layer geometry needs a nonempty mesh");
    const int np = panel_count();
    nodes_.resize(kCachedLevels);
    boxes_.resize(kCachedLevels);
    rule_ = triangle_degree4();
    for (int l = 0; l < kCachedLevels; ++l) {
      nodes_[l].resize(static_cast<std::size_t>(np) * (1u << (2 * l)) * kNodesPerSub);
      boxes_[l].resize(static_cast<std::size_t>(np) * (1u << (2 * l)));
    }
    coarse_.resize(static_cast<std::size_t>(np) * 3);
    vertex_panels_.resize(mesh_->vertices.size());
#pragma omp parallel for schedule(static)
    for (int p = 0; p < np; ++p) {
      std::vector<Corners> level{Corners{Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}};
      for (int l = 0; l < kCachedLevels; ++l) {
        for (std::size_t k = 0; k < level.size(); ++k) {
          const std::size_t sub = static_cast<std::size_t>(p) * level.size() + k;
          fill_nodes(p, level[k], l, &nodes_[l][sub * kNodesPerSub]);
          boxes_[l][sub] = box(p, level[k], &nodes_[l][sub * kNodesPerSub]);
        }
        std::vector<Corners> next;
        next.reserve(level.size() * 4);
        for (const Corners& c : level)
          for (const Corners& child : children(c)) next.push_back(child);
        level = std::move(next);
      }
      // three-point edge-midpoint rule (degree 2) for well-separated pairs
      for (int q = 0; q < 3; ++q) {
        Vec3 b = Vec3::Constant(0.5);
        b[q] = 0.0;
        const auto s = sample(p, b);
        coarse_[p * 3 + q] = {s.first, s.second / 3.0 * panel_param_area(p), b};
      }
    }
    for (int p = 0; p < np; ++p)
      for (int v : mesh_->triangles[p].v) vertex_panels_[v].push_back(p);
    for (int p = 0; p < np; ++p) max_panel_radius_ = std::max(max_panel_radius_, boxes_[0][p].radius);
  }

  const SurfaceMesh& mesh() const { return *mesh_; }
  std::shared_ptr<const SurfaceMesh> mesh_ptr() const { return mesh_; }
  int panel_count() const { return static_cast<int>(mesh_->triangles.size()); }
  int vertex_count() const { return static_cast<int>(mesh_->vertices.size()); }
  const std::array<int, 3>& panel_vertices(int p) const { return mesh_->triangles[p].v; }
  const std::vector<int>& panels_at_vertex(int v) const { return vertex_panels_[v]; }
  double max_panel_radius() const { return max_panel_radius_; }

  const SubPanelBox& box(int p, int level, std::size_t k) const {
    return boxes_[level][(static_cast<std::size_t>(p) << (2 * level)) + k];
  }
  const LayerNode* nodes(int p, int level, std::size_t k) const {
    return &nodes_[level][((static_cast<std::size_t>(p) << (2 * level)) + k) * kNodesPerSub];
  }
  const LayerNode* coarse_nodes(int p) const { return &coarse_[static_cast<std::size_t>(p) * 3]; }

  double panel_param_area(int p) const { return mesh_->triangles[p].param_area(); }

  /// Surface point and area density sqrt(g) at barycentric coordinates.
  std::pair<Vec3, double> sample(int p, const Vec3& bary) const {
    const MeshTriangle& t = mesh_->triangles[p];
    const Vec2 y = bary[0] * t.param[0] + bary[1] * t.param[1] + bary[2] * t.param[2];
    const ChartFirst f = mesh_->patch_of(t).chart->first(y);
    return {f.point, f.tangents[0].cross(f.tangents[1]).norm()};
  }

  /// Parameter-plane Jacobian of a panel: chart tangents for first-order moves.
  ChartFirst chart_first(int p, const Vec3& bary) const {
    const MeshTriangle& t = mesh_->triangles[p];
    const Vec2 y = bary[0] * t.param[0] + bary[1] * t.param[1] + bary[2] * t.param[2];
    return mesh_->patch_of(t).chart->first(y);
  }

  struct Corners {
    Vec3 a, b, c;
  };

  static std::array<Corners, 4> children(const Corners& c) {
    const Vec3 ab = 0.5 * (c.a + c.b), bc = 0.5 * (c.b + c.c), ca = 0.5 * (c.c + c.a);
    return {Corners{c.a, ab, ca}, Corners{ab, c.b, bc}, Corners{ca, bc, c.c}, Corners{bc, ca, ab}};
  }

  /// Degree-4 nodes on a sub-triangle at subdivision depth `level`.
  void fill_nodes(int p, const Corners& c, int level, LayerNode* out) const {
    const double area = panel_param_area(p) / double(1u << (2 * level));
    for (std::size_t q = 0; q < rule_.size(); ++q) {
      const Vec2 st = rule_.points[q];
      const Vec3 b = c.a * (1.0 - st.x() - st.y()) + c.b * st.x() + c.c * st.y();
      const auto s = sample(p, b);
      out[q] = {s.first, rule_.weights[q] * area * s.second, b};
    }
  }

  SubPanelBox box(int p, const Corners& c, const LayerNode* nodes) const {
    std::array<Vec3, 6> pts = {sample(p, c.a).first, sample(p, c.b).first, sample(p, c.c).first,
                               sample(p, 0.5 * (c.a + c.b)).first, sample(p, 0.5 * (c.b + c.c)).first,
                               sample(p, 0.5 * (c.c + c.a)).first};
    Vec3 centre = (pts[0] + pts[1] + pts[2]) / 3.0;
    double r = 0.0;
    for (const Vec3& q : pts) r = std::max(r, (q - centre).norm());
    for (int k = 0; k < kNodesPerSub; ++k) r = std::max(r, (nodes[k].point - centre).norm());
    return {centre, 1.05 * r};
  }

 private:
  std::shared_ptr<const SurfaceMesh> mesh_;
  TriangleRule rule_;
  std::vector<std::vector<LayerNode>> nodes_;
  std::vector<std::vector<SubPanelBox>> boxes_;
  std::vector<LayerNode> coarse_;
  std::vector<std::vector<int>> vertex_panels_;
  double max_panel_radius_ = 0.0;
};

// ---------------------------------------------------------------------------
// Singular quadrature for panels sharing a vertex, an edge, or identical.
// Reference triangle {0 <= x2 <= x1 <= 1} with corners (0,0), (1,0), (1,1);
// barycentrics (1 - x1, x1 - x2, x2). The shared vertex sits at (0,0) and the
// shared edge runs (0,0)-(1,0) in both panels.

struct SingularRule {
  std::vector<Vec3> bx, by;  // reference barycentrics in each panel
  std::vector<double> w;
};

namespace detail {

inline Vec3 ref_bary(double x1, double x2) { return {1.0 - x1, x1 - x2, x2}; }

inline SingularRule make_singular_rule(int shared, int n) {
  const GaussRule& g = gauss_legendre(n);
  SingularRule rule;
  auto add = [&](double x1, double x2, double y1, double y2, double w) {
    rule.bx.push_back(ref_bary(x1, x2));
    rule.by.push_back(ref_bary(y1, y2));
    rule.w.push_back(w);
  };
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          const double xi = g.nodes[a], e1 = g.nodes[b], e2 = g.nodes[c], e3 = g.nodes[d];
          const double w = g.weights[a] * g.weights[b] * g.weights[c] * g.weights[d];
          if (shared == 3) {
            const double j = w * xi * xi * xi * e1 * e1 * e2;
            const double m[6][4] = {
                {xi, xi * (1 - e1 + e1 * e2), xi * (1 - e1 * e2 * e3), xi * (1 - e1)},
                {xi * (1 - e1 * e2 * e3), xi * (1 - e1), xi, xi * (1 - e1 + e1 * e2)},
                {xi, xi * e1 * (1 - e2 + e2 * e3), xi * (1 - e1 * e2), xi * e1 * (1 - e2)},
                {xi * (1 - e1 * e2), xi * e1 * (1 - e2), xi, xi * e1 * (1 - e2 + e2 * e3)},
                {xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3), xi, xi * e1 * (1 - e2)},
                {xi, xi * e1 * (1 - e2), xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)}};
            for (const auto& r : m) add(r[0], r[1], r[2], r[3], j);
          } else if (shared == 2) {
            const double j1 = w * xi * xi * xi * e1 * e1, j2 = j1 * e2;
            add(xi, xi * e1 * e3, xi * (1 - e1 * e2), xi * e1 * (1 - e2), j1);
            add(xi, xi * e1, xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3), j2);
            add(xi * (1 - e1 * e2), xi * e1 * (1 - e2), xi, xi * e1 * e2 * e3, j2);
            add(xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3), xi, xi * e1, j2);
            add(xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3), xi, xi * e1 * e2, j2);
          } else {
            const double j = w * xi * xi * xi * e2;
            add(xi, xi * e1, xi * e2, xi * e2 * e3, j);
            add(xi * e2, xi * e2 * e3, xi, xi * e1, j);
          }
        }
  return rule;
}

inline const SingularRule& singular_rule(int shared, int n) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, SingularRule> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find({shared, n});
  if (it == cache.end()) it = cache.emplace(std::make_pair(shared, n), make_singular_rule(shared, n)).first;
  return it->second;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Assembly

struct LayerOptions {
  /// Sauter-Schwab order; 0 picks 4 + ceil(kappa * diameter), clamped to [5, 8].
  int singular_order = 0;
  /// Separated sub-panels are integrated directly once diameter <= ratio * gap.
  double near_ratio = 0.5;
  /// Below this ratio the three-point rule is used.
  double far_ratio = 0.1;
  /// Sub-panels are refined until kappa * diameter stays below this, unless
  /// the pair is already damped by e^{-kappa gap} beyond `damped_gap`.
  double kappa_resolution = 3.0;
  double damped_gap = 15.0;
  /// Pairs with kappa * gap beyond this are dropped.
  double cutoff = 40.0;
  int max_depth = 8;
  bool lumped_mass = false;
  /// Diagnostic: integrate every ordered pair separately and record the
  /// asymmetry of the raw matrix before symmetrizing.
  bool ordered_pairs = false;
};

struct LayerOperator {
  double kappa = 0.0;
  MatrixXd matrix;
  Eigen::SparseMatrix<double> mass;
  /// ||A - A^T||_F / ||A||_F of the raw matrix (ordered-pair mode only).
  double asymmetry = std::numeric_limits<double>::quiet_NaN();
  std::shared_ptr<const LayerGeometry> geometry;
};

namespace detail {

template <class Kernel>
Mat3 node_block(const LayerNode* a, int na, const LayerNode* b, int nb, const Kernel& k) {
  Mat3 out = Mat3::Zero();
  for (int i = 0; i < na; ++i) {
    Vec3 acc = Vec3::Zero();
    for (int j = 0; j < nb; ++j) acc += (b[j].weight * k((a[i].point - b[j].point).norm())) * b[j].bary;
    out += (a[i].weight * a[i].bary) * acc.transpose();
  }
  return out;
}

struct SubRef {
  int panel;
  int level;
  std::size_t index;
  LayerGeometry::Corners corners;
  SubPanelBox box;
};

struct PairIntegrator {
  const LayerGeometry& geo;
  LayerOptions opt;
  double kappa;

  SubRef root(int p) const {
    return {p, 0, 0, {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}, geo.box(p, 0, 0)};
  }

  std::array<SubRef, 4> split(const SubRef& s) const {
    std::array<SubRef, 4> out;
    const auto kids = LayerGeometry::children(s.corners);
    for (int c = 0; c < 4; ++c) {
      out[c].panel = s.panel;
      out[c].level = s.level + 1;
      out[c].index = s.index * 4 + c;
      out[c].corners = kids[c];
      if (out[c].level < LayerGeometry::kCachedLevels) {
        out[c].box = geo.box(s.panel, out[c].level, out[c].index);
      } else {
        LayerNode tmp[LayerGeometry::kNodesPerSub];
        geo.fill_nodes(s.panel, kids[c], out[c].level, tmp);
        out[c].box = geo.box(s.panel, kids[c], tmp);
      }
    }
    return out;
  }

  const LayerNode* nodes(const SubRef& s, LayerNode* scratch) const {
    if (s.level < LayerGeometry::kCachedLevels) return geo.nodes(s.panel, s.level, s.index);
    geo.fill_nodes(s.panel, s.corners, s.level, scratch);
    return scratch;
  }

  bool resolved(double diameter, double gap) const {
    if (!(diameter <= opt.near_ratio * gap)) return false;
    return kappa * diameter <= opt.kappa_resolution || kappa * gap >= opt.damped_gap;
  }

  template <class Kernel>
  void separated(const SubRef& a, const SubRef& b, const Kernel& k, Mat3& out) const {
    const double gap = (a.box.centre - b.box.centre).norm() - a.box.radius - b.box.radius;
    const double da = 2.0 * a.box.radius, db = 2.0 * b.box.radius;
    const double diameter = std::max(da, db);
    if (a.level == 0 && b.level == 0 && diameter <= opt.far_ratio * gap &&
        (kappa * diameter <= opt.kappa_resolution || kappa * gap >= opt.damped_gap)) {
      out += node_block(geo.coarse_nodes(a.panel), 3, geo.coarse_nodes(b.panel), 3, k);
      return;
    }
    const bool deep = a.level >= opt.max_depth && b.level >= opt.max_depth;
    if (resolved(diameter, gap) || deep) {
      LayerNode sa[LayerGeometry::kNodesPerSub], sb[LayerGeometry::kNodesPerSub];
      out += node_block(nodes(a, sa), LayerGeometry::kNodesPerSub, nodes(b, sb), LayerGeometry::kNodesPerSub, k);
      return;
    }
    // split the larger side; ties go by panel so that (p, q) and (q, p) agree
    const bool larger = da > db || (da == db && a.panel <= b.panel);
    if ((larger && a.level < opt.max_depth) || b.level >= opt.max_depth) {
      for (const SubRef& c : split(a)) separated(c, b, k, out);
    } else {
      for (const SubRef& c : split(b)) separated(a, c, k, out);
    }
  }

  // Gauss order per direction for a touching pair; vertex-only contact needs
  // one order less, edge pairs one more (they set the symmetry error).
  int singular_order(int p, int q, int shared) const {
    if (opt.singular_order > 0) return opt.singular_order;
    const double kh = kappa * 2.0 * std::max(geo.box(p, 0, 0).radius, geo.box(q, 0, 0).radius);
    const int order = std::clamp(4 + static_cast<int>(std::ceil(kh)), 5, 8);
    return shared == 1 ? order - 1 : shared == 2 ? order + 1 : order;
  }

  // Panels p and q share `shared` vertices; pa and pb list the local vertex
  // indices arranged so that shared ones come first in the same order.
  template <class Kernel>
  Mat3 touching(int p, const std::array<int, 3>& pa, int q, const std::array<int, 3>& pb, int shared,
                const Kernel& k) const {
    const SingularRule& rule = detail::singular_rule(shared, singular_order(p, q, shared));
    const double area_p = geo.panel_param_area(p) * 2.0, area_q = geo.panel_param_area(q) * 2.0;
    Mat3 out = Mat3::Zero();
    for (std::size_t i = 0; i < rule.w.size(); ++i) {
      Vec3 bx, by;
      for (int c = 0; c < 3; ++c) {
        bx[pa[c]] = rule.bx[i][c];
        by[pb[c]] = rule.by[i][c];
      }
      const auto sx = geo.sample(p, bx);
      const auto sy = geo.sample(q, by);
      const double w = rule.w[i] * area_p * sx.second * area_q * sy.second * k((sx.first - sy.first).norm());
      out += (w * bx) * by.transpose();
    }
    return out;
  }

  template <class Kernel>
  Mat3 pair(int p, int q, const Kernel& k) const {
    const auto& vp = geo.panel_vertices(p);
    const auto& vq = geo.panel_vertices(q);
    std::array<int, 3> pa{}, pb{};
    int shared = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (vp[i] == vq[j]) {
          pa[shared] = i;
          pb[shared] = j;
          ++shared;
        }
    if (shared == 0 || !Kernel::singular) {
      if (shared > 0) {  // bounded kernel: plain rule on the four children
        const LayerNode* a = geo.nodes(p, 1, 0);
        const LayerNode* b = geo.nodes(q, 1, 0);
        return node_block(a, 4 * LayerGeometry::kNodesPerSub, b, 4 * LayerGeometry::kNodesPerSub, k);
      }
      Mat3 out = Mat3::Zero();
      separated(root(p), root(q), k, out);
      return out;
    }
    if (shared == 3) {
      pa = {0, 1, 2};
      pb = {0, 1, 2};
    } else {
      // complete the local orderings with the unshared vertices
      auto complete = [&](std::array<int, 3>& loc) {
        int n = shared;
        for (int i = 0; i < 3; ++i)
          if (std::find(loc.begin(), loc.begin() + shared, i) == loc.begin() + shared) loc[n++] = i;
      };
      complete(pa);
      complete(pb);
    }
    return touching(p, pa, q, pb, shared, k);
  }
};

}  // namespace detail

inline Eigen::SparseMatrix<double> layer_mass(const LayerGeometry& geo, bool lumped) {
  const int nv = geo.vertex_count();
  std::vector<Eigen::Triplet<double>> trips;
  for (int p = 0; p < geo.panel_count(); ++p) {
    const LayerNode* n = geo.nodes(p, 1, 0);
    Mat3 local = Mat3::Zero();
    // level-1 nodes (four children) integrate P1 x P1 on curved panels well
    for (int k = 0; k < LayerGeometry::kNodesPerSub * 4; ++k) local += (n[k].weight * n[k].bary) * n[k].bary.transpose();
    const auto& v = geo.panel_vertices(p);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        if (lumped)
          trips.emplace_back(v[a], v[a], local(a, b));
        else
          trips.emplace_back(v[a], v[b], local(a, b));
      }
  }
  Eigen::SparseMatrix<double> m(nv, nv);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

/// Galerkin matrix <phi_i, K phi_j> over all panel pairs for a kernel of the
/// distance. Panels touching each other use Sauter-Schwab rules, separated
/// panels adaptive subdivision; results are scattered in a fixed order.
template <class Kernel>
MatrixXd assemble_kernel(const LayerGeometry& geo, const Kernel& kernel, double kappa, const LayerOptions& opt,
                         double* asymmetry = nullptr) {
  const int np = geo.panel_count(), nv = geo.vertex_count();
  const detail::PairIntegrator integ{geo, opt, kappa};
  MatrixXd a = MatrixXd::Zero(nv, nv);
  struct Entry {
    int q;
    Mat3 block;
  };
  const int chunk = 32;
  std::vector<std::vector<Entry>> rows(chunk);
  for (int start = 0; start < np; start += chunk) {
    const int stop = std::min(np, start + chunk);
#pragma omp parallel for schedule(dynamic)
    for (int p = start; p < stop; ++p) {
      auto& row = rows[p - start];
      row.clear();
      const SubPanelBox& bp = geo.box(p, 0, 0);
      for (int q = opt.ordered_pairs ? 0 : p; q < np; ++q) {
        const SubPanelBox& bq = geo.box(q, 0, 0);
        const double gap = (bp.centre - bq.centre).norm() - bp.radius - bq.radius;
        if (kappa * gap > opt.cutoff) continue;
        row.push_back({q, integ.pair(p, q, kernel)});
      }
    }
    for (int p = start; p < stop; ++p) {
      const auto& vp = geo.panel_vertices(p);
      for (const Entry& e : rows[p - start]) {
        const auto& vq = geo.panel_vertices(e.q);
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) {
            a(vp[i], vq[j]) += e.block(i, j);
            if (!opt.ordered_pairs && e.q != p) a(vq[j], vp[i]) += e.block(i, j);
          }
      }
    }
  }
  if (opt.ordered_pairs) {
    const double norm = a.norm();
    if (asymmetry) *asymmetry = norm > 0.0 ? (a - a.transpose()).norm() / norm : 0.0;
    a = 0.5 * (a + a.transpose()).eval();
  }
  return a;
}

/// Yukawa single-layer Galerkin matrix and the P1 Gram matrix.
inline LayerOperator assemble_layer(std::shared_ptr<const LayerGeometry> geo, double kappa,
                                    const LayerOptions& opt = {}) {
  require(kappa >= 0.0, ErrorKind::InvalidArgument, "kappa must be nonnegative");
  LayerOperator op;
  op.kappa = kappa;
  op.geometry = geo;
  op.matrix = assemble_kernel(*geo, YukawaKernel{kappa}, kappa, opt, &op.asymmetry);
  op.mass = layer_mass(*geo, opt.lumped_mass);
  if (!op.matrix.allFinite()) throw Error(ErrorKind::Quadrature, "non-finite layer matrix entries");
  return op;
}

inline LayerOperator assemble_layer(const SurfaceMesh& mesh, double kappa, const LayerOptions& opt = {}) {
  return assemble_layer(std::make_shared<LayerGeometry>(std::make_shared<SurfaceMesh>(mesh)), kappa, opt);
}

/// Largest `count` eigenpairs of (matrix, mass), descending. `warm` may hold
/// eigenvectors of a nearby operator to start from.
inline EigenPairs bs_eigenpairs(const LayerOperator& op, int count, const MatrixXd* warm = nullptr) {
  const Index n = op.matrix.rows();
  require(count >= 1 && count <= n, ErrorKind::InvalidArgument, "eigenvalue count out of range");
  if (n <= 600) return dense_generalized_largest(op.matrix, MatrixXd(op.mass), count);
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> mass_factor(op.mass);
  require(mass_factor.info() == Eigen::Success, ErrorKind::MeshQuality, "layer Gram matrix is not positive definite");
  LanczosOptions lo;
  lo.block_size = std::clamp(count + 2, 4, 12);
  lo.tolerance = 1e-9;
  lo.max_blocks = 400;
  auto apply = [&](const MatrixXd& x) -> MatrixXd { return mass_factor.solve(MatrixXd(op.matrix * x)); };
  auto bmul = [&](const MatrixXd& x) -> MatrixXd { return op.mass * x; };
  return block_lanczos_largest(n, apply, bmul, count, lo, warm);
}

inline std::vector<double> bs_eigenvalues(const LayerOperator& op, int count) {
  const EigenPairs e = bs_eigenpairs(op, count);
  return {e.values.data(), e.values.data() + e.values.size()};
}

// ---------------------------------------------------------------------------
// Bound states

/// P1 coefficients of a surface function, in mesh vertex order.
using SurfaceDensity = VectorXd;

struct BoundStateOptions {
  LayerOptions layer;
  double tolerance = 1e-6;  // on |beta mu_j - 1|
  int max_iterations = 60;
  /// Starting guesses for kappa_j; defaults to beta / 2.
  std::vector<double> kappa_guess;
  /// Normalize densities so that the layer potential has unit L2(R^3) norm.
  bool normalize = true;
};

struct BoundStateResult {
  double beta = 0.0;
  std::vector<std::optional<double>> eigenvalues;
  std::vector<std::optional<double>> kappas;
  std::vector<SurfaceDensity> densities;
  std::vector<double> bisection_residuals;
  std::vector<int> multiplicities;
  std::vector<int> iterations;
  int assemblies = 0;
  std::shared_ptr<const LayerGeometry> geometry;
};

namespace detail {

struct KappaSample {
  VectorXd mu;
  MatrixXd vectors;
};

}  // namespace detail

/// Bound states E_j = -kappa_j^2 from beta mu_j(kappa_j) = 1, where mu_j is
/// the j-th largest eigenvalue of the layer operator. mu_j decreases strictly
/// in kappa, so the root is unique; it is found by safeguarded secant steps on
/// 1/(beta mu_j) - 1 (nearly linear in kappa) inside a bisection bracket.
inline BoundStateResult solve_bound_states(std::shared_ptr<const LayerGeometry> geo, double beta, int count,
                                           const BoundStateOptions& opt = {}) {
  require(beta > 0.0, ErrorKind::InvalidArgument, "beta must be positive");
  require(count >= 1 && count <= geo->vertex_count(), ErrorKind::InvalidArgument, "bound-state count out of range");
  BoundStateResult res;
  res.beta = beta;
  res.geometry = geo;
  std::map<double, detail::KappaSample> cache;
  auto evaluate = [&](double kappa) -> const detail::KappaSample& {
    auto it = cache.find(kappa);
    if (it != cache.end()) return it->second;
    const MatrixXd* warm = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [k, s] : cache)
      if (std::abs(k - kappa) < best) {
        best = std::abs(k - kappa);
        warm = &s.vectors;
      }
    const LayerOperator op = assemble_layer(geo, kappa, opt.layer);
    ++res.assemblies;
    const EigenPairs e = bs_eigenpairs(op, count, warm);
    return cache.emplace(kappa, detail::KappaSample{e.values, e.vectors}).first->second;
  };

  for (int j = 0; j < count; ++j) {
    auto g = [&](double kappa) { return 1.0 / (beta * evaluate(kappa).mu[j]) - 1.0; };
    double lo = -1.0, hi = -1.0, glo = 0.0, ghi = 0.0;  // bracket g(lo) < 0 < g(hi)
    auto record = [&](double k, double gk) {
      if (gk < 0.0 && (lo < 0.0 || k > lo)) {
        lo = k;
        glo = gk;
      }
      if (gk > 0.0 && (hi < 0.0 || k < hi)) {
        hi = k;
        ghi = gk;
      }
    };
    double k0 = j < static_cast<int>(opt.kappa_guess.size()) ? opt.kappa_guess[j]
                : (j > 0 && res.kappas[j - 1])                ? *res.kappas[j - 1]
                                                               : 0.5 * beta;
    k0 = std::clamp(k0, 0.0, beta);
    double g0 = g(k0);
    record(k0, g0);
    double k1 = k0, g1 = g0;
    bool found = std::abs(g0) * (1.0 + g0) <= opt.tolerance;
    int it = 1;
    double prev_k = k0, prev_g = g0;
    bool have_prev = false;
    while (!found && it < opt.max_iterations) {
      double next;
      if (have_prev && std::abs(g1 - prev_g) > 0.0) {
        next = k1 - g1 * (k1 - prev_k) / (g1 - prev_g);
      } else {
        next = k1 - g1 * 0.5 * beta;  // flat-sheet slope of g is 2 / beta
      }
      if (lo >= 0.0 && hi >= 0.0) {
        const double margin = 1e-3 * (hi - lo);
        if (!(next > lo + margin && next < hi - margin)) next = 0.5 * (lo + hi);
      } else if (next <= 0.0) {
        if (lo < 0.0 && g(0.0) >= 0.0) {
          ++it;
          break;  // no bound state for this index
        }
        record(0.0, g(0.0));
        next = 0.5 * (k1 + std::max(lo, 0.0));
      } else if (next >= beta) {
        if (g(beta) <= 0.0) {
          ++it;
          break;  // bracket not found
        }
        record(beta, g(beta));
        next = 0.5 * (k1 + beta);
      }
      prev_k = k1;
      prev_g = g1;
      have_prev = true;
      k1 = next;
      g1 = g(k1);
      record(k1, g1);
      ++it;
      found = std::abs(g1) * (1.0 + g1) <= opt.tolerance || (hi >= 0.0 && lo >= 0.0 && hi - lo < 1e-14 * beta);
    }
    res.iterations.push_back(it);
    if (!found) {
      res.eigenvalues.push_back(std::nullopt);
      res.kappas.push_back(std::nullopt);
      res.densities.emplace_back();
      res.bisection_residuals.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const detail::KappaSample& s = evaluate(k1);
    SurfaceDensity h = s.vectors.col(j);
    if (h.sum() < 0.0) h = -h;
    if (opt.normalize && k1 > 0.0) {
      const MatrixXd energy = assemble_kernel(*geo, YukawaEnergyKernel{k1}, k1, opt.layer);
      ++res.assemblies;
      h /= std::sqrt(h.dot(energy * h));
    }
    res.kappas.push_back(k1);
    res.eigenvalues.push_back(-k1 * k1);
    res.densities.push_back(std::move(h));
    res.bisection_residuals.push_back(std::abs(beta * s.mu[j] - 1.0));
  }
  std::vector<double> found_values;
  for (const auto& e : res.eigenvalues) found_values.push_back(e ? *e : std::numeric_limits<double>::quiet_NaN());
  res.multiplicities.assign(count, 1);
  for (int j = 0; j < count;) {
    int k = j + 1;
    while (k < count && res.eigenvalues[k] && res.eigenvalues[j] &&
           std::abs(found_values[k] - found_values[j]) <= 1e-8 * std::abs(found_values[j]))
      ++k;
    for (int m = j; m < k; ++m) res.multiplicities[m] = k - j;
    j = k;
  }
  return res;
}

inline BoundStateResult solve_bound_states(const SurfaceMesh& mesh, double beta, int count,
                                           const BoundStateOptions& opt = {}) {
  return solve_bound_states(std::make_shared<LayerGeometry>(std::make_shared<SurfaceMesh>(mesh)), beta, count, opt);
}

// ---------------------------------------------------------------------------
// Layer potential off the surface

struct FieldValue {
  double value = 0.0;
  Vec3 gradient = Vec3::Zero();
  /// The point was closer to the surface than a panel diameter; the
  /// integrals were refined adaptively.
  bool near_singular = false;
};

namespace detail {

struct PointIntegrator {
  const LayerGeometry& geo;
  double kappa;
  double ratio = 0.25;
  int max_depth = 12;

  template <class F>
  void visit(const SubRef& s, const Vec3& x, const F& f) const {
    const PairIntegrator split_helper{geo, LayerOptions{}, kappa};
    const double gap = (s.box.centre - x).norm() - s.box.radius;
    const double diameter = 2.0 * s.box.radius;
    const bool fine = diameter <= ratio * gap && (kappa * diameter <= 1.5 || kappa * gap >= 15.0);
    if (fine || s.level >= max_depth) {
      LayerNode scratch[LayerGeometry::kNodesPerSub];
      const LayerNode* n = split_helper.nodes(s, scratch);
      for (int k = 0; k < LayerGeometry::kNodesPerSub; ++k) f(n[k]);
      return;
    }
    for (const SubRef& c : split_helper.split(s)) visit(c, x, f);
  }
};

}  // namespace detail

/// Distance from x to the curved surface: nearest panel point found by a
/// projected Gauss-Newton iteration in each candidate panel's parameters.
inline double distance_to_surface(const LayerGeometry& geo, const Vec3& x) {
  struct Candidate {
    double lower;
    int panel;
  };
  std::vector<Candidate> cand;
  for (int p = 0; p < geo.panel_count(); ++p) {
    const SubPanelBox& b = geo.box(p, 0, 0);
    cand.push_back({std::max((b.centre - x).norm() - b.radius, 0.0), p});
  }
  std::sort(cand.begin(), cand.end(), [](const Candidate& a, const Candidate& b) { return a.lower < b.lower; });
  double best = std::numeric_limits<double>::infinity();
  for (const Candidate& c : cand) {
    if (c.lower > best) break;
    const MeshTriangle& t = geo.mesh().triangles[c.panel];
    // start from the nearest cached node
    const LayerNode* n = geo.nodes(c.panel, 2, 0);
    Vec3 bary = n[0].bary;
    for (int k = 0; k < LayerGeometry::kNodesPerSub * 16; ++k)
      if ((n[k].point - x).norm() < (geo.sample(c.panel, bary).first - x).norm()) bary = n[k].bary;
    for (int iter = 0; iter < 30; ++iter) {
      const ChartFirst f = geo.chart_first(c.panel, bary);
      // tangents with respect to (bary1, bary2), bary0 = 1 - bary1 - bary2
      const Vec2 e1 = t.param[1] - t.param[0], e2 = t.param[2] - t.param[0];
      Eigen::Matrix<double, 3, 2> jac;
      jac.col(0) = f.tangents[0] * e1.x() + f.tangents[1] * e1.y();
      jac.col(1) = f.tangents[0] * e2.x() + f.tangents[1] * e2.y();
      const Vec3 r = f.point - x;
      const Vec2 step = -(jac.transpose() * jac).ldlt().solve(jac.transpose() * r);
      Vec3 next(bary[0] - step.x() - step.y(), bary[1] + step.x(), bary[2] + step.y());
      // project back onto the triangle
      for (int k = 0; k < 3; ++k) next[k] = std::max(next[k], 0.0);
      next /= next.sum();
      const bool small = (next - bary).norm() < 1e-14;
      bary = next;
      if (small) break;
    }
    best = std::min(best, (geo.sample(c.panel, bary).first - x).norm());
    for (int k = 0; k < LayerGeometry::kNodesPerSub * 16; ++k) best = std::min(best, (n[k].point - x).norm());
  }
  return best;
}

/// u(x) = int_S e^{-kappa |x - s|} / (4 pi |x - s|) h(s) dsigma(s), with its gradient.
inline FieldValue layer_potential(const LayerGeometry& geo, double kappa, const SurfaceDensity& h, const Vec3& x) {
  require(h.size() == geo.vertex_count(), ErrorKind::InvalidArgument, "density size does not match the mesh");
  FieldValue out;
  const detail::PointIntegrator integ{geo, kappa};
  const detail::PairIntegrator roots{geo, LayerOptions{}, kappa};
  for (int p = 0; p < geo.panel_count(); ++p) {
    const SubPanelBox& b = geo.box(p, 0, 0);
    const double gap = (b.centre - x).norm() - b.radius;
    if (gap < 2.0 * b.radius) out.near_singular = out.near_singular || gap < 0.5 * b.radius;
    const auto& v = geo.panel_vertices(p);
    const Vec3 hv(h[v[0]], h[v[1]], h[v[2]]);
    integ.visit(roots.root(p), x, [&](const LayerNode& n) {
      const Vec3 d = x - n.point;
      const double r = d.norm();
      require(r > 0.0, ErrorKind::InvalidArgument, "evaluation point lies on the surface");
      const double e = std::exp(-kappa * r) / (4.0 * kPi * r);
      const double dens = n.weight * n.bary.dot(hv);
      out.value += e * dens;
      out.gradient -= (dens * e * (1.0 + kappa * r) / (r * r)) * d;
    });
  }
  return out;
}

inline FieldValue reconstruct_eigenfunction(const BoundStateResult& r, int j, const Vec3& x) {
  require(j >= 0 && j < static_cast<int>(r.kappas.size()) && r.kappas[j], ErrorKind::InvalidArgument,
          "bound state was not solved");
  return layer_potential(*r.geometry, *r.kappas[j], r.densities[j], x);
}

/// ||h||_{L1(S)} of a P1 density, on the level-2 nodes.
inline double density_l1(const LayerGeometry& geo, const SurfaceDensity& h) {
  double s = 0.0;
  for (int p = 0; p < geo.panel_count(); ++p) {
    const auto& v = geo.panel_vertices(p);
    const Vec3 hv(h[v[0]], h[v[1]], h[v[2]]);
    const LayerNode* n = geo.nodes(p, 2, 0);
    for (int k = 0; k < LayerGeometry::kNodesPerSub * 16; ++k) s += n[k].weight * std::abs(n[k].bary.dot(hv));
  }
  return s;
}

/// Surface trace of the layer potential at every mesh vertex. Panels touching
/// the vertex are integrated in Duffy coordinates centred at it.
inline VectorXd layer_trace(const LayerGeometry& geo, double kappa, const SurfaceDensity& h, int order = 10) {
  const int nv = geo.vertex_count();
  VectorXd u = VectorXd::Zero(nv);
  const GaussRule& g = gauss_legendre(order);
  const detail::PointIntegrator integ{geo, kappa};
  const detail::PairIntegrator roots{geo, LayerOptions{}, kappa};
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < nv; ++i) {
    const Vec3 x = geo.mesh().vertices[i].point;
    double acc = 0.0;
    for (int p = 0; p < geo.panel_count(); ++p) {
      const auto& v = geo.panel_vertices(p);
      const Vec3 hv(h[v[0]], h[v[1]], h[v[2]]);
      const int local = v[0] == i ? 0 : v[1] == i ? 1 : v[2] == i ? 2 : -1;
      if (local < 0) {
        integ.visit(roots.root(p), x, [&](const LayerNode& n) {
          const double r = (x - n.point).norm();
          acc += n.weight * n.bary.dot(hv) * std::exp(-kappa * r) / (4.0 * kPi * r);
        });
        continue;
      }
      // Duffy: bary = apex (1 - s) + s ((1 - t) b + t c), Jacobian s
      const int b = (local + 1) % 3, c = (local + 2) % 3;
      const double area2 = 2.0 * geo.panel_param_area(p);
      for (int a = 0; a < order; ++a)
        for (int k = 0; k < order; ++k) {
          const double s = g.nodes[a], t = g.nodes[k];
          Vec3 bary = Vec3::Zero();
          bary[local] = 1.0 - s;
          bary[b] = s * (1.0 - t);
          bary[c] = s * t;
          const auto sm = geo.sample(p, bary);
          const double r = (x - sm.first).norm();
          acc += g.weights[a] * g.weights[k] * s * area2 * sm.second * bary.dot(hv) * std::exp(-kappa * r) /
                 (4.0 * kPi * r);
        }
    }
    u[i] = acc;
  }
  return u;
}

/// Relative L2(S) defect between h_j and beta times the surface trace of its
/// layer potential.
inline double trace_consistency(const BoundStateResult& r, int j) {
  require(j >= 0 && j < static_cast<int>(r.kappas.size()) && r.kappas[j], ErrorKind::InvalidArgument,
          "bound state was not solved");
  const LayerGeometry& geo = *r.geometry;
  const SurfaceDensity& h = r.densities[j];
  const VectorXd e = h - r.beta * layer_trace(geo, *r.kappas[j], h);
  const Eigen::SparseMatrix<double> m = layer_mass(geo, false);
  return std::sqrt(e.dot(m * e) / h.dot(m * h));
}

/// CSV columns: beta, j, E_j, kappa_j, bisection_residual, trace_defect.
/// Missing bound states leave the numeric fields empty.
inline void write_bound_states_csv(std::ostream& os, const std::vector<BoundStateResult>& results,
                                   const std::vector<std::vector<double>>& trace_defects = {}) {
  os << "beta,j,E_j,kappa_j,bisection_residual,trace_defect\n";
  os.precision(15);
  for (std::size_t b = 0; b < results.size(); ++b) {
    const BoundStateResult& r = results[b];
    for (std::size_t j = 0; j < r.eigenvalues.size(); ++j) {
      os << r.beta << ',' << j + 1 << ',';
      if (r.eigenvalues[j]) os << *r.eigenvalues[j] << ',' << *r.kappas[j] << ',' << r.bisection_residuals[j];
      else os << ",,";
      os << ',';
      if (b < trace_defects.size() && j < trace_defects[b].size()) os << trace_defects[b][j];
      os << '\n';
    }
  }
}

/// Density values in mesh vertex order.
inline void write_density_csv(std::ostream& os, const BoundStateResult& r) {
  os << "vertex";
  for (std::size_t j = 0; j < r.densities.size(); ++j) os << ",h" << j + 1;
  os << '\n';
  os.precision(15);
  for (int v = 0; v < r.geometry->vertex_count(); ++v) {
    os << v;
    for (const auto& h : r.densities) {
      os << ',';
      if (h.size() > 0) os << h[v];
    }
    os << '\n';
  }
}

}  // namespace deltasurf
