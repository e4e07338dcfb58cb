#pragma once

// Symmetric eigensolvers: block Lanczos in a B-inner product (used both for
// shift-invert FEM solves and for the dense layer operators), a dense
// generalized fallback, and Sturm-sequence bisection for tridiagonal matrices.

#include "deltasurf/common.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace deltasurf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Eigenpairs in descending order of the operator's eigenvalue.
struct EigenPairs {
  VectorXd values;
  MatrixXd vectors;
  VectorXd residual_estimates;
  int iterations = 0;
  bool converged = false;
};

/// Eigensolver ran out of iterations; whatever converged so far is attached.
class IterationLimitError : public Error {
 public:
  IterationLimitError(const std::string& what, EigenPairs partial)
      : Error(ErrorKind::IterationLimit, what), partial_(std::move(partial)) {}
  const EigenPairs& partial() const noexcept { return partial_; }

 private:
  EigenPairs partial_;
};

struct LanczosOptions {
  int block_size = 4;
  int max_blocks = 200;
  double tolerance = 1e-10;
  unsigned seed = 12345;
};

namespace detail {

// B-orthonormalize the columns of w against themselves (modified Gram-Schmidt,
// two passes). Columns that collapse are replaced by fresh random directions
// orthogonal to basis. Returns the coefficient matrix r with w_in = w_out r.
template <class BMul>
MatrixXd b_orthonormalize(MatrixXd& w, const MatrixXd& basis, const MatrixXd& b_basis, const BMul& bmul,
                          std::mt19937& rng) {
  const Index p = w.cols();
  MatrixXd r = MatrixXd::Zero(p, p);
  std::normal_distribution<double> normal;
  for (Index c = 0; c < p; ++c) {
    VectorXd v = w.col(c);
    double original = std::sqrt(std::max(v.dot(bmul(v)), 0.0));
    for (int attempt = 0; attempt < 4; ++attempt) {
      for (int pass = 0; pass < 2; ++pass) {
        if (basis.cols() > 0) v -= basis * (b_basis.transpose() * v);
        for (Index k = 0; k < c; ++k) {
          const double proj = w.col(k).dot(bmul(v));
          if (attempt == 0) r(k, c) += proj;
          v -= proj * w.col(k);
        }
      }
      const double norm = std::sqrt(std::max(v.dot(bmul(v)), 0.0));
      if (attempt == 0 && norm > 1e-10 * std::max(original, 1e-300)) {
        r(c, c) = norm;
        w.col(c) = v / norm;
        break;
      }
      if (attempt > 0 && norm > 0.0) {
        w.col(c) = v / norm;
        break;
      }
      for (Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
      original = std::sqrt(v.dot(bmul(v)));
    }
  }
  return r;
}

}  // namespace detail

/// Largest `count` eigenpairs of an operator that is self-adjoint in the
/// inner product <x, y>_B = x^T B y. `op` and `bmul` map an n x p block to an
/// n x p block. `initial` (optional) seeds the first block, e.g. with the
/// eigenvectors of a nearby problem. Eigenvectors come back B-orthonormal.
template <class Op, class BMul>
EigenPairs block_lanczos_largest(Index n, const Op& op, const BMul& bmul, int count, const LanczosOptions& options = {},
                                 const MatrixXd* initial = nullptr) {
  require(count >= 1 && count <= n, ErrorKind::InvalidArgument, "eigenpair count out of range");
  const Index p = std::min<Index>(std::max<Index>(options.block_size, 1), n);
  std::mt19937 rng(options.seed);
  std::normal_distribution<double> normal;
  auto bvec = [&](const VectorXd& v) -> VectorXd { return bmul(MatrixXd(v)).col(0); };

  MatrixXd basis(n, 0), b_basis(n, 0), op_basis(n, 0);
  MatrixXd block(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < p; ++k) block(i, k) = normal(rng);
  if (initial) {
    const Index take = std::min<Index>(initial->cols(), p);
    block.leftCols(take) = initial->leftCols(take);
  }
  detail::b_orthonormalize(block, basis, b_basis, bvec, rng);

  EigenPairs out;
  const Index max_dim = std::min<Index>(n, p * options.max_blocks);
  while (basis.cols() < max_dim) {
    const Index old = basis.cols();
    const Index take = std::min<Index>(p, max_dim - old);
    const MatrixXd fresh = block.leftCols(take);
    basis.conservativeResize(n, old + take);
    b_basis.conservativeResize(n, old + take);
    op_basis.conservativeResize(n, old + take);
    basis.rightCols(take) = fresh;
    b_basis.rightCols(take) = bmul(fresh);
    op_basis.rightCols(take) = op(fresh);
    const Index m = basis.cols();
    ++out.iterations;

    // Rayleigh-Ritz on the current subspace. With full reorthogonalization the
    // projected matrix is the explicit Q^T B Op Q.
    MatrixXd projected = b_basis.transpose() * op_basis;
    projected = 0.5 * (projected + projected.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXd> ritz(projected);
    const Index want = std::min<Index>(count, m);

    const MatrixXd coeffs = ritz.eigenvectors().rightCols(want).rowwise().reverse();
    out.values = ritz.eigenvalues().tail(want).reverse();
    out.vectors = basis * coeffs;
    const MatrixXd resid = op_basis * coeffs - out.vectors * out.values.asDiagonal();
    const MatrixXd b_resid = bmul(resid);
    out.residual_estimates.resize(want);
    for (Index j = 0; j < want; ++j)
      out.residual_estimates[j] = std::sqrt(std::max(resid.col(j).dot(b_resid.col(j)), 0.0));
    const double scale = std::max(std::abs(out.values[0]), 1e-300);
    bool done = want == count;
    for (Index j = 0; j < want && done; ++j) done = out.residual_estimates[j] <= options.tolerance * scale;
    if (done || m == n) {
      out.converged = true;
      return out;
    }
    if (m >= max_dim) break;
    // Next block: the newest operator images, orthogonalized against the basis.
    MatrixXd next = op_basis.rightCols(std::min<Index>(take, max_dim - m));
    detail::b_orthonormalize(next, basis, b_basis, bvec, rng);
    block = next;
  }
  throw IterationLimitError("Lanczos did not converge within " + std::to_string(out.iterations) + " blocks",
                            std::move(out));
}

/// Dense generalized problem A x = lambda B x with B positive definite; all
/// eigenpairs, descending.
inline EigenPairs dense_generalized_largest(const MatrixXd& a, const MatrixXd& b, int count) {
  require(count >= 1 && count <= a.rows(), ErrorKind::InvalidArgument, "eigenpair count out of range");
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> solver(a, b, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  require(solver.info() == Eigen::Success, ErrorKind::IterationLimit, "dense generalized eigensolver failed");
  const Index n = a.rows();
  EigenPairs out;
  out.values.resize(count);
  out.vectors.resize(n, count);
  out.residual_estimates.resize(count);
  for (int j = 0; j < count; ++j) {
    out.values[j] = solver.eigenvalues()[n - 1 - j];
    out.vectors.col(j) = solver.eigenvectors().col(n - 1 - j);
    out.residual_estimates[j] = (a * out.vectors.col(j) - out.values[j] * (b * out.vectors.col(j))).norm();
  }
  out.converged = true;
  return out;
}

/// Number of eigenvalues of the symmetric tridiagonal (diag, off) below x.
inline Index sturm_count(const std::vector<double>& diag, const std::vector<double>& off, double x) {
  Index count = 0;
  double d = 1.0;
  for (std::size_t i = 0; i < diag.size(); ++i) {
    const double o2 = i == 0 ? 0.0 : off[i - 1] * off[i - 1];
    d = diag[i] - x - (i == 0 ? 0.0 : o2 / d);
    if (d == 0.0) d = -1e-300;
    if (d < 0.0) ++count;
  }
  return count;
}

/// The k-th smallest (0-based) eigenvalue of a symmetric tridiagonal matrix.
inline double tridiagonal_eigenvalue(const std::vector<double>& diag, const std::vector<double>& off, Index k) {
  require(k >= 0 && k < static_cast<Index>(diag.size()), ErrorKind::InvalidArgument, "eigenvalue index out of range");
  double lo = std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::lowest();
  for (std::size_t i = 0; i < diag.size(); ++i) {
    const double r = (i > 0 ? std::abs(off[i - 1]) : 0.0) + (i + 1 < diag.size() ? std::abs(off[i]) : 0.0);
    lo = std::min(lo, diag[i] - r);
    hi = std::max(hi, diag[i] + r);
  }
  for (int it = 0; it < 200 && hi - lo > 4e-16 * std::max(std::abs(lo), std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (sturm_count(diag, off, mid) > k)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace deltasurf
