#pragma once
// Lowest eigenpairs of K phi = lambda M phi on the free dofs and the
// functional-inequality checks built on them (Hardy, Poincare, lambda_1
// lower bound, modal expansions).

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "assembly.hpp"

namespace degenlab {

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> residuals)
      : std::runtime_error(what), residuals_(std::move(residuals)) {}
  const std::vector<double>& residuals() const { return residuals_; }

 private:
  std::vector<double> residuals_;
};

struct SpectralBasis {
  std::vector<double> lambdas;     // ascending
  Eigen::MatrixXd phis;            // nodal vectors (columns), zero on Dirichlet nodes
  std::vector<double> residuals;   // |K phi - lambda M phi| / |M phi| on free dofs
  const AssembledOperators* operators = nullptr;  // not owned

  int m() const { return static_cast<int>(lambdas.size()); }
  Vector phi(int n) const { return phis.col(n); }
};

struct EigenOptions {
  double tol = 1e-10;
  int max_iterations = 1000;
  std::uint32_t seed = 7;
  /// Problems up to this many free dofs are solved densely.
  int dense_limit = 400;
};

namespace detail {

// Fixes the sign of each column so its M-inner product with a fixed
// asymmetric smooth field is positive; the convention carries across meshes.
inline void normalize_signs(Eigen::MatrixXd& X, const AssembledOperators& ops, const SparseMatrix& M) {
  const Vector g = restrict_to_free(
      ops, interpolate(*ops.mesh, [](Vec2 x) { return std::exp(0.7 * x.x + 0.3 * x.y) + 0.5 * x.x * x.y; }));
  const Vector Mg = M * g;
  for (int j = 0; j < X.cols(); ++j) {
    double d = X.col(j).dot(Mg);
    if (d == 0.0) {
      Eigen::Index i;
      X.col(j).cwiseAbs().maxCoeff(&i);
      d = X(i, j);
    }
    if (d < 0.0) X.col(j) *= -1.0;
  }
}

inline std::vector<double> eigen_residuals(const SparseMatrix& K, const SparseMatrix& M, const Eigen::MatrixXd& X,
                                           const Eigen::VectorXd& lam, int m) {
  std::vector<double> r(m);
  for (int j = 0; j < m; ++j) {
    const Eigen::VectorXd mx = M * X.col(j);
    r[j] = (K * X.col(j) - lam[j] * mx).norm() / mx.norm();
  }
  return r;
}

}  // namespace detail

/// The m smallest eigenpairs, M-orthonormal, by shift-invert subspace
/// iteration (shift 0, K is positive definite on the free dofs) with
/// Rayleigh-Ritz projection. Small problems fall back to a dense solve.
inline SpectralBasis solve_eigenpairs(const AssembledOperators& ops, int m, const EigenOptions& opt = {}) {
  const int nf = static_cast<int>(ops.num_free());
  if (m < 1 || m > nf) throw std::invalid_argument("eigenpair count must lie in [1, free dofs]");
  const SparseMatrix K = restrict_matrix(ops, ops.K);
  const SparseMatrix M = restrict_matrix(ops, ops.M);

  Eigen::MatrixXd X;
  Eigen::VectorXd lam;
  if (nf <= opt.dense_limit) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(K), Eigen::MatrixXd(M)};
    if (es.info() != Eigen::Success) throw ConvergenceError("dense generalized eigensolve failed", {});
    X = es.eigenvectors().leftCols(m);
    lam = es.eigenvalues().head(m);
  } else {
    Eigen::SimplicialLDLT<SparseMatrix> solver(K);
    if (solver.info() != Eigen::Success) throw ConvergenceError("factorization of K failed", {});
    const int p = std::min(nf, std::max(2 * m, m + 8));
    std::mt19937 rng(opt.seed);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd Y(nf, p);
    for (int j = 0; j < p; ++j)
      for (int i = 0; i < nf; ++i) Y(i, j) = nd(rng);
    std::vector<double> res;
    for (int it = 0;; ++it) {
      const Eigen::MatrixXd KY = K * Y;
      const Eigen::MatrixXd MY = M * Y;
      const Eigen::MatrixXd A = Y.transpose() * KY;
      const Eigen::MatrixXd B = Y.transpose() * MY;
      Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()),
                                                                  0.5 * (B + B.transpose()));
      if (es.info() != Eigen::Success) throw ConvergenceError("Rayleigh-Ritz step failed", res);
      X = Y * es.eigenvectors();
      lam = es.eigenvalues();
      res = detail::eigen_residuals(K, M, X, lam, m);
      if (*std::max_element(res.begin(), res.end()) <= opt.tol) {
        X = X.leftCols(m).eval();
        lam = lam.head(m).eval();
        break;
      }
      if (it >= opt.max_iterations) {
        std::ostringstream msg;
        msg << "subspace iteration did not converge; max residual "
            << *std::max_element(res.begin(), res.end());
        throw ConvergenceError(msg.str(), res);
      }
      Y = solver.solve(M * X);
    }
  }

  detail::normalize_signs(X, ops, M);
  SpectralBasis basis;
  basis.operators = &ops;
  basis.lambdas.assign(lam.data(), lam.data() + m);
  basis.residuals = detail::eigen_residuals(K, M, X, lam, m);
  basis.phis = Eigen::MatrixXd::Zero(ops.num_nodes(), m);
  for (int j = 0; j < m; ++j) basis.phis.col(j) = prolong_from_free(ops, X.col(j));
  for (double r : basis.residuals)
    if (!(r <= opt.tol))
      throw ConvergenceError("eigenpair residual above tolerance", basis.residuals);
  return basis;
}

// ---------------------------------------------------------------------------
// Closed-form constants (N = 2 unless given)

inline double hardy_constant(double alpha, int N = 2) {
  const double k = N - 2 + alpha;
  return 4.0 / (k * k);
}

inline double poincare_constant(double alpha, double M_radius, int N = 2) {
  return hardy_constant(alpha, N) * std::pow(M_radius, 2.0 - alpha);
}

/// Lower bound for lambda_1 implied by the Poincare inequality.
inline double lambda1_lower_bound(double alpha, double M_radius, int N = 2) {
  return 1.0 / poincare_constant(alpha, M_radius, N);
}

struct RatioReport {
  std::vector<double> ratios;
  double bound = 0.0;
  double tolerance = 0.0;  // relative
  double max_ratio = 0.0;
  int argmax = -1;
  bool pass = false;
};

namespace detail {

inline RatioReport quotient_report(const AssembledOperators& ops, const SparseMatrix& num,
                                   const std::vector<Vector>& fields, double bound, double rel_tol) {
  RatioReport r;
  r.bound = bound;
  r.tolerance = rel_tol;
  const Mesh& mesh = *ops.mesh;
  for (std::size_t f = 0; f < fields.size(); ++f) {
    const Vector& u = fields[f];
    for (std::size_t i = 0; i < mesh.num_nodes(); ++i)
      if (mesh.dirichlet_mask[i] && u[i] != 0.0)
        throw std::invalid_argument("test field does not vanish on Dirichlet nodes");
    const double den = quadratic_form(ops.K, u);
    if (!(den > 0.0)) throw std::invalid_argument("test field has zero weighted energy");
    r.ratios.push_back(quadratic_form(num, u) / den);
    if (r.ratios.back() > r.max_ratio) {
      r.max_ratio = r.ratios.back();
      r.argmax = static_cast<int>(f);
    }
  }
  r.pass = r.max_ratio <= bound * (1.0 + rel_tol);
  return r;
}

}  // namespace detail

inline constexpr double kQuadratureTolerance = 0.02;

/// Ratios u'Hu / u'Ku against the Hardy constant 4/(N-2+alpha)^2.
inline RatioReport verify_hardy(const AssembledOperators& ops, const std::vector<Vector>& fields,
                                double rel_tol = kQuadratureTolerance) {
  return detail::quotient_report(ops, ops.H, fields, hardy_constant(ops.alpha), rel_tol);
}

/// Ratios u'Mu / u'Ku against 4 M^(2-alpha)/(N-2+alpha)^2.
inline RatioReport verify_poincare(const AssembledOperators& ops, const std::vector<Vector>& fields,
                                   double M_radius, double rel_tol = kQuadratureTolerance) {
  return detail::quotient_report(ops, ops.M, fields, poincare_constant(ops.alpha, M_radius), rel_tol);
}

struct Expansion {
  std::vector<double> coefficients;
  double residual_m_norm = 0.0;  // |field - sum c_i phi_i|_M
  double field_m_norm = 0.0;
};

/// Modal coefficients c_i = phi_i' M field.
inline Expansion expand(const SpectralBasis& basis, const Vector& field) {
  const SparseMatrix& M = basis.operators->M;
  const Vector Mf = M * field;
  Expansion e;
  Vector recon = Vector::Zero(field.size());
  for (int i = 0; i < basis.m(); ++i) {
    const double c = basis.phis.col(i).dot(Mf);
    e.coefficients.push_back(c);
    recon += c * basis.phis.col(i);
  }
  const Vector diff = field - recon;
  e.residual_m_norm = std::sqrt(std::max(0.0, quadratic_form(M, diff)));
  e.field_m_norm = std::sqrt(std::max(0.0, quadratic_form(M, field)));
  return e;
}

inline Vector reconstruct(const SpectralBasis& basis, const std::vector<double>& coefficients) {
  Vector v = Vector::Zero(basis.phis.rows());
  for (std::size_t i = 0; i < coefficients.size() && static_cast<int>(i) < basis.m(); ++i)
    v += coefficients[i] * basis.phis.col(static_cast<int>(i));
  return v;
}

/// sum_n c_n Phi_n over the first `modes` eigenvectors with c drawn uniformly
/// from the unit sphere. modes = 1 returns Phi_1 itself.
inline Vector random_modal_state(const SpectralBasis& basis, int modes, std::mt19937& rng) {
  if (modes < 1 || modes > basis.m()) throw std::invalid_argument("mode count must lie in [1, basis size]");
  if (modes == 1) return basis.phi(0);
  std::normal_distribution<double> nd;
  std::vector<double> c(modes);
  double n2 = 0.0;
  for (double& x : c) {
    x = nd(rng);
    n2 += x * x;
  }
  for (double& x : c) x /= std::sqrt(n2);
  return reconstruct(basis, c);
}

/// Smooth bump (1 - |x - c|^2 / rho^2)^2 interpolated at the nodes and
/// zeroed on Dirichlet nodes.
inline Vector bump_field(const Mesh& mesh, Vec2 center, double radius) {
  Vector v = interpolate(mesh, [&](Vec2 x) {
    const double q = dot(x - center, x - center) / (radius * radius);
    return q < 1.0 ? (1.0 - q) * (1.0 - q) : 0.0;
  });
  return apply_dirichlet(mesh, std::move(v));
}

/// Test-field suite for the Hardy check: the first eigenvectors plus random
/// bumps, half of them centred close to the origin.
inline std::vector<Vector> hardy_test_fields(const SpectralBasis& basis, int eigen_count, int bump_count,
                                             std::uint32_t seed) {
  const Mesh& mesh = *basis.operators->mesh;
  std::vector<Vector> fields;
  for (int i = 0; i < std::min(eigen_count, basis.m()); ++i) fields.push_back(basis.phi(i));
  double ymax = 0.0, xmin = 0.0, xmax = 0.0;
  for (const Vec2& p : mesh.nodes) {
    ymax = std::max(ymax, p.y);
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
  }
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double min_h = std::numeric_limits<double>::infinity();
  for (const auto& t : mesh.triangles)
    min_h = std::min(min_h, norm(mesh.nodes[t[1]] - mesh.nodes[t[0]]));
  for (int b = 0; b < bump_count; ++b) {
    Vector v;
    for (int attempt = 0; attempt < 100; ++attempt) {
      Vec2 c;
      double rho;
      if (b % 2 == 0) {
        // Near the degeneracy point.
        const double r = 0.02 + 0.08 * uni(rng);
        const double th = 0.2 + 2.74 * uni(rng);
        c = {r * std::cos(th), r * std::sin(th)};
        rho = r * (0.8 + 0.6 * uni(rng));
      } else {
        c = {xmin + (xmax - xmin) * (0.2 + 0.6 * uni(rng)), ymax * (0.3 + 0.5 * uni(rng))};
        rho = 0.1 + 0.15 * uni(rng);
      }
      v = bump_field(mesh, c, std::max(rho, 3.0 * min_h));
      if (v.squaredNorm() > 0.0) break;
    }
    fields.push_back(v);
  }
  return fields;
}

}  // namespace degenlab
