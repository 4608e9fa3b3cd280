#include <gtest/gtest.h>

#include <cmath>

#include "degenlab/spectral.hpp"

using namespace degenlab;

namespace {

struct Problem {
  DomainSpec domain;
  Mesh mesh;
  AssembledOperators ops;
  SpectralBasis basis;
};

std::unique_ptr<Problem> make(double h, double alpha, int m = 10, EigenOptions opt = {}) {
  auto p = std::make_unique<Problem>();
  p->domain = build_canonical_domain(DomainKind::flat_bottom_rect, {});
  MeshOptions o;
  o.h = h;
  p->mesh = generate_mesh(p->domain, o);
  p->ops = assemble(p->mesh, alpha);
  p->basis = solve_eigenpairs(p->ops, m, opt);
  return p;
}

}  // namespace

TEST(Constants, ClosedForms) {
  EXPECT_DOUBLE_EQ(hardy_constant(0.5), 16.0);
  const double M = 1.0 + std::sqrt(1.25);
  // (N-2+alpha)^2 / (4 M^(2-alpha)) evaluated independently.
  EXPECT_NEAR(lambda1_lower_bound(0.5, M), 0.25 / (4.0 * M * std::sqrt(M)), 1e-15);
  EXPECT_NEAR(lambda1_lower_bound(0.5, M), 0.02028, 5e-6);
  EXPECT_NEAR(poincare_constant(0.5, M), 49.32, 0.01);
}

TEST(Eigenpairs, BoundAndInvariants) {
  for (double alpha : {0.25, 0.5, 0.75}) {
    const auto p = make(0.1, alpha);
    const SpectralBasis& b = p->basis;
    EXPECT_GE(b.lambdas[0], lambda1_lower_bound(alpha, p->domain.M_radius));
    EXPECT_GT((b.lambdas[1] - b.lambdas[0]) / b.lambdas[1], 1e-10);
    for (int i = 0; i + 1 < b.m(); ++i) EXPECT_LE(b.lambdas[i], b.lambdas[i + 1]);
    for (double r : b.residuals) EXPECT_LE(r, 1e-8);
    const Eigen::MatrixXd G = b.phis.transpose() * (p->ops.M * b.phis);
    const Eigen::MatrixXd S = b.phis.transpose() * (p->ops.K * b.phis);
    for (int i = 0; i < b.m(); ++i)
      for (int j = 0; j < b.m(); ++j) {
        EXPECT_NEAR(G(i, j), i == j ? 1.0 : 0.0, 1e-8);
        EXPECT_NEAR(S(i, j), i == j ? b.lambdas[i] : 0.0, 1e-6 * b.lambdas[i]);
      }
    for (std::size_t n = 0; n < p->mesh.num_nodes(); ++n)
      if (p->mesh.dirichlet_mask[n]) {
        EXPECT_EQ(b.phis(n, 0), 0.0);
      }
  }
}

TEST(Eigenpairs, SubspaceIterationAgreesWithDenseSolve) {
  const auto dense = make(0.1, 0.5, 6);
  EigenOptions opt;
  opt.dense_limit = 0;
  const auto iter = make(0.1, 0.5, 6, opt);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(iter->basis.lambdas[i] / dense->basis.lambdas[i], 1.0, 1e-9);
  // Same sign normalization, same vectors up to round-off (simple modes only).
  EXPECT_LT((iter->basis.phi(0) - dense->basis.phi(0)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Eigenpairs, RejectsBadCount) {
  const auto p = make(0.1, 0.5, 1);
  EXPECT_THROW(solve_eigenpairs(p->ops, 0), std::invalid_argument);
  EXPECT_THROW(solve_eigenpairs(p->ops, static_cast<int>(p->ops.num_free()) + 1), std::invalid_argument);
}

TEST(Eigenpairs, UnreachableToleranceReportsResiduals) {
  const auto p = make(0.1, 0.5, 1);
  EigenOptions opt;
  opt.dense_limit = 0;
  opt.tol = 1e-30;
  opt.max_iterations = 3;
  try {
    solve_eigenpairs(p->ops, 2, opt);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_FALSE(e.residuals().empty());
  }
}

TEST(Hardy, EigenvectorsAndBumps) {
  const auto p = make(0.05, 0.5);
  const auto fields = hardy_test_fields(p->basis, 10, 10, 7);
  ASSERT_EQ(fields.size(), 20u);
  const RatioReport r = verify_hardy(p->ops, fields);
  EXPECT_DOUBLE_EQ(r.bound, 16.0);
  EXPECT_TRUE(r.pass);
  EXPECT_LE(r.ratios[0], 16.0 * 1.02);
}

TEST(Hardy, ScaleInvariance) {
  const auto p = make(0.1, 0.5);
  const RatioReport a = verify_hardy(p->ops, {p->basis.phi(0)});
  const RatioReport b = verify_hardy(p->ops, {10.0 * p->basis.phi(0)});
  EXPECT_NEAR(a.ratios[0], b.ratios[0], 1e-12 * a.ratios[0]);
}

TEST(Hardy, RejectsInvalidFields) {
  const auto p = make(0.1, 0.5);
  EXPECT_THROW(verify_hardy(p->ops, {Vector::Zero(p->mesh.num_nodes())}), std::invalid_argument);
  EXPECT_THROW(verify_hardy(p->ops, {Vector::Ones(p->mesh.num_nodes())}), std::invalid_argument);
}

TEST(Poincare, RayleighIdentityAndMaximum) {
  const auto p = make(0.1, 0.5);
  std::vector<Vector> fields;
  for (int i = 0; i < p->basis.m(); ++i) fields.push_back(p->basis.phi(i));
  const RatioReport r = verify_poincare(p->ops, fields, p->domain.M_radius);
  EXPECT_NEAR(r.ratios[0], 1.0 / p->basis.lambdas[0], 1e-9 / p->basis.lambdas[0]);
  EXPECT_EQ(r.argmax, 0);
  EXPECT_TRUE(r.pass);
}

TEST(Expansion, BasisVectorAndParseval) {
  const auto p = make(0.1, 0.5);
  const Expansion e = expand(p->basis, p->basis.phi(2));
  for (int i = 0; i < p->basis.m(); ++i) EXPECT_NEAR(e.coefficients[i], i == 2 ? 1.0 : 0.0, 1e-8);
  EXPECT_LT(e.residual_m_norm, 1e-8);

  const Vector u = bump_field(p->mesh, {0.1, 0.4}, 0.3);
  const Expansion eu = expand(p->basis, u);
  double s = 0.0;
  for (double c : eu.coefficients) s += c * c;
  EXPECT_LE(s, quadratic_form(p->ops.M, u) * (1.0 + 1e-12));
}

TEST(Expansion, PartialSumsConvergeWithModeCount) {
  const auto p = make(0.1, 0.5, 80);
  const Vector u = bump_field(p->mesh, {0.0, 0.5}, 0.35);
  const double mass = quadratic_form(p->ops.M, u), energy = quadratic_form(p->ops.K, u);
  double prev_gap_m = 1e300, prev_gap_k = 1e300;
  for (int m : {10, 40, 80}) {
    double sm = 0.0, sk = 0.0;
    const Vector Mu = p->ops.M * u;
    for (int i = 0; i < m; ++i) {
      const double c = p->basis.phi(i).dot(Mu);
      sm += c * c;
      sk += p->basis.lambdas[i] * c * c;
    }
    EXPECT_LE(sm, mass * (1 + 1e-12));
    EXPECT_LE(sk, energy * (1 + 1e-12));
    EXPECT_LE(mass - sm, prev_gap_m);
    EXPECT_LE(energy - sk, prev_gap_k);
    prev_gap_m = mass - sm;
    prev_gap_k = energy - sk;
  }
  EXPECT_LT(prev_gap_m / mass, 1e-3);
}

TEST(Eigenpairs, DomainMonotonicityUnderTruncation) {
  auto p = std::make_unique<Problem>();
  p->domain = build_canonical_domain(DomainKind::flat_bottom_rect, {});
  MeshOptions o;
  o.h = 0.05;
  o.grading_exponent = 2.0;
  p->mesh = generate_mesh(p->domain, o);
  p->ops = assemble(p->mesh, 0.5);
  const SpectralBasis full = solve_eigenpairs(p->ops, 1);
  for (double d : {0.08, 0.02}) {
    const Mesh sub = make_submesh(p->mesh, d);
    const AssembledOperators so = assemble(sub, 0.5);
    const SpectralBasis sb = solve_eigenpairs(so, 1);
    EXPECT_GE(sb.lambdas[0], full.lambdas[0]);
    EXPECT_GE(sb.lambdas[0], lambda1_lower_bound(0.5, p->domain.M_radius));
    // Rayleigh quotient of the zero extension on the full operators.
    Vector ext = Vector::Zero(p->mesh.num_nodes());
    for (std::size_t i = 0; i < sub.num_nodes(); ++i) ext[(*sub.parent_map)[i]] = sb.phis(i, 0);
    EXPECT_NEAR(quadratic_form(p->ops.K, ext) / quadratic_form(p->ops.M, ext), sb.lambdas[0],
                1e-9 * sb.lambdas[0]);
  }
}
