#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "degenlab/carleman.hpp"

using namespace degenlab;

namespace {

struct Problem {
  DomainSpec domain;
  Mesh mesh;
  AssembledOperators ops;
  SpectralBasis basis;
  std::vector<std::string> gamma_plus;
};

const Problem& shared() {
  static const auto p = [] {
    auto q = std::make_unique<Problem>();
    q->domain = build_canonical_domain(DomainKind::flat_bottom_rect, {});
    MeshOptions o;
    o.h = 0.1;
    q->mesh = generate_mesh(q->domain, o);
    q->ops = assemble(q->mesh, 0.5);
    q->basis = solve_eigenpairs(q->ops, 10);
    q->gamma_plus = gamma_plus_tags(q->domain, classify_boundary(q->domain));
    return q;
  }();
  return *p;
}

}  // namespace

TEST(Weights, PointValues) {
  const DomainSpec d = build_canonical_domain(DomainKind::flat_bottom_rect, {});
  const CarlemanWeightSet ws = make_weight_set(d, 0.5, 2.0, 1.0);
  EXPECT_DOUBLE_EQ(ws.theta(1.0), 1.0);
  EXPECT_EQ(ws.eta({0.0, 0.0}), 0.0);
  EXPECT_NEAR(ws.eta({0.3, 0.4}), std::exp(1.5 * std::log(0.5)), 1e-15);
  EXPECT_DOUBLE_EQ(ws.xi({0.0, 0.0}, 1.0), ws.gamma);
  EXPECT_NEAR(ws.theta_dt(1.0), 0.0, 1e-15);
  EXPECT_THROW(ws.theta(0.0), CarlemanError);
  EXPECT_THROW(ws.theta(2.0), CarlemanError);
  EXPECT_THROW(make_weight_set(d, 1.0, 2.0, 1.0), CarlemanError);
  EXPECT_THROW(make_weight_set(d, 0.5, 0.0, 1.0), CarlemanError);
}

TEST(Weights, GammaExceedsEtaByOne) {
  const Problem& p = shared();
  const CarlemanWeightSet ws = make_weight_set(p.domain, 0.5, 1.0, 1.0);
  EXPECT_GE(min_gamma_minus_eta(ws, p.mesh), 1.0 - 1e-12);
}

TEST(Weights, LogSumHandlesUnderflow) {
  LogSum s;
  EXPECT_EQ(s.value(), 0.0);
  s.add_log(-2000.0);
  s.add_log(-2000.0);
  EXPECT_NEAR(s.log(), -2000.0 + std::log(2.0), 1e-12);
  LogSum t;
  t.add(3.0, 0.0);
  t.add(5.0, 0.0);
  EXPECT_NEAR(t.value(), 8.0, 1e-12);
}

class Identities : public ::testing::TestWithParam<double> {};

TEST_P(Identities, HoldAtRandomPoints) {
  const DomainSpec d = build_canonical_domain(DomainKind::flat_bottom_rect, {});
  const auto pts = sample_points_in_domain(d, 100, 0.05, 3);
  const IdentityReport rep = verify_weight_identities(GetParam(), pts, 1e-4, &d);
  for (const IdentityCheck& c : rep.checks) EXPECT_LE(c.max_deviation, 1e-5) << c.name;
  EXPECT_TRUE(rep.pass);
  EXPECT_DOUBLE_EQ(rep.div_w_grad_eta, 2.0 * (2.0 - GetParam()));
}

INSTANTIATE_TEST_SUITE_P(Alphas, Identities, ::testing::Values(0.25, 0.5, 0.75));

TEST(Identities, ThetaBoundsScaleWithT) {
  const DomainSpec d = build_canonical_domain(DomainKind::flat_bottom_rect, {});
  const auto pts = sample_points_in_domain(d, 5, 0.05, 3);
  const IdentityReport r = verify_weight_identities(0.5, pts, 1e-4, nullptr, 1.0);
  // |Theta'| <= c1 Theta^{5/4} with c1 = 4 T and |Theta''| <= c2 Theta^{3/2} with c2 = 20 T^2 for p = 4.
  EXPECT_LE(r.theta_c1, 4.0 * (1 + 1e-9));
  EXPECT_GT(r.theta_c1, 3.5);
  EXPECT_LE(r.theta_c2, 20.0 * (1 + 1e-9));
  EXPECT_GT(r.theta_c2, 18.0);
}

TEST(Conjugation, ResidualSmallForModerateS) {
  const DomainSpec d = build_canonical_domain(DomainKind::flat_bottom_rect, {});
  for (double T : {1.0, 2.0}) {
    const auto pts = conjugation_samples(d, T, 100, 0.05, 5);
    for (double s : {0.0, 1.0, 2.0}) {
      const CarlemanWeightSet ws = make_weight_set(d, 0.5, T, s);
      const ConjugationReport r = conjugation_residual(ws, separable_bump(d), pts, 1e-4);
      EXPECT_EQ(r.points, pts.size());
      EXPECT_LE(r.max_relative_residual, 1e-4) << "T = " << T << ", s = " << s;
    }
  }
}

TEST(Conjugation, ZeroFieldGivesZero) {
  const DomainSpec d = build_canonical_domain(DomainKind::flat_bottom_rect, {});
  const auto pts = conjugation_samples(d, 2.0, 20, 0.05, 5);
  const CarlemanWeightSet ws = make_weight_set(d, 0.5, 2.0, 1.0);
  const ConjugationReport r = conjugation_residual(ws, [](Vec2, double) { return 0.0; }, pts, 1e-4);
  EXPECT_EQ(r.max_abs_residual, 0.0);
}

TEST(Functionals, ZeroAndScaling) {
  const Problem& p = shared();
  const TimeGrid g{2.0, 64};
  const CarlemanWeightSet ws = make_weight_set(p.domain, 0.5, 2.0, 2.0);
  const CarlemanSetup setup{p.gamma_plus};
  const CarlemanFunctionals z =
      carleman_functionals(solve_backward(p.ops, Vector::Zero(p.mesh.num_nodes()), g), p.ops, ws, setup);
  EXPECT_EQ(z.lhs_grad, 0.0);
  EXPECT_EQ(z.lhs_zero, 0.0);
  EXPECT_EQ(z.rhs_boundary, 0.0);

  const CarlemanFunctionals a = carleman_functionals(solve_backward(p.ops, p.basis.phi(0), g), p.ops, ws, setup);
  const CarlemanFunctionals b =
      carleman_functionals(solve_backward(p.ops, 3.0 * p.basis.phi(0), g), p.ops, ws, setup);
  EXPECT_GT(a.rhs_boundary, 0.0);
  EXPECT_FALSE(a.degenerate);
  EXPECT_NEAR(b.log_lhs_grad - a.log_lhs_grad, 2.0 * std::log(3.0), 1e-10);
  EXPECT_NEAR(b.log_lhs_zero - a.log_lhs_zero, 2.0 * std::log(3.0), 1e-10);
  EXPECT_NEAR(b.log_rhs_boundary - a.log_rhs_boundary, 2.0 * std::log(3.0), 1e-10);
  EXPECT_NEAR(b.ratio / a.ratio, 1.0, 1e-10);
  EXPECT_LT(a.log10_tail_bound, 0.0);
}

TEST(Functionals, Preconditions) {
  const Problem& p = shared();
  const TimeGrid g{2.0, 32};
  const CarlemanWeightSet ws = make_weight_set(p.domain, 0.5, 2.0, 2.0);
  const Trajectory fwd = solve_forward_cn(p.ops, p.basis.phi(0), g);
  EXPECT_THROW(carleman_functionals(fwd, p.ops, ws, {p.gamma_plus}), CarlemanError);
  const Trajectory bwd = solve_backward(p.ops, p.basis.phi(0), g);
  EXPECT_THROW(carleman_functionals(bwd, p.ops, ws, {{}}), CarlemanError);
  const CarlemanWeightSet other = make_weight_set(p.domain, 0.5, 1.0, 2.0);
  EXPECT_THROW(carleman_functionals(bwd, p.ops, other, {p.gamma_plus}), CarlemanError);
}

TEST(Knee, Rule) {
  EXPECT_EQ(empirical_knee({1.0, 5.0, 5.5, 5.8, 4.0}), 1);
  EXPECT_EQ(empirical_knee({5.0, 1.0, 1.1, 1.15, 0.9}), 0);
  EXPECT_EQ(empirical_knee({1.0, 0.9, 0.8}), 0);
  EXPECT_EQ(empirical_knee({1.0, 2.0, 4.0}), 2);
}

TEST(SSweep, FiniteAndStableUnderTimeRefinement) {
  const Problem& p = shared();
  const CarlemanWeightSet base = make_weight_set(p.domain, 0.5, 2.0, 1.0);
  const std::vector<double> sg{1, 2, 4, 8, 16};
  std::mt19937 rng(42);
  const Vector phiT = random_modal_state(p.basis, 10, rng);
  const SSweepReport a = s_sweep(solve_backward(p.ops, phiT, {2.0, 64}), p.ops, base, sg, {p.gamma_plus});
  const SSweepReport b = s_sweep(solve_backward(p.ops, phiT, {2.0, 128}), p.ops, base, sg, {p.gamma_plus});
  EXPECT_TRUE(a.pass);
  EXPECT_TRUE(a.all_finite);
  EXPECT_FALSE(a.all_degenerate);
  EXPECT_GE(a.knee_index, 0);
  EXPECT_GT(a.fitted_constant, 0.0);
  EXPECT_LE(max_relative_change(a, b), 0.2);
  EXPECT_THROW(s_sweep(solve_backward(p.ops, phiT, {2.0, 32}), p.ops, base, {1, 2, 4}, {p.gamma_plus}),
               CarlemanError);
}
