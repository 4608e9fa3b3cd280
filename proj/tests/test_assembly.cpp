#include <gtest/gtest.h>

#include <Eigen/SparseCholesky>

#include <cmath>
#include <map>
#include <numbers>

#include "degenlab/assembly.hpp"

using namespace degenlab;

namespace {

constexpr double kPi = std::numbers::pi;

struct Fixture {
  DomainSpec domain;
  Mesh mesh;
  AssembledOperators ops;
};

Fixture make(double h, double alpha = 0.5, double g = 1.0) {
  Fixture f;
  f.domain = build_canonical_domain(DomainKind::flat_bottom_rect, {});
  MeshOptions o;
  o.h = h;
  o.grading_exponent = g;
  f.mesh = generate_mesh(f.domain, o);
  f.ops = assemble(f.mesh, alpha);
  return f;
}

// Composite Gauss-Legendre on [-1/2, 1/2] x [0, 1] with n x n cells.
template <class F>
double rect_integral(F f, int n) {
  static const double gx[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  static const double gw[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  const double hc = 1.0 / n;
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          const double x = -0.5 + (i + 0.5 + 0.5 * gx[a]) * hc;
          const double y = (j + 0.5 + 0.5 * gx[b]) * hc;
          s += gw[a] * gw[b] * 0.25 * hc * hc * f(x, y);
        }
  return s;
}

}  // namespace

TEST(Assembly, ConstantsAndArea) {
  const Fixture f = make(0.1);
  const Vector one = Vector::Ones(f.mesh.num_nodes());
  EXPECT_LT((f.ops.K * one).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_NEAR(one.dot(f.ops.M * one), 1.0, 1e-12);
}

TEST(Assembly, Symmetry) {
  const Fixture f = make(0.1, 0.3);
  for (const SparseMatrix* A : {&f.ops.K, &f.ops.M, &f.ops.H})
    EXPECT_LE(max_asymmetry(*A), 1e-12 * max_abs_entry(*A));
}

TEST(Assembly, DefinitenessOnFreeDofs) {
  const Fixture f = make(0.1);
  for (const SparseMatrix* A : {&f.ops.K, &f.ops.M, &f.ops.H}) {
    Eigen::SimplicialLLT<SparseMatrix> llt(restrict_matrix(f.ops, *A));
    EXPECT_EQ(llt.info(), Eigen::Success);
  }
}

TEST(Assembly, FarTriangleMatchesCentroidWeight) {
  const Fixture f = make(0.05, 0.5);
  int checked = 0;
  for (std::size_t t = 0; t < f.mesh.num_triangles() && checked < 20; ++t) {
    const auto& v = f.mesh.triangles[t];
    const Vec2 a = f.mesh.nodes[v[0]], b = f.mesh.nodes[v[1]], c = f.mesh.nodes[v[2]];
    const Vec2 xc = (1.0 / 3.0) * (a + b + c);
    if (norm(xc) < 0.5) continue;
    ++checked;
    const ElementMatrices e = element_matrices(f.mesh, t, 0.5);
    // Unweighted P1 stiffness via edge vectors: K_ij = (e_i . e_j) / (4 area).
    const Vec2 ed[3] = {c - b, a - c, b - a};
    const double area = 0.5 * cross(b - a, c - a);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double plain = dot(ed[i], ed[j]) / (4.0 * area);
        if (std::abs(plain) < 1e-8) continue;
        EXPECT_NEAR(e.K[i][j] / (std::pow(norm(xc), 0.5) * plain), 1.0, 0.01);
      }
  }
  EXPECT_EQ(checked, 20);
}

TEST(Assembly, WeightedFormConvergesToIntegral) {
  // u, v vanish on the boundary; exact integral by tensor Gauss quadrature.
  const auto u = [](Vec2 p) { return std::sin(kPi * (p.x + 0.5)) * std::sin(kPi * p.y); };
  const auto v = [](Vec2 p) { return std::sin(kPi * (p.x + 0.5)) * std::sin(2.0 * kPi * p.y) * (1.0 + p.x); };
  const double alpha = 0.5;
  const double exact = rect_integral(
      [&](double x, double y) {
        const double sx = std::sin(kPi * (x + 0.5)), cx = std::cos(kPi * (x + 0.5));
        const double sy = std::sin(kPi * y), cy = std::cos(kPi * y);
        const double s2y = std::sin(2 * kPi * y), c2y = std::cos(2 * kPi * y);
        const double ux = kPi * cx * sy, uy = kPi * sx * cy;
        const double vx = (kPi * cx * (1 + x) + sx) * s2y, vy = 2 * kPi * sx * (1 + x) * c2y;
        return std::pow(std::hypot(x, y), alpha) * (ux * vx + uy * vy);
      },
      400);
  double prev = 1e300;
  for (double h : {0.1, 0.05, 0.025}) {
    const Fixture f = make(h, alpha);
    const Vector U = interpolate(f.mesh, u), V = interpolate(f.mesh, v);
    const double err = std::abs(V.dot(f.ops.K * U) - exact);
    EXPECT_LT(err, 0.75 * prev);
    prev = err;
  }
  EXPECT_LT(prev, 0.02 * std::abs(exact));
}

TEST(Assembly, HardyMatrixOfConstantMatchesPolarIntegral) {
  // 1'H1 = int |x|^(alpha-2) = int_0^pi R(theta)^alpha / alpha dtheta, R the ray length.
  const double alpha = 0.5;
  const auto R = [](double th) {
    const double c = std::cos(th), s = std::sin(th);
    double r = 1e300;
    if (s > 0) r = std::min(r, 1.0 / s);
    if (std::abs(c) > 0) r = std::min(r, 0.5 / std::abs(c));
    return r;
  };
  const int n = 200000;
  double exact = 0.0;
  for (int i = 0; i < n; ++i) {
    const double th = kPi * (i + 0.5) / n;
    exact += std::pow(R(th), alpha) / alpha * kPi / n;
  }
  const Fixture f = make(0.05, alpha);
  const Vector one = Vector::Ones(f.mesh.num_nodes());
  EXPECT_NEAR(one.dot(f.ops.H * one) / exact, 1.0, 1e-6);
}

TEST(Assembly, RejectsAlphaOutOfRange) {
  const Fixture f = make(0.1);
  EXPECT_THROW(assemble(f.mesh, 1.2), AssemblyError);
  EXPECT_THROW(assemble(f.mesh, 0.0), AssemblyError);
}

TEST(Assembly, SubmeshElementsMatchParent) {
  const Fixture f = make(0.05, 0.5, 2.0);
  const Mesh sub = make_submesh(f.mesh, 0.04);
  const auto& pm = *sub.parent_map;
  std::map<std::array<int, 3>, std::size_t> parent_tri;
  for (std::size_t t = 0; t < f.mesh.num_triangles(); ++t) parent_tri[f.mesh.triangles[t]] = t;
  for (std::size_t t = 0; t < sub.num_triangles(); ++t) {
    const auto& v = sub.triangles[t];
    const auto it = parent_tri.find({pm[v[0]], pm[v[1]], pm[v[2]]});
    ASSERT_NE(it, parent_tri.end());
    const ElementMatrices a = element_matrices(sub, t, 0.5), b = element_matrices(f.mesh, it->second, 0.5);
    EXPECT_EQ(a.K, b.K);
    EXPECT_EQ(a.M, b.M);
  }
}

TEST(Flux, LinearFieldExactOnTop) {
  const Fixture f = make(0.1);
  const Vector y = interpolate(f.mesh, [](Vec2 p) { return p.y; });
  const FluxTrace tr = boundary_flux(f.mesh, y, {"top"});
  ASSERT_GT(tr.num_edges(), 0u);
  EXPECT_EQ(tr.dnu.size(), tr.num_edges());
  for (std::size_t e = 0; e < tr.num_edges(); ++e) EXPECT_NEAR(tr.value(0, e), 1.0, 1e-12);
}

TEST(Flux, ZeroField) {
  const Fixture f = make(0.1);
  const FluxTrace tr = boundary_flux(f.mesh, Vector::Zero(f.mesh.num_nodes()), {"top", "left"});
  for (double d : tr.dnu) EXPECT_EQ(d, 0.0);
}

TEST(Flux, QuadraticFieldConvergesOnRightEdge) {
  double prev = 1e300;
  for (double h : {0.1, 0.05, 0.025}) {
    const Fixture f = make(h);
    const Vector y = interpolate(f.mesh, [](Vec2 p) { return p.x * p.x; });
    const FluxTrace tr = boundary_flux(f.mesh, y, {"right"}, 0.5);
    double err = 0.0;
    for (std::size_t e = 0; e < tr.num_edges(); ++e) {
      err = std::max(err, std::abs(tr.value(0, e) - 1.0));
      EXPECT_NEAR(tr.w_dnu[e], std::pow(norm(tr.midpoints[e]), 0.5) * tr.dnu[e], 1e-15);
    }
    EXPECT_LT(err, 1.5 * h);
    EXPECT_LT(err, prev);
    prev = err;
  }
}

TEST(Flux, MissingTagThrows) {
  const Fixture f = make(0.1);
  EXPECT_THROW(boundary_flux(f.mesh, Vector::Zero(f.mesh.num_nodes()), {"nope"}), AssemblyError);
}
