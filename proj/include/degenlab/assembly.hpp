#pragma once
// P1 assembly of the weighted stiffness K (weight |x|^alpha), the mass M and
// the Hardy matrix H (weight |x|^(alpha-2)), plus normal-derivative traces.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mesh.hpp"

namespace degenlab {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

class AssemblyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AssembledOperators {
  SparseMatrix K;
  SparseMatrix M;
  SparseMatrix H;
  double alpha = 0.5;
  std::vector<int> free_dofs;
  std::vector<int> dof_of_node;  // -1 on Dirichlet nodes
  const Mesh* mesh = nullptr;    // not owned

  std::size_t num_nodes() const { return dof_of_node.size(); }
  std::size_t num_free() const { return free_dofs.size(); }
};

/// Local element matrices of one triangle; exposed so submesh contributions
/// can be compared against the parent triangle by triangle.
struct ElementMatrices {
  std::array<std::array<double, 3>, 3> K{};
  std::array<std::array<double, 3>, 3> M{};
  std::array<std::array<double, 3>, 3> H{};
};

namespace detail {

// Degree-5 seven-point rule on the reference triangle (barycentric, weight
// normalized to 1).
struct QuadPoint {
  double l0, l1, l2, w;
};

inline const std::array<QuadPoint, 7>& seven_point_rule() {
  static const std::array<QuadPoint, 7> rule = [] {
    const double a1 = 0.059715871789770, b1 = 0.470142064105115;
    const double a2 = 0.797426985353087, b2 = 0.101286507323456;
    const double w0 = 0.225, w1 = 0.132394152788506, w2 = 0.125939180544827;
    return std::array<QuadPoint, 7>{{{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, w0},
                                     {a1, b1, b1, w1},
                                     {b1, a1, b1, w1},
                                     {b1, b1, a1, w1},
                                     {a2, b2, b2, w2},
                                     {b2, a2, b2, w2},
                                     {b2, b2, a2, w2}}};
  }();
  return rule;
}

inline double power_weight(Vec2 x, double exponent) {
  const double r = norm(x);
  if (r == 0.0) {
    if (exponent > 0.0) return 0.0;
    throw AssemblyError("quadrature point coincides with the origin");
  }
  return std::pow(r, exponent);
}

/// Integral of |x|^(alpha-2) phi_i phi_j over the triangle (a, b, c), phi the
/// barycentric basis of that triangle. `levels` uniform subdivisions.
inline void hardy_block(Vec2 a, Vec2 b, Vec2 c, double alpha, int levels,
                        std::array<std::array<double, 3>, 3>& out) {
  // Sub-triangles are described by barycentric corners in the parent.
  struct Sub {
    std::array<std::array<double, 3>, 3> corner;
  };
  std::vector<Sub> subs{{{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}}};
  for (int l = 0; l < levels; ++l) {
    std::vector<Sub> next;
    for (const Sub& s : subs) {
      std::array<std::array<double, 3>, 3> m{};
      for (int k = 0; k < 3; ++k)
        for (int d = 0; d < 3; ++d) m[k][d] = 0.5 * (s.corner[k][d] + s.corner[(k + 1) % 3][d]);
      next.push_back({{s.corner[0], m[0], m[2]}});
      next.push_back({{m[0], s.corner[1], m[1]}});
      next.push_back({{m[2], m[1], s.corner[2]}});
      next.push_back({{m[0], m[1], m[2]}});
    }
    subs = std::move(next);
  }
  const double area = 0.5 * std::abs(cross(b - a, c - a));
  const double sub_area = area / static_cast<double>(subs.size());
  for (const Sub& s : subs) {
    for (const QuadPoint& q : seven_point_rule()) {
      std::array<double, 3> lam{};
      for (int d = 0; d < 3; ++d) lam[d] = q.l0 * s.corner[0][d] + q.l1 * s.corner[1][d] + q.l2 * s.corner[2][d];
      const Vec2 x = lam[0] * a + lam[1] * b + lam[2] * c;
      const double wq = q.w * sub_area * power_weight(x, alpha - 2.0);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out[i][j] += wq * lam[i] * lam[j];
    }
  }
}

/// 16-point Gauss-Legendre nodes and weights on [0, 1].
inline const std::vector<std::pair<double, double>>& gauss_legendre_unit() {
  static const std::vector<std::pair<double, double>> rule = [] {
    constexpr int n = 16;
    std::vector<std::pair<double, double>> r;
    for (int i = 1; i <= n; ++i) {
      double x = std::cos(std::numbers::pi * (i - 0.25) / (n + 0.5)), dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      r.push_back({0.5 * (1.0 - x), 1.0 / ((1.0 - x * x) * dp * dp)});
    }
    return r;
  }();
  return rule;
}

/// hardy_block for triangles near the origin. The triangle is the signed sum
/// of the fan triangles (0, p, q) over its edges (p, q); on each, the Duffy map
/// x = u ((1 - v) p + v q) and tau = u^alpha turn u^(alpha-1) du into
/// dtau / alpha, leaving a smooth integrand for tensor Gauss-Legendre.
inline void hardy_block_fan(Vec2 a, Vec2 b, Vec2 c, double alpha, std::array<std::array<double, 3>, 3>& out) {
  const double twice_area = cross(b - a, c - a);
  const std::array<Vec2, 3> p{a, b, c};
  const auto& gl = gauss_legendre_unit();
  for (int e = 0; e < 3; ++e) {
    const Vec2 q0 = p[e], q1 = p[(e + 1) % 3];
    const double fan = cross(q0, q1) / twice_area;  // signed, relative to the parent orientation
    if (fan == 0.0) continue;
    for (const auto& [v, wv] : gl) {
      const Vec2 y = (1.0 - v) * q0 + v * q1;
      const double fv = wv * std::pow(norm(y), alpha - 2.0);
      for (const auto& [tau, wt] : gl) {
        const Vec2 x = std::pow(tau, 1.0 / alpha) * y;
        // Barycentric coordinates of x in the parent, extended affinely.
        const std::array<double, 3> lam{cross(b - x, c - x) / twice_area, cross(c - x, a - x) / twice_area,
                                        cross(a - x, b - x) / twice_area};
        const double wq = std::abs(twice_area) * fan / alpha * fv * wt;
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) out[i][j] += wq * lam[i] * lam[j];
      }
    }
  }
}

}  // namespace detail

/// Gradients of the three barycentric basis functions.
inline std::array<Vec2, 3> basis_gradients(Vec2 a, Vec2 b, Vec2 c) {
  const double twice_area = cross(b - a, c - a);
  return {Vec2{(b.y - c.y) / twice_area, (c.x - b.x) / twice_area},
          Vec2{(c.y - a.y) / twice_area, (a.x - c.x) / twice_area},
          Vec2{(a.y - b.y) / twice_area, (b.x - a.x) / twice_area}};
}

/// Gradient of the P1 interpolant of `field` on triangle t.
inline Vec2 triangle_gradient(const Mesh& m, std::size_t t, const Vector& field) {
  const auto& v = m.triangles[t];
  const auto g = basis_gradients(m.nodes[v[0]], m.nodes[v[1]], m.nodes[v[2]]);
  Vec2 out;
  for (int k = 0; k < 3; ++k) out = out + field[v[k]] * g[k];
  return out;
}

/// Triangles near the origin use the singular fan rule for H.
inline bool near_origin(Vec2 a, Vec2 b, Vec2 c) {
  const double diam = std::max({norm(b - a), norm(c - b), norm(a - c)});
  return std::min({norm(a), norm(b), norm(c)}) < 2.0 * diam;
}

inline ElementMatrices element_matrices(const Mesh& m, std::size_t t, double alpha) {
  const auto& v = m.triangles[t];
  const Vec2 a = m.nodes[v[0]], b = m.nodes[v[1]], c = m.nodes[v[2]];
  const double area = 0.5 * cross(b - a, c - a);
  ElementMatrices e;

  // Mid-edge rule for the weight: exact for quadratics.
  const double wint = area / 3.0 *
                      (detail::power_weight(0.5 * (a + b), alpha) + detail::power_weight(0.5 * (b + c), alpha) +
                       detail::power_weight(0.5 * (c + a), alpha));
  const auto g = basis_gradients(a, b, c);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      e.K[i][j] = wint * dot(g[i], g[j]);
      e.M[i][j] = area / 12.0 * (i == j ? 2.0 : 1.0);
    }
  if (near_origin(a, b, c))
    detail::hardy_block_fan(a, b, c, alpha, e.H);
  else
    detail::hardy_block(a, b, c, alpha, 0, e.H);
  return e;
}

inline AssembledOperators assemble(const Mesh& mesh, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw AssemblyError("alpha must lie in (0, 1)");
  const std::size_t n = mesh.num_nodes();
  std::vector<Eigen::Triplet<double>> tk, tm, th;
  tk.reserve(9 * mesh.num_triangles());
  tm.reserve(9 * mesh.num_triangles());
  th.reserve(9 * mesh.num_triangles());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const ElementMatrices e = element_matrices(mesh, t, alpha);
    const auto& v = mesh.triangles[t];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        tk.emplace_back(v[i], v[j], e.K[i][j]);
        tm.emplace_back(v[i], v[j], e.M[i][j]);
        th.emplace_back(v[i], v[j], e.H[i][j]);
      }
  }
  AssembledOperators ops;
  ops.alpha = alpha;
  ops.mesh = &mesh;
  ops.K.resize(n, n);
  ops.M.resize(n, n);
  ops.H.resize(n, n);
  ops.K.setFromTriplets(tk.begin(), tk.end());
  ops.M.setFromTriplets(tm.begin(), tm.end());
  ops.H.setFromTriplets(th.begin(), th.end());
  ops.dof_of_node.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (mesh.dirichlet_mask[i]) continue;
    ops.dof_of_node[i] = static_cast<int>(ops.free_dofs.size());
    ops.free_dofs.push_back(static_cast<int>(i));
  }
  return ops;
}

// ---------------------------------------------------------------------------
// Free-dof restriction helpers

inline Vector restrict_to_free(const AssembledOperators& ops, const Vector& nodal) {
  Vector out(ops.num_free());
  for (std::size_t k = 0; k < ops.free_dofs.size(); ++k) out[k] = nodal[ops.free_dofs[k]];
  return out;
}

inline Vector prolong_from_free(const AssembledOperators& ops, const Vector& free) {
  Vector out = Vector::Zero(ops.num_nodes());
  for (std::size_t k = 0; k < ops.free_dofs.size(); ++k) out[ops.free_dofs[k]] = free[k];
  return out;
}

inline SparseMatrix restrict_matrix(const AssembledOperators& ops, const SparseMatrix& A) {
  std::vector<Eigen::Triplet<double>> trip;
  for (int col = 0; col < A.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(A, col); it; ++it) {
      const int r = ops.dof_of_node[it.row()], c = ops.dof_of_node[it.col()];
      if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
    }
  SparseMatrix out(ops.num_free(), ops.num_free());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

inline double quadratic_form(const SparseMatrix& A, const Vector& u) { return u.dot(A * u); }

/// Zeroes the Dirichlet entries of a nodal vector.
inline Vector apply_dirichlet(const Mesh& mesh, Vector v) {
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i)
    if (mesh.dirichlet_mask[i]) v[i] = 0.0;
  return v;
}

/// Interpolates a callable at the nodes.
template <class F>
Vector interpolate(const Mesh& mesh, F&& f) {
  Vector v(mesh.num_nodes());
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) v[i] = f(mesh.nodes[i]);
  return v;
}

inline double max_asymmetry(const SparseMatrix& A) {
  const SparseMatrix d = SparseMatrix(A.transpose()) - A;
  double m = 0.0;
  for (int col = 0; col < d.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(d, col); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

inline double max_abs_entry(const SparseMatrix& A) {
  double m = 0.0;
  for (int col = 0; col < A.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(A, col); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

// ---------------------------------------------------------------------------
// Boundary normal derivatives

/// Normal derivatives on the selected boundary edges, one row per sample.
/// Values are stored sample-major: value(k, e) = dnu[k * edges + e].
struct FluxTrace {
  std::vector<int> edges;        // indices into Mesh::boundary_edges
  std::vector<double> lengths;   // edge lengths (quadrature weights)
  std::vector<Vec2> midpoints;
  std::vector<double> x_dot_nu;  // per edge, at the midpoint
  std::size_t samples = 0;
  std::vector<double> dnu;
  std::vector<double> w_dnu;  // |x|^alpha * dnu at the edge midpoint

  std::size_t num_edges() const { return edges.size(); }
  double value(std::size_t sample, std::size_t e) const { return dnu[sample * edges.size() + e]; }
};

inline std::vector<int> edges_with_tags(const Mesh& mesh, const std::vector<std::string>& tags) {
  const std::set<std::string> wanted(tags.begin(), tags.end());
  std::set<std::string> seen;
  std::vector<int> out;
  for (std::size_t e = 0; e < mesh.boundary_edges.size(); ++e)
    if (wanted.count(mesh.boundary_edges[e].tag)) {
      out.push_back(static_cast<int>(e));
      seen.insert(mesh.boundary_edges[e].tag);
    }
  for (const std::string& t : wanted)
    if (!seen.count(t)) throw AssemblyError("boundary segment tag '" + t + "' is absent from the mesh");
  return out;
}

inline FluxTrace flux_layout(const Mesh& mesh, const std::vector<std::string>& tags) {
  FluxTrace tr;
  tr.edges = edges_with_tags(mesh, tags);
  for (int e : tr.edges) {
    const BoundaryEdge& be = mesh.boundary_edges[e];
    const Vec2 a = mesh.nodes[be.nodes[0]], b = mesh.nodes[be.nodes[1]];
    const Vec2 mid = 0.5 * (a + b);
    tr.lengths.push_back(norm(b - a));
    tr.midpoints.push_back(mid);
    tr.x_dot_nu.push_back(dot(mid, be.normal));
  }
  return tr;
}

inline void append_flux_sample(const Mesh& mesh, double alpha, const Vector& field, FluxTrace& tr) {
  for (std::size_t k = 0; k < tr.edges.size(); ++k) {
    const BoundaryEdge& be = mesh.boundary_edges[tr.edges[k]];
    const double d = dot(triangle_gradient(mesh, be.triangle, field), be.normal);
    tr.dnu.push_back(d);
    tr.w_dnu.push_back(std::pow(norm(tr.midpoints[k]), alpha) * d);
  }
  ++tr.samples;
}

/// Normal derivative of a nodal field on the boundary edges carrying the
/// given tags, recovered from the gradient of the adjacent triangle.
inline FluxTrace boundary_flux(const Mesh& mesh, const Vector& field, const std::vector<std::string>& tags,
                               double alpha = 0.0) {
  if (static_cast<std::size_t>(field.size()) != mesh.num_nodes())
    throw AssemblyError("field size does not match the mesh");
  FluxTrace tr = flux_layout(mesh, tags);
  append_flux_sample(mesh, alpha, field, tr);
  return tr;
}

}  // namespace degenlab
