#pragma once
// Carleman weights eta = |x|^(2-alpha), Theta = 1/[t(T-t)]^p and
// xi = Theta (gamma - eta); finite-difference checks of their identities,
// the conjugated operator split, and the weighted space-time functionals.

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "evolution.hpp"
#include "geometry.hpp"

namespace degenlab {

class CarlemanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CarlemanWeightSet {
  double alpha = 0.5;
  double T = 1.0;
  double gamma = 1.0;  // max over the domain of eta, plus one
  double s = 1.0;
  double theta_exponent = 4.0;

  double eta(Vec2 x) const { return std::pow(norm(x), 2.0 - alpha); }
  Vec2 grad_eta(Vec2 x) const {
    const double r = norm(x);
    if (r == 0.0) return {0.0, 0.0};
    return ((2.0 - alpha) * std::pow(r, -alpha)) * x;
  }
  double theta(double t) const {
    check_time(t);
    return std::pow(t * (T - t), -theta_exponent);
  }
  double theta_dt(double t) const {
    check_time(t);
    const double q = t * (T - t);
    return -theta_exponent * (T - 2.0 * t) * std::pow(q, -theta_exponent - 1.0);
  }
  double theta_dtt(double t) const {
    check_time(t);
    const double p = theta_exponent, q = t * (T - t), dq = T - 2.0 * t;
    return p * (p + 1.0) * dq * dq * std::pow(q, -p - 2.0) + 2.0 * p * std::pow(q, -p - 1.0);
  }
  double log_theta(double t) const {
    check_time(t);
    return -theta_exponent * std::log(t * (T - t));
  }
  double xi(Vec2 x, double t) const { return theta(t) * (gamma - eta(x)); }

  void check_time(double t) const {
    if (!(t > 0.0 && t < T)) throw CarlemanError("Theta is infinite outside the open interval (0, T)");
  }
};

/// gamma = max_Omega |x|^(2-alpha) + 1; the maximum sits at a vertex.
inline CarlemanWeightSet make_weight_set(const DomainSpec& domain, double alpha, double T, double s,
                                         double theta_exponent = 4.0) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw CarlemanError("alpha must lie in (0, 1)");
  if (!(T > 0.0)) throw CarlemanError("T must be positive");
  if (!(s >= 0.0)) throw CarlemanError("s must be nonnegative");
  CarlemanWeightSet ws;
  ws.alpha = alpha;
  ws.T = T;
  ws.s = s;
  ws.theta_exponent = theta_exponent;
  double m = 0.0;
  for (const Vec2& v : domain.vertices) m = std::max(m, ws.eta(v));
  ws.gamma = m + 1.0;
  return ws;
}

struct WeightValues {
  double eta = 0.0;
  double theta = 0.0;
  double xi = 0.0;
  Vec2 grad_xi;
};

inline WeightValues eval_weights(const CarlemanWeightSet& ws, Vec2 x, double t) {
  WeightValues v;
  v.theta = ws.theta(t);
  v.eta = ws.eta(x);
  v.xi = v.theta * (ws.gamma - v.eta);
  v.grad_xi = -v.theta * ws.grad_eta(x);
  return v;
}

/// Smallest gamma - eta over the mesh nodes (at least 1 when gamma was
/// built from a domain containing the mesh).
inline double min_gamma_minus_eta(const CarlemanWeightSet& ws, const Mesh& mesh) {
  double m = std::numeric_limits<double>::infinity();
  for (const Vec2& p : mesh.nodes) m = std::min(m, ws.gamma - ws.eta(p));
  return m;
}

// ---------------------------------------------------------------------------
// Identity checks

struct IdentityCheck {
  std::string name;
  double max_deviation = 0.0;  // |fd - closed form| / max(1, |closed form|)
  bool pass = false;
};

struct IdentityReport {
  double alpha = 0.0;
  double fd_step = 0.0;
  double tolerance = 0.0;
  std::vector<IdentityCheck> checks;
  double div_w_grad_eta = 0.0;  // closed form (2 - alpha) N
  double theta_c1 = 0.0;        // sup_t |Theta'| / Theta^((p+1)/p)
  double theta_c2 = 0.0;        // sup_t |Theta''| / Theta^((p+2)/p)
  bool pass = false;
};

namespace detail {

inline double mixed_deviation(double fd, double exact) {
  return std::abs(fd - exact) / std::max(1.0, std::abs(exact));
}

// Central difference of a scalar field; the step scales with |x| so the
// truncation error stays relative near the degeneracy point.
inline Vec2 fd_gradient(const std::function<double(Vec2)>& f, Vec2 x, double h) {
  return {(f({x.x + h, x.y}) - f({x.x - h, x.y})) / (2.0 * h), (f({x.x, x.y + h}) - f({x.x, x.y - h})) / (2.0 * h)};
}

inline double fd_divergence(const std::function<Vec2(Vec2)>& F, Vec2 x, double h) {
  return (F({x.x + h, x.y}).x - F({x.x - h, x.y}).x) / (2.0 * h) +
         (F({x.x, x.y + h}).y - F({x.x, x.y - h}).y) / (2.0 * h);
}

inline double relative_step(Vec2 x, double fd_step) { return fd_step * std::min(1.0, norm(x)); }

}  // namespace detail

/// Checks the closed forms
///   grad eta = (2-alpha)|x|^-alpha x,   Hess eta = (2-alpha)|x|^-alpha (I - alpha x x^T/|x|^2),
///   w grad eta . grad eta = (2-alpha)^2 |x|^(2-alpha),   div(w grad eta) = (2-alpha) N,
///   grad div(w grad eta) = 0,   w grad eta . grad(w grad eta . grad eta) = (2-alpha)^4 |x|^(2-alpha),
///   w grad eta . nu = (2-alpha) x . nu on boundary edges,
/// against central differences of the analytic evaluators, and fits the
/// Theta derivative bounds over a time grid.
inline IdentityReport verify_weight_identities(double alpha, const std::vector<Vec2>& sample_points, double fd_step,
                                               const DomainSpec* boundary = nullptr, double T = 1.0,
                                               double tolerance = 1e-5, double theta_exponent = 4.0) {
  if (!(fd_step > 0.0)) throw CarlemanError("fd_step must be positive");
  CarlemanWeightSet ws;
  ws.alpha = alpha;
  ws.T = T;
  ws.theta_exponent = theta_exponent;
  const double a2 = 2.0 - alpha;
  const int N = 2;

  IdentityReport rep;
  rep.alpha = alpha;
  rep.fd_step = fd_step;
  rep.tolerance = tolerance;
  rep.div_w_grad_eta = a2 * N;

  const auto eta = [&](Vec2 x) { return ws.eta(x); };
  const auto w = [&](Vec2 x) { return std::pow(norm(x), alpha); };
  const auto w_grad_eta = [&](Vec2 x) { return w(x) * ws.grad_eta(x); };
  const auto g = [&](Vec2 x) { return w(x) * dot(ws.grad_eta(x), ws.grad_eta(x)); };

  IdentityCheck grad{"grad_eta"}, hess{"hessian_eta"}, wgg{"w_grad_eta_dot_grad_eta"}, div{"div_w_grad_eta"},
      graddiv{"grad_div_w_grad_eta"}, trans{"w_grad_eta_dot_grad_w_grad_eta_dot_grad_eta"};
  for (const Vec2& x : sample_points) {
    const double r = norm(x);
    if (r < 10.0 * fd_step) throw CarlemanError("sample point closer to the origin than 10 fd steps");
    const double h = detail::relative_step(x, fd_step);

    const Vec2 ge = ws.grad_eta(x);
    const Vec2 fd_ge = detail::fd_gradient(eta, x, h);
    grad.max_deviation = std::max({grad.max_deviation, detail::mixed_deviation(fd_ge.x, ge.x),
                                   detail::mixed_deviation(fd_ge.y, ge.y)});

    const double c = a2 * std::pow(r, -alpha);
    const double hxx = c * (1.0 - alpha * x.x * x.x / (r * r));
    const double hxy = c * (-alpha * x.x * x.y / (r * r));
    const double hyy = c * (1.0 - alpha * x.y * x.y / (r * r));
    const Vec2 dgx = detail::fd_gradient([&](Vec2 p) { return ws.grad_eta(p).x; }, x, h);
    const Vec2 dgy = detail::fd_gradient([&](Vec2 p) { return ws.grad_eta(p).y; }, x, h);
    hess.max_deviation = std::max({hess.max_deviation, detail::mixed_deviation(dgx.x, hxx),
                                   detail::mixed_deviation(dgx.y, hxy), detail::mixed_deviation(dgy.x, hxy),
                                   detail::mixed_deviation(dgy.y, hyy)});

    const double gx = a2 * a2 * std::pow(r, 2.0 - alpha);
    wgg.max_deviation = std::max(wgg.max_deviation, detail::mixed_deviation(w(x) * dot(fd_ge, fd_ge), gx));

    div.max_deviation =
        std::max(div.max_deviation, detail::mixed_deviation(detail::fd_divergence(w_grad_eta, x, h), a2 * N));

    const Vec2 gd =
        detail::fd_gradient([&](Vec2 p) { return detail::fd_divergence(w_grad_eta, p, h); }, x, h);
    graddiv.max_deviation = std::max({graddiv.max_deviation, std::abs(gd.x), std::abs(gd.y)});

    const double tr = dot(w_grad_eta(x), detail::fd_gradient(g, x, h));
    trans.max_deviation =
        std::max(trans.max_deviation, detail::mixed_deviation(tr, std::pow(a2, 4) * std::pow(r, 2.0 - alpha)));
  }
  rep.checks = {grad, hess, wgg, div, graddiv, trans};

  if (boundary) {
    IdentityCheck bnd{"boundary_w_grad_eta_dot_nu"};
    for (std::size_t i = 0; i < boundary->segments.size(); ++i) {
      const Vec2 nu = edge_normal(*boundary, i);
      for (double f : {0.25, 0.5, 0.75}) {
        const Segment& sg = boundary->segments[i];
        const Vec2 a = boundary->vertices[sg.start], b = boundary->vertices[sg.end];
        const Vec2 x = a + f * (b - a);
        if (norm(x) == 0.0) continue;
        bnd.max_deviation =
            std::max(bnd.max_deviation, detail::mixed_deviation(dot(w_grad_eta(x), nu), a2 * dot(x, nu)));
      }
    }
    rep.checks.push_back(bnd);
  }

  // Theta bounds on a time grid; the analytic derivative is cross-checked
  // against a central difference.
  IdentityCheck tder{"theta_derivative"};
  const int nt = 400;
  const double p = theta_exponent;
  for (int k = 1; k < nt; ++k) {
    const double t = T * k / nt;
    const double th = ws.theta(t);
    const double ht = fd_step * std::min(t, T - t);
    const double fd = (ws.theta(t + ht) - ws.theta(t - ht)) / (2.0 * ht);
    tder.max_deviation = std::max(tder.max_deviation, std::abs(fd - ws.theta_dt(t)) / (std::abs(ws.theta_dt(t)) + th / T));
    rep.theta_c1 = std::max(rep.theta_c1, std::abs(ws.theta_dt(t)) / std::pow(th, (p + 1.0) / p));
    rep.theta_c2 = std::max(rep.theta_c2, std::abs(ws.theta_dtt(t)) / std::pow(th, (p + 2.0) / p));
  }
  rep.checks.push_back(tder);

  rep.pass = std::isfinite(rep.theta_c1) && std::isfinite(rep.theta_c2);
  for (IdentityCheck& c : rep.checks) {
    c.pass = c.max_deviation <= tolerance;
    rep.pass = rep.pass && c.pass;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Conjugation

/// Closed-form field phi(x, t) with its nominal support inside the domain.
using SpaceTimeField = std::function<double(Vec2, double)>;

struct SpaceTimePoint {
  Vec2 x;
  double t = 0.0;
};

struct ConjugationReport {
  double s = 0.0;
  double max_relative_residual = 0.0;  // per point, relative to the largest term there
  double max_abs_residual = 0.0;  // after scaling by e^{s xi} at the point
  std::size_t points = 0;
};

/// With f := phi_t + div(w grad phi) (the backward operator) and
/// psi := e^{-s xi} phi, checks e^{-s xi} f = P1 psi + P2 psi where
///   P1 psi = psi_t + 2 s w grad psi . grad xi + s psi div(w grad xi),
///   P2 psi = div(w grad psi) + s psi xi_t + s^2 psi w grad xi . grad xi.
/// Derivatives of phi and psi are second-order central differences. Steps are
/// fd_step times a local scale: min(1, |x|, (s |grad xi|)^(-1/2)) in space,
/// which balances truncation against round-off in e^{-s xi}, and
/// min(1, t, T - t, 1 / |s xi_t|) in time. The weight derivatives are analytic.
inline ConjugationReport conjugation_residual(const CarlemanWeightSet& ws, const SpaceTimeField& phi,
                                              const std::vector<SpaceTimePoint>& points, double fd_step) {
  if (!(fd_step > 0.0)) throw CarlemanError("fd_step must be positive");
  const double a2 = 2.0 - ws.alpha, s = ws.s;
  const auto w = [&](Vec2 x) { return std::pow(norm(x), ws.alpha); };
  // psi scaled by e^{s xi} at the current sample point; the identity is linear
  // in psi, and the scaling keeps e^{-s xi} out of the underflow range.
  double xi_ref = 0.0;
  const auto psi = [&](Vec2 x, double t) { return std::exp(-s * (ws.xi(x, t) - xi_ref)) * phi(x, t); };

  // Compact flux-form stencil for div(w grad u): second order in h.
  const auto div_w_grad = [&](const SpaceTimeField& u, Vec2 x, double t, double h) {
    const Vec2 ex{h, 0.0}, ey{0.0, h};
    const double u0 = u(x, t);
    const double dxp = w(x + 0.5 * ex) * (u(x + ex, t) - u0), dxm = w(x - 0.5 * ex) * (u0 - u(x - ex, t));
    const double dyp = w(x + 0.5 * ey) * (u(x + ey, t) - u0), dym = w(x - 0.5 * ey) * (u0 - u(x - ey, t));
    return (dxp - dxm + dyp - dym) / (h * h);
  };
  const auto grad = [&](const SpaceTimeField& u, Vec2 x, double t, double h) {
    return Vec2{(u({x.x + h, x.y}, t) - u({x.x - h, x.y}, t)) / (2.0 * h),
                (u({x.x, x.y + h}, t) - u({x.x, x.y - h}, t)) / (2.0 * h)};
  };
  const auto dt = [&](const SpaceTimeField& u, Vec2 x, double t, double k) {
    return (u(x, t + k) - u(x, t - k)) / (2.0 * k);
  };

  ConjugationReport rep;
  rep.s = s;
  const SpaceTimeField psi_f = psi;
  for (const SpaceTimePoint& pt : points) {
    const Vec2 x = pt.x;
    const double t = pt.t;
    const double xi = ws.xi(x, t);
    const double xi_t = ws.theta_dt(t) * (ws.gamma - ws.eta(x));
    const double th = ws.theta(t);
    const Vec2 grad_xi = -th * ws.grad_eta(x);

    const double h = fd_step * std::min({1.0, norm(x), 1.0 / std::sqrt(s * norm(grad_xi))});
    const double k = fd_step * std::min({1.0, t, ws.T - t, 1.0 / std::abs(s * xi_t)});
    const double div_w_grad_xi = -th * a2 * 2.0;  // -Theta (2-alpha) N
    const double w_grad_xi_sq = th * th * a2 * a2 * std::pow(norm(x), 2.0 - ws.alpha);

    xi_ref = xi;
    const double lhs = dt(phi, x, t, k) + div_w_grad(phi, x, t, h);

    const double ps = psi(x, t);
    const double p11 = dt(psi_f, x, t, k);
    const double p12 = 2.0 * s * w(x) * dot(grad(psi_f, x, t, h), grad_xi);
    const double p13 = s * ps * div_w_grad_xi;
    const double p21 = div_w_grad(psi_f, x, t, h);
    const double p22 = s * ps * xi_t;
    const double p23 = s * s * ps * w_grad_xi_sq;
    const double res = lhs - (p11 + p12 + p13 + p21 + p22 + p23);
    const double scale = std::max({std::abs(lhs), std::abs(p11), std::abs(p12), std::abs(p13), std::abs(p21),
                                   std::abs(p22), std::abs(p23)});
    rep.max_abs_residual = std::max(rep.max_abs_residual, std::abs(res));
    if (scale > 0.0) rep.max_relative_residual = std::max(rep.max_relative_residual, std::abs(res) / scale);
    ++rep.points;
  }
  return rep;
}

/// Rejection-samples points inside the polygon at distance >= min_radius
/// from the origin.
inline std::vector<Vec2> sample_points_in_domain(const DomainSpec& d, int count, double min_radius,
                                                 std::uint32_t seed) {
  double xmin = d.vertices[0].x, xmax = xmin, ymin = d.vertices[0].y, ymax = ymin;
  for (const Vec2& v : d.vertices) {
    xmin = std::min(xmin, v.x);
    xmax = std::max(xmax, v.x);
    ymin = std::min(ymin, v.y);
    ymax = std::max(ymax, v.y);
  }
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> ux(xmin, xmax), uy(ymin, ymax);
  std::vector<Vec2> pts;
  for (long attempt = 0; static_cast<int>(pts.size()) < count; ++attempt) {
    if (attempt > 1000L * count) throw CarlemanError("could not place sample points inside the domain");
    const Vec2 p{ux(rng), uy(rng)};
    if (norm(p) >= min_radius && point_in_polygon(d.vertices, p) && distance_to_boundary(d.vertices, p) > 1e-3)
      pts.push_back(p);
  }
  return pts;
}

/// e^{-t} sin(pi (x - x0)/Lx) sin(pi (y - y0)/Ly) on the bounding box of the
/// domain; vanishes on the boundary of rectangular domains.
inline SpaceTimeField separable_bump(const DomainSpec& d) {
  double xmin = d.vertices[0].x, xmax = xmin, ymin = d.vertices[0].y, ymax = ymin;
  for (const Vec2& v : d.vertices) {
    xmin = std::min(xmin, v.x);
    xmax = std::max(xmax, v.x);
    ymin = std::min(ymin, v.y);
    ymax = std::max(ymax, v.y);
  }
  const double pi = std::numbers::pi;
  return [=](Vec2 x, double t) {
    return std::exp(-t) * std::sin(pi * (x.x - xmin) / (xmax - xmin)) * std::sin(pi * (x.y - ymin) / (ymax - ymin));
  };
}

/// Space-time samples with times uniform in [T/8, 7T/8].
inline std::vector<SpaceTimePoint> conjugation_samples(const DomainSpec& d, double T, int count, double min_radius,
                                                       std::uint32_t seed) {
  const std::vector<Vec2> xs = sample_points_in_domain(d, count, min_radius, seed);
  std::mt19937 rng(seed + 1);
  std::uniform_real_distribution<double> ut(T / 8.0, 7.0 * T / 8.0);
  std::vector<SpaceTimePoint> out;
  for (const Vec2& x : xs) out.push_back({x, ut(rng)});
  return out;
}

// ---------------------------------------------------------------------------
// Weighted functionals

/// Sum of positive terms given by their logarithms; stays finite when the
/// terms themselves underflow.
class LogSum {
 public:
  void add_log(double log_term) {
    if (log_term == -std::numeric_limits<double>::infinity()) return;
    if (log_term > max_) {
      acc_ = acc_ * std::exp(max_ - log_term) + 1.0;
      max_ = log_term;
    } else {
      acc_ += std::exp(log_term - max_);
    }
  }
  void add(double positive_factor, double log_weight) {
    if (positive_factor > 0.0) add_log(std::log(positive_factor) + log_weight);
  }
  void merge(const LogSum& o) {
    if (o.acc_ > 0.0) add_log(o.log());
  }
  double log() const {
    return acc_ > 0.0 ? max_ + std::log(acc_) : -std::numeric_limits<double>::infinity();
  }
  double value() const { return std::exp(log()); }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double acc_ = 0.0;
};

inline constexpr double kRatioFloor = 1e-30;

struct CarlemanFunctionals {
  double s = 0.0;
  // Natural logarithms of the four terms (-inf when a term vanishes).
  double log_lhs_grad = -std::numeric_limits<double>::infinity();
  double log_lhs_zero = -std::numeric_limits<double>::infinity();
  double log_rhs_boundary = -std::numeric_limits<double>::infinity();
  double lhs_grad = 0.0;  // exp of the logs; may underflow to 0
  double lhs_zero = 0.0;
  double rhs_boundary = 0.0;
  double rhs_source = 0.0;  // homogeneous backward equation
  double ratio = 0.0;       // (lhs_grad + lhs_zero) / max(rhs_boundary, 1e-30 (lhs_grad + lhs_zero))
  bool degenerate = false;  // boundary term below the floor
  double t_begin = 0.0, t_end = 0.0;
  double log10_tail_bound = 0.0;  // bound on the weight factor integrated over the excluded tails
};

struct CarlemanSetup {
  std::vector<std::string> observation_tags;  // Gamma+ edge tags
  double window_begin = 1.0 / 16.0;           // fractions of T
  double window_end = 15.0 / 16.0;
};

/// lhs_grad = s int int Theta w |grad phi|^2 e^{-2 s xi},
/// lhs_zero = s^3 int int Theta^3 phi^2 |x|^(2-alpha) e^{-2 s xi},
/// rhs_boundary = s int int_{Gamma+} Theta w (d_nu phi)^2 (x.nu) e^{-2 s xi}.
/// Space: mid-edge rule per triangle, two-point Gauss per boundary edge.
/// Time: trapezoid over the frames inside the window.
inline CarlemanFunctionals carleman_functionals(const Trajectory& traj, const AssembledOperators& ops,
                                                const CarlemanWeightSet& ws, const CarlemanSetup& setup) {
  if (traj.direction != Direction::backward) throw CarlemanError("functionals need a backward trajectory");
  if (setup.observation_tags.empty()) throw CarlemanError("observation boundary Gamma+ is empty");
  const Mesh& mesh = *ops.mesh;
  const TimeGrid& grid = traj.grid;
  if (std::abs(grid.T - ws.T) > 1e-12 * ws.T) throw CarlemanError("weight set and trajectory disagree on T");
  const double s = ws.s;
  const double log_s = std::log(s);

  // Spatial quadrature data, computed once.
  struct QP {
    double log_w, eta, log_r_pow, weight;
  };
  std::vector<std::array<QP, 3>> tri_qp(mesh.num_triangles());
  std::vector<std::array<int, 3>> tri_nodes(mesh.num_triangles());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double area = triangle_area(mesh, t);
    for (int q = 0; q < 3; ++q) {
      const Vec2 mid = 0.5 * (mesh.nodes[tri[q]] + mesh.nodes[tri[(q + 1) % 3]]);
      const double lr = std::log(norm(mid));
      tri_qp[t][q] = {ws.alpha * lr, ws.eta(mid), (2.0 - ws.alpha) * lr, area / 3.0};
      tri_nodes[t][q] = tri[q];
    }
  }
  const FluxTrace layout = flux_layout(mesh, setup.observation_tags);
  struct EP {
    double log_w[2], eta[2], weight;
  };
  std::vector<EP> edge_qp(layout.num_edges());
  const double g = 0.5 / std::sqrt(3.0);
  for (std::size_t e = 0; e < layout.num_edges(); ++e) {
    const BoundaryEdge& be = mesh.boundary_edges[layout.edges[e]];
    const Vec2 a = mesh.nodes[be.nodes[0]], b = mesh.nodes[be.nodes[1]];
    for (int q = 0; q < 2; ++q) {
      const Vec2 x = a + (0.5 + (q == 0 ? -g : g)) * (b - a);
      edge_qp[e].log_w[q] = ws.alpha * std::log(norm(x));
      edge_qp[e].eta[q] = ws.eta(x);
    }
    edge_qp[e].weight = 0.5 * layout.lengths[e] * std::max(layout.x_dot_nu[e], 0.0);
  }

  CarlemanFunctionals out;
  out.s = s;
  out.t_begin = setup.window_begin * grid.T;
  out.t_end = setup.window_end * grid.T;
  std::vector<int> frames;
  for (int k = 1; k < grid.steps; ++k) {
    const double t = grid.time(k);
    if (t >= out.t_begin - 1e-12 * grid.T && t <= out.t_end + 1e-12 * grid.T) frames.push_back(k);
  }
  if (frames.size() < 2) throw CarlemanError("time window holds fewer than two frames");

  LogSum grad_sum, zero_sum, bnd_sum;
  if (s > 0.0) {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const int k = frames[i];
      const double t = grid.time(k);
      double tw = grid.dt();
      if (i == 0 || i + 1 == frames.size()) tw *= 0.5;
      const double log_tw = std::log(tw);
      const double th = ws.theta(t);
      const double log_th = ws.log_theta(t);
      const Vector& phi = traj.frames[k];
      for (std::size_t tr = 0; tr < mesh.num_triangles(); ++tr) {
        const Vec2 gphi = triangle_gradient(mesh, tr, phi);
        const double g2 = dot(gphi, gphi);
        const auto& n = tri_nodes[tr];
        for (int q = 0; q < 3; ++q) {
          const QP& p = tri_qp[tr][q];
          const double log_e = -2.0 * s * th * (ws.gamma - p.eta);
          grad_sum.add(g2 * p.weight, log_s + log_th + p.log_w + log_e + log_tw);
          const double v = 0.5 * (phi[n[q]] + phi[n[(q + 1) % 3]]);
          zero_sum.add(v * v * p.weight, 3.0 * (log_s + log_th) + p.log_r_pow + log_e + log_tw);
        }
      }
      FluxTrace ft = layout;
      append_flux_sample(mesh, 0.0, phi, ft);
      for (std::size_t e = 0; e < layout.num_edges(); ++e) {
        const double d = ft.value(0, e);
        for (int q = 0; q < 2; ++q) {
          const double log_e = -2.0 * s * th * (ws.gamma - edge_qp[e].eta[q]);
          bnd_sum.add(d * d * edge_qp[e].weight, log_s + log_th + edge_qp[e].log_w[q] + log_e + log_tw);
        }
      }
    }
  }
  out.log_lhs_grad = grad_sum.log();
  out.log_lhs_zero = zero_sum.log();
  out.log_rhs_boundary = bnd_sum.log();
  out.lhs_grad = std::exp(out.log_lhs_grad);
  out.lhs_zero = std::exp(out.log_lhs_zero);
  out.rhs_boundary = std::exp(out.log_rhs_boundary);

  LogSum num;
  num.add_log(out.log_lhs_grad);
  num.add_log(out.log_lhs_zero);
  const double log_num = num.log();
  if (log_num == -std::numeric_limits<double>::infinity()) {
    out.ratio = 0.0;
    out.degenerate = out.log_rhs_boundary == -std::numeric_limits<double>::infinity();
  } else {
    const double log_floor = log_num + std::log(kRatioFloor);
    out.degenerate = out.log_rhs_boundary < log_floor;
    out.ratio = std::exp(log_num - std::max(out.log_rhs_boundary, log_floor));
  }

  // Tails: Theta^j e^{-2 s xi} <= Theta^j e^{-2 s Theta} since gamma - eta >= 1.
  double log_tail = -std::numeric_limits<double>::infinity();
  const int nt = 200;
  for (int side = 0; side < 2; ++side) {
    const double a = side == 0 ? 0.0 : out.t_end, b = side == 0 ? out.t_begin : grid.T;
    for (int i = 1; i <= nt; ++i) {
      const double t = a + (b - a) * (side == 0 ? i : i - 1) / nt;
      if (!(t > 0.0 && t < grid.T)) continue;
      const double lt = ws.log_theta(t), th = ws.theta(t);
      const double lw = std::max(log_s + lt, 3.0 * (log_s + lt)) - 2.0 * s * th + std::log(b - a);
      log_tail = std::max(log_tail, lw);
    }
  }
  out.log10_tail_bound = s > 0.0 ? log_tail / std::log(10.0) : 0.0;
  return out;
}

struct SSweepReport {
  std::vector<CarlemanFunctionals> rows;
  int knee_index = -1;
  double s0 = 0.0;           // s at the knee
  double fitted_constant = 0.0;  // max r(s) for s >= s0
  bool all_finite = false;
  bool all_degenerate = false;
  bool pass = false;
};

/// Knee: the smallest index k such that r(s_j) <= 1.2 r(s_k) for every j >= k.
inline int empirical_knee(const std::vector<double>& r, double slack = 0.2) {
  for (std::size_t k = 0; k < r.size(); ++k) {
    bool ok = true;
    for (std::size_t j = k; j < r.size() && ok; ++j) ok = r[j] <= (1.0 + slack) * r[k];
    if (ok) return static_cast<int>(k);
  }
  return static_cast<int>(r.size()) - 1;
}

inline SSweepReport s_sweep(const Trajectory& traj, const AssembledOperators& ops, const CarlemanWeightSet& base,
                            const std::vector<double>& s_grid, const CarlemanSetup& setup) {
  if (s_grid.size() < 5) throw CarlemanError("s grid needs at least five values");
  SSweepReport rep;
  std::vector<double> r;
  rep.all_finite = true;
  rep.all_degenerate = true;
  for (double s : s_grid) {
    if (!(s > 0.0)) throw CarlemanError("s values must be positive");
    CarlemanWeightSet ws = base;
    ws.s = s;
    rep.rows.push_back(carleman_functionals(traj, ops, ws, setup));
    r.push_back(rep.rows.back().ratio);
    rep.all_finite = rep.all_finite && std::isfinite(r.back());
    rep.all_degenerate = rep.all_degenerate && rep.rows.back().degenerate;
  }
  rep.knee_index = empirical_knee(r);
  rep.s0 = s_grid[rep.knee_index];
  for (std::size_t j = rep.knee_index; j < r.size(); ++j) rep.fitted_constant = std::max(rep.fitted_constant, r[j]);
  rep.pass = rep.all_finite && !rep.all_degenerate;
  return rep;
}

/// Largest |r_b(s) / r_a(s) - 1| over matching rows of two sweeps.
inline double max_relative_change(const SSweepReport& a, const SSweepReport& b) {
  if (a.rows.size() != b.rows.size()) throw CarlemanError("sweeps have different s grids");
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const double ra = a.rows[i].ratio, rb = b.rows[i].ratio;
    m = std::max(m, ra > 0.0 ? std::abs(rb / ra - 1.0) : (rb == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()));
  }
  return m;
}

}  // namespace degenlab
