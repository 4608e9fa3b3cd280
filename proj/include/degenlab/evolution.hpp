#pragma once
// Forward and backward solves of the weighted heat equation by modal
// (exponential) integration and by Crank-Nicolson stepping, the zero
// extension from truncated submeshes, and the truncation-radius sweep.

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "assembly.hpp"
#include "parallel.hpp"
#include "spectral.hpp"

namespace degenlab {

class EvolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TimeGrid {
  double T = 1.0;
  int steps = 64;

  double dt() const { return T / steps; }
  double time(int k) const { return k == steps ? T : T * static_cast<double>(k) / steps; }
  std::vector<double> times() const {
    std::vector<double> t(steps + 1);
    for (int k = 0; k <= steps; ++k) t[k] = time(k);
    return t;
  }
  void validate() const {
    if (!(T > 0.0)) throw EvolutionError("time horizon T must be positive");
    if (steps < 1) throw EvolutionError("time grid needs at least one step");
  }
};

enum class Direction { forward, backward };
enum class Scheme { spectral, crank_nicolson };

struct Trajectory {
  TimeGrid grid;
  std::vector<Vector> frames;  // frames[k] is the state at grid.time(k)
  Direction direction = Direction::forward;
  Scheme scheme = Scheme::crank_nicolson;
  const Mesh* mesh = nullptr;  // not owned
  int flushed_coefficients = 0;  // modal coefficients below 1e-300 set to zero
};

/// Nodal source samples at the grid times; empty means f = 0.
using NodalSource = std::vector<Vector>;
/// Modal source f_n(t); empty means f = 0.
using ModalSource = std::function<double(int, double)>;

inline constexpr double kUnderflowFlush = 1e-300;

// ---------------------------------------------------------------------------
// Modal integration

namespace detail {

// (1 - e^{-z}) / z
inline double phi1(double z) { return z < 1e-12 ? 1.0 - 0.5 * z : -std::expm1(-z) / z; }

// integral_0^1 s e^{-z s} ds
inline double phi_lin(double z) {
  if (z < 1e-3) return 0.5 - z / 3.0 + z * z / 8.0 - z * z * z / 30.0;
  return (1.0 - (1.0 + z) * std::exp(-z)) / (z * z);
}

inline Vector modal_frame(const SpectralBasis& basis, const std::vector<double>& coeff) {
  return reconstruct(basis, coeff);
}

}  // namespace detail

/// y_n(t) = y_n(0) e^{-lambda_n t} + int_0^t e^{lambda_n (s - t)} f_n(s) ds,
/// with f_n taken piecewise linear between grid times (integrated exactly).
inline Trajectory solve_forward_spectral(const SpectralBasis& basis, const Vector& y0, const TimeGrid& grid,
                                         const ModalSource& f = {}, double truncation_threshold = 1e-6) {
  grid.validate();
  const Expansion ex = expand(basis, y0);
  if (ex.residual_m_norm > truncation_threshold * std::max(ex.field_m_norm, 1e-300) && ex.field_m_norm > 0.0)
    throw EvolutionError("basis too small to represent y0: relative truncation residual " +
                         std::to_string(ex.residual_m_norm / ex.field_m_norm));
  Trajectory tr;
  tr.grid = grid;
  tr.scheme = Scheme::spectral;
  tr.direction = Direction::forward;
  tr.mesh = basis.operators->mesh;
  const int m = basis.m();
  std::vector<double> c = ex.coefficients;
  tr.frames.push_back(detail::modal_frame(basis, c));
  const double dt = grid.dt();
  for (int k = 0; k < grid.steps; ++k) {
    const double t0 = grid.time(k), t1 = grid.time(k + 1);
    for (int n = 0; n < m; ++n) {
      const double lam = basis.lambdas[n];
      if (f) {
        const double z = lam * dt;
        const double f0 = f(n, t0), f1 = f(n, t1);
        c[n] = std::exp(-z) * c[n] + dt * (f0 * detail::phi1(z) + (f1 - f0) * (detail::phi1(z) - detail::phi_lin(z)));
      } else {
        // Closed form from the initial coefficient avoids drift over steps.
        c[n] = ex.coefficients[n] * std::exp(-lam * t1);
      }
      if (c[n] != 0.0 && std::abs(c[n]) < kUnderflowFlush) {
        c[n] = 0.0;
        ++tr.flushed_coefficients;
      }
    }
    tr.frames.push_back(detail::modal_frame(basis, c));
  }
  return tr;
}

/// phi(t) = sum_n (phi^T, Phi_n) e^{-lambda_n (T - t)} Phi_n.
inline Trajectory solve_backward_spectral(const SpectralBasis& basis, const Vector& phiT, const TimeGrid& grid,
                                          double truncation_threshold = 1e-6) {
  Trajectory fwd = solve_forward_spectral(basis, phiT, grid, {}, truncation_threshold);
  std::reverse(fwd.frames.begin(), fwd.frames.end());
  fwd.direction = Direction::backward;
  return fwd;
}

// ---------------------------------------------------------------------------
// Crank-Nicolson

/// Factorized trapezoidal step on the free dofs:
/// (M + dt/2 K) y^{k+1} = (M - dt/2 K) y^k + dt M f^{k+1/2}.
class CrankNicolsonStepper {
 public:
  CrankNicolsonStepper(const AssembledOperators& ops, double dt) : ops_(&ops), dt_(dt) {
    M_ = restrict_matrix(ops, ops.M);
    const SparseMatrix K = restrict_matrix(ops, ops.K);
    const SparseMatrix lhs = M_ + 0.5 * dt * K;
    explicit_ = M_ - 0.5 * dt * K;
    solver_.compute(lhs);
    if (solver_.info() != Eigen::Success) throw EvolutionError("Crank-Nicolson factorization failed");
  }

  Vector step(const Vector& y_free, const Vector* f_half_free = nullptr) const {
    Vector rhs = explicit_ * y_free;
    if (f_half_free) rhs += dt_ * (M_ * *f_half_free);
    Vector out = solver_.solve(rhs);
    if (solver_.info() != Eigen::Success) throw EvolutionError("Crank-Nicolson solve failed");
    return out;
  }

 private:
  const AssembledOperators* ops_;
  double dt_;
  SparseMatrix M_;
  SparseMatrix explicit_;
  Eigen::SimplicialLDLT<SparseMatrix> solver_;
};

inline Trajectory solve_forward_cn(const AssembledOperators& ops, const Vector& y0, const TimeGrid& grid,
                                   const NodalSource& f = {}) {
  grid.validate();
  if (static_cast<std::size_t>(y0.size()) != ops.num_nodes()) throw EvolutionError("y0 size does not match mesh");
  if (!f.empty() && f.size() != static_cast<std::size_t>(grid.steps + 1))
    throw EvolutionError("nodal source needs one sample per grid time");
  const CrankNicolsonStepper stepper(ops, grid.dt());
  Trajectory tr;
  tr.grid = grid;
  tr.scheme = Scheme::crank_nicolson;
  tr.direction = Direction::forward;
  tr.mesh = ops.mesh;
  Vector y = restrict_to_free(ops, y0);
  tr.frames.push_back(prolong_from_free(ops, y));
  for (int k = 0; k < grid.steps; ++k) {
    if (f.empty()) {
      y = stepper.step(y);
    } else {
      const Vector fh = restrict_to_free(ops, 0.5 * (f[k] + f[k + 1]));
      y = stepper.step(y, &fh);
    }
    tr.frames.push_back(prolong_from_free(ops, y));
  }
  return tr;
}

/// Backward equation d_t phi - A phi = 0, phi(T) = phiT, stepped in
/// tau = T - t; frames are stored in the original time orientation.
inline Trajectory solve_backward(const AssembledOperators& ops, const Vector& phiT, const TimeGrid& grid) {
  Trajectory tr = solve_forward_cn(ops, phiT, grid);
  std::reverse(tr.frames.begin(), tr.frames.end());
  tr.direction = Direction::backward;
  return tr;
}

// ---------------------------------------------------------------------------
// Norms

inline double m_norm(const AssembledOperators& ops, const Vector& v) {
  return std::sqrt(std::max(0.0, quadratic_form(ops.M, v)));
}

/// Trapezoidal rule in time over per-frame values.
inline double time_trapezoid(const TimeGrid& grid, const std::vector<double>& values) {
  double s = 0.0;
  for (int k = 0; k < grid.steps; ++k) s += 0.5 * (values[k] + values[k + 1]);
  return s * grid.dt();
}

/// L2(Q) norm: M-quadrature in space, trapezoid in time.
inline double l2q_norm(const AssembledOperators& ops, const Trajectory& tr) {
  std::vector<double> v;
  for (const Vector& f : tr.frames) v.push_back(quadratic_form(ops.M, f));
  return std::sqrt(time_trapezoid(tr.grid, v));
}

inline double l2q_distance(const AssembledOperators& ops, const Trajectory& a, const Trajectory& b) {
  if (a.frames.size() != b.frames.size()) throw EvolutionError("trajectories live on different time grids");
  std::vector<double> v;
  for (std::size_t k = 0; k < a.frames.size(); ++k) v.push_back(quadratic_form(ops.M, a.frames[k] - b.frames[k]));
  return std::sqrt(time_trapezoid(a.grid, v));
}

/// sup_k |y^k|_M + |y|_{L2(0,T;K)}.
inline double energy_norm(const AssembledOperators& ops, const Trajectory& tr) {
  double sup = 0.0;
  std::vector<double> kq;
  for (const Vector& f : tr.frames) {
    sup = std::max(sup, m_norm(ops, f));
    kq.push_back(quadratic_form(ops.K, f));
  }
  return sup + std::sqrt(time_trapezoid(tr.grid, kq));
}

/// Ratio (sup_k |y^k|_M + |y|_{L2(0,T;K)}) / (|f|_{L2(Q)} + |y0|_M) for a
/// forward trajectory and its nodal source (empty: f = 0).
inline double energy_constant(const AssembledOperators& ops, const Trajectory& tr, const NodalSource& f = {}) {
  double fn = 0.0;
  if (!f.empty()) {
    std::vector<double> v;
    for (const Vector& fk : f) v.push_back(quadratic_form(ops.M, fk));
    fn = std::sqrt(time_trapezoid(tr.grid, v));
  }
  const double data = fn + m_norm(ops, tr.frames.front());
  if (!(data > 0.0)) throw EvolutionError("energy constant needs nonzero data");
  return energy_norm(ops, tr) / data;
}

/// Normal derivatives of every frame on the tagged boundary edges.
inline FluxTrace trajectory_flux(const Mesh& mesh, const Trajectory& tr, const std::vector<std::string>& tags,
                                 double alpha = 0.0) {
  FluxTrace ft = flux_layout(mesh, tags);
  for (const Vector& f : tr.frames) append_flux_sample(mesh, alpha, f, ft);
  return ft;
}

/// L2 norm over (tagged boundary) x (0, T) of the difference of two traces.
inline double boundary_l2q_distance(const TimeGrid& grid, const FluxTrace& a, const FluxTrace* b = nullptr) {
  std::vector<double> per_frame(a.samples, 0.0);
  for (std::size_t k = 0; k < a.samples; ++k)
    for (std::size_t e = 0; e < a.num_edges(); ++e) {
      const double d = a.value(k, e) - (b ? b->value(k, e) : 0.0);
      per_frame[k] += a.lengths[e] * d * d;
    }
  return std::sqrt(time_trapezoid(grid, per_frame));
}

struct DualityResult {
  double forward_pairing = 0.0;   // (y(T), phiT)_M
  double backward_pairing = 0.0;  // (y0, phi(0))_M
  double defect = 0.0;            // |difference|
  double scale = 0.0;             // |y0|_M |phiT|_M
};

/// Forward Crank-Nicolson from y0 against backward Crank-Nicolson from phiT.
/// The scheme satisfies M (A^-1 B) = (B A^-1) M with A = M + dt/2 K and
/// B = M - dt/2 K, so the two pairings agree up to round-off.
inline DualityResult duality_check(const AssembledOperators& ops, const Vector& y0, const Vector& phiT,
                                   const TimeGrid& grid) {
  const Trajectory y = solve_forward_cn(ops, y0, grid);
  const Trajectory phi = solve_backward(ops, phiT, grid);
  DualityResult r;
  r.forward_pairing = y.frames.back().dot(ops.M * phiT);
  r.backward_pairing = y0.dot(ops.M * phi.frames.front());
  r.defect = std::abs(r.forward_pairing - r.backward_pairing);
  r.scale = m_norm(ops, y0) * m_norm(ops, phiT);
  return r;
}

/// Random nodal vector with standard normal free values and zero Dirichlet values.
inline Vector random_free_vector(const AssembledOperators& ops, std::mt19937& rng) {
  std::normal_distribution<double> nd;
  Vector f(ops.num_free());
  for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = nd(rng);
  return prolong_from_free(ops, f);
}

// ---------------------------------------------------------------------------
// Zero extension

/// Injects a submesh trajectory into the parent mesh, zero elsewhere.
inline Trajectory extend_by_zero(const Trajectory& sub_traj, const Mesh& sub, const Mesh& parent) {
  if (!sub.parent_map) throw EvolutionError("submesh carries no parent_map");
  const auto& pmap = *sub.parent_map;
  Trajectory out;
  out.grid = sub_traj.grid;
  out.direction = sub_traj.direction;
  out.scheme = sub_traj.scheme;
  out.mesh = &parent;
  for (const Vector& f : sub_traj.frames) {
    Vector e = Vector::Zero(parent.num_nodes());
    for (std::size_t i = 0; i < pmap.size(); ++i) e[pmap[i]] = f[i];
    out.frames.push_back(std::move(e));
  }
  return out;
}

/// Forward differences of consecutive frames divided by dt.
inline std::vector<Vector> time_differences(const Trajectory& tr) {
  std::vector<Vector> d;
  for (int k = 0; k < tr.grid.steps; ++k) d.push_back((tr.frames[k + 1] - tr.frames[k]) / tr.grid.dt());
  return d;
}

// ---------------------------------------------------------------------------
// Truncation sweep

/// True when the sequence decreases, allowing at most `allowed_inversions`
/// increases each no larger than `slack` relative.
inline bool decreasing_with_slack(const std::vector<double>& v, int allowed_inversions = 1, double slack = 0.05) {
  int inversions = 0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    if (v[i + 1] < v[i]) continue;
    ++inversions;
    if (v[i + 1] > v[i] * (1.0 + slack)) return false;
  }
  return inversions <= allowed_inversions;
}

struct SweepRow {
  double delta = 0.0;
  double snapped_delta = 0.0;
  double l2q_error = 0.0;
  double flux_error_gamma_plus = 0.0;
  double runtime_ms = 0.0;
  std::size_t submesh_nodes = 0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  double reference_l2q_norm = 0.0;
  std::size_t mesh_nodes = 0;
  bool l2q_monotone = false;
  bool flux_monotone = false;
  bool pass = false;
  std::vector<std::string> observation_tags;
};

struct SweepOptions {
  std::vector<double> deltas;
  double alpha = 0.5;
  TimeGrid grid;
  MeshOptions mesh;
  std::vector<std::string> observation_tags;  // empty: Gamma+ of the domain
  unsigned threads = 1;
  bool record_runtime = false;  // runtime_ms stays 0 for reproducible output
};

/// Largest truncation radius accepted by the sweep: keeps Omega - Omega_delta
/// inside B(0, R0 / 2).
inline double sweep_delta_limit(const DomainSpec& d) { return 0.25 * d.R0; }

/// Solves on each truncated submesh, extends by zero and measures the L2(Q)
/// and Gamma+ flux distance to the reference solve on the full mesh.
inline SweepReport delta_sweep(const DomainSpec& domain, const Mesh& mesh, const AssembledOperators& ops,
                               const Vector& y0, const SweepOptions& opt) {
  if (opt.deltas.empty()) throw EvolutionError("delta list is empty");
  for (std::size_t i = 0; i < opt.deltas.size(); ++i) {
    if (!(opt.deltas[i] > 0.0)) throw EvolutionError("deltas must be positive");
    if (opt.deltas[i] >= sweep_delta_limit(domain))
      throw EvolutionError("delta " + std::to_string(opt.deltas[i]) + " exceeds the admissible bound R0/4 = " +
                           std::to_string(sweep_delta_limit(domain)));
    if (i > 0 && !(opt.deltas[i] < opt.deltas[i - 1])) throw EvolutionError("deltas must be decreasing");
  }
  double max_cut = 0.0;
  for (double d : opt.deltas) max_cut = std::max({max_cut, d, snap_delta(mesh, d)});
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
    if (y0[i] == 0.0) continue;
    if (mesh.dirichlet_mask[i]) throw EvolutionError("y0 is not compactly supported: nonzero on the boundary");
    if (norm(mesh.nodes[i]) <= max_cut)
      throw EvolutionError("y0 support reaches within the largest truncation radius of the origin");
  }

  SweepReport rep;
  rep.mesh_nodes = mesh.num_nodes();
  rep.observation_tags = opt.observation_tags;
  if (rep.observation_tags.empty()) rep.observation_tags = gamma_plus_tags(domain, classify_boundary(domain));
  if (rep.observation_tags.empty()) throw EvolutionError("observation boundary is empty");

  const Trajectory ref = solve_forward_cn(ops, y0, opt.grid);
  const FluxTrace ref_flux = trajectory_flux(mesh, ref, rep.observation_tags);
  rep.reference_l2q_norm = l2q_norm(ops, ref);

  rep.rows = parallel_map(opt.deltas.size(), opt.threads, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    SweepRow row;
    row.delta = opt.deltas[i];
    const Mesh sub = make_submesh(mesh, row.delta);
    row.snapped_delta = sub.snapped_delta;
    row.submesh_nodes = sub.num_nodes();
    const AssembledOperators sub_ops = assemble(sub, opt.alpha);
    Vector y0_sub(sub.num_nodes());
    for (std::size_t k = 0; k < sub.num_nodes(); ++k) y0_sub[k] = y0[(*sub.parent_map)[k]];
    y0_sub = apply_dirichlet(sub, std::move(y0_sub));
    const Trajectory yd = solve_forward_cn(sub_ops, y0_sub, opt.grid);
    const Trajectory ext = extend_by_zero(yd, sub, mesh);
    row.l2q_error = l2q_distance(ops, ext, ref);
    const FluxTrace ext_flux = trajectory_flux(mesh, ext, rep.observation_tags);
    row.flux_error_gamma_plus = boundary_l2q_distance(opt.grid, ext_flux, &ref_flux);
    if (opt.record_runtime)
      row.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return row;
  });

  std::vector<double> e, fe;
  for (const SweepRow& r : rep.rows) {
    e.push_back(r.l2q_error);
    fe.push_back(r.flux_error_gamma_plus);
  }
  rep.l2q_monotone = decreasing_with_slack(e);
  rep.flux_monotone = decreasing_with_slack(fe);
  rep.pass = rep.l2q_monotone && rep.flux_monotone;
  return rep;
}

}  // namespace degenlab
