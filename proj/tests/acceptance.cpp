// Acceptance suite: runs each criterion at its stated tolerance and prints one
// PASS/FAIL line per criterion. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "degenlab/degenlab.hpp"

using namespace degenlab;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

DomainSpec rectangle() { return build_canonical_domain(DomainKind::flat_bottom_rect, {}); }

struct Discrete {
  Mesh mesh;
  std::unique_ptr<AssembledOperators> ops;
};

Discrete discretize(const DomainSpec& d, double h, double alpha, double g = 1.0) {
  MeshOptions o;
  o.h = h;
  o.grading_exponent = g;
  Discrete out;
  out.mesh = generate_mesh(d, o);
  out.ops = std::make_unique<AssembledOperators>(assemble(out.mesh, alpha));
  return out;
}

const double kAlphas[] = {0.25, 0.5, 0.75};

Outcome spectral_bound() {
  const DomainSpec d = rectangle();
  Outcome o{true, ""};
  std::ostringstream s;
  for (double a : kAlphas) {
    const auto t0 = Clock::now();
    const Discrete dd = discretize(d, 0.05, a);
    const SpectralBasis b = solve_eigenpairs(*dd.ops, 1);
    const double secs = seconds_since(t0), bound = lambda1_lower_bound(a, d.M_radius);
    const bool ok = b.lambdas[0] >= bound && secs < 10.0;
    o.pass = o.pass && ok;
    s << "alpha=" << a << " lambda1=" << b.lambdas[0] << " bound=" << bound << " t=" << secs << "s; ";
  }
  o.detail = s.str();
  return o;
}

Outcome hardy() {
  const DomainSpec d = rectangle();
  Outcome o{true, ""};
  std::ostringstream s;
  for (double a : kAlphas) {
    const Discrete dd = discretize(d, 0.05, a);
    const SpectralBasis b = solve_eigenpairs(*dd.ops, 10);
    const auto fields = hardy_test_fields(b, 10, 10, 2024);
    const RatioReport r = verify_hardy(*dd.ops, fields);
    const double bound = hardy_constant(a) * 1.02;
    o.pass = o.pass && r.max_ratio <= bound;
    s << "alpha=" << a << " max=" << r.max_ratio << " bound=" << bound << "; ";
  }
  o.detail = s.str();
  return o;
}

Outcome identities() {
  const DomainSpec d = rectangle();
  Outcome o{true, ""};
  std::ostringstream s;
  for (double a : kAlphas) {
    const auto pts = sample_points_in_domain(d, 100, 0.05, 17);
    const IdentityReport r = verify_weight_identities(a, pts, 1e-4, &d, 1.0, 1e-5);
    double worst = 0.0;
    for (const IdentityCheck& c : r.checks) worst = std::max(worst, c.max_deviation);
    const bool exact = r.div_w_grad_eta == (2.0 - a) * 2.0;
    o.pass = o.pass && r.pass && worst <= 1e-5 && exact;
    s << "alpha=" << a << " max_dev=" << worst << " div=" << r.div_w_grad_eta << "; ";
  }
  o.detail = s.str();
  return o;
}

Outcome conjugation() {
  const DomainSpec d = rectangle();
  Outcome o{true, ""};
  std::ostringstream s;
  for (double T : {1.0, 2.0}) {
    const auto pts = conjugation_samples(d, T, 100, 0.05, 23);
    for (double sv : {0.0, 1.0, 2.0}) {
      const ConjugationReport r = conjugation_residual(make_weight_set(d, 0.5, T, sv), separable_bump(d), pts, 1e-4);
      o.pass = o.pass && r.max_relative_residual <= 1e-4;
      s << "T=" << T << " s=" << sv << " residual=" << r.max_relative_residual << "; ";
    }
  }
  o.detail = s.str();
  return o;
}

Outcome richardson() {
  const Discrete dd = discretize(rectangle(), 0.05, 0.5);
  const SpectralBasis b = solve_eigenpairs(*dd.ops, 1);
  double e[2];
  int i = 0;
  for (int steps : {64, 128}) {
    const TimeGrid g{1.0, steps};
    e[i++] = m_norm(*dd.ops, solve_forward_cn(*dd.ops, b.phi(0), g).frames.back() -
                                 solve_forward_spectral(b, b.phi(0), g).frames.back());
  }
  const double ratio = e[0] / e[1];
  std::ostringstream s;
  s << "e(64)=" << e[0] << " e(128)=" << e[1] << " ratio=" << ratio;
  return {ratio >= 3.5 && ratio <= 4.5, s.str()};
}

Outcome duality() {
  const Discrete dd = discretize(rectangle(), 0.05, 0.5);
  std::mt19937 rng(5);
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    const Vector y0 = random_free_vector(*dd.ops, rng), phiT = random_free_vector(*dd.ops, rng);
    const DualityResult r = duality_check(*dd.ops, y0, phiT, {1.0, 64});
    worst = std::max(worst, r.defect / r.scale);
  }
  std::ostringstream s;
  s << "max defect/(|y0||phiT|)=" << worst;
  return {worst <= 1e-10, s.str()};
}

Outcome sweep() {
  const DomainSpec d = rectangle();
  const auto t0 = Clock::now();
  const Discrete dd = discretize(d, 0.03, 0.5, 2.0);
  SweepOptions so;
  so.deltas = {0.08, 0.04, 0.02, 0.01};
  so.grid = {1.0, 64};
  so.observation_tags = gamma_plus_tags(d, classify_boundary(d));
  const SweepReport r = delta_sweep(d, dd.mesh, *dd.ops, bump_field(dd.mesh, {0.0, 0.5}, 0.3), so);
  const double secs = seconds_since(t0);
  std::ostringstream s;
  s << "l2q=[";
  for (const SweepRow& row : r.rows) s << row.l2q_error << " ";
  s << "] flux=[";
  for (const SweepRow& row : r.rows) s << row.flux_error_gamma_plus << " ";
  s << "] t=" << secs << "s";
  return {r.l2q_monotone && r.flux_monotone && secs < 120.0, s.str()};
}

ObservabilityProblem obs_problem(double alpha, double T, double h) {
  ObservabilityProblem p;
  p.domain = rectangle();
  p.alpha = alpha;
  p.grid = {T, 64};
  p.mesh.h = h;
  p.threads = default_threads();
  return p;
}

Outcome backward_inequalities() {
  const ObservabilityReport r = estimate_constant(obs_problem(0.5, 1.0, 0.05), {10, 20, 42});
  int failures = 0;
  for (const ObservabilityRow& row : r.rows) failures += !row.monotone + !row.time_average_pass;
  std::ostringstream s;
  s << r.rows.size() << " samples, " << failures << " failures";
  return {failures == 0 && r.rows.size() == 20, s.str()};
}

Outcome observability() {
  Outcome o{true, ""};
  std::ostringstream s;
  for (double a : kAlphas)
    for (double T : {1.0, 2.0}) {
      const double c = estimate_constant(obs_problem(a, T, 0.05), {10, 20, 42}).c_obs_empirical;
      const double cf = estimate_constant(obs_problem(a, T, 0.025), {10, 20, 42}).c_obs_empirical;
      const double change = std::abs(cf / c - 1.0);
      o.pass = o.pass && std::isfinite(c) && std::isfinite(cf) && change <= 0.25;
      s << "(" << a << "," << T << ") c=" << c << " c_fine=" << cf << " change=" << change << "; ";
    }
  o.detail = s.str();
  return o;
}

Outcome carleman() {
  const DomainSpec d = rectangle();
  const double T = 2.0;
  const std::vector<double> s_grid{1, 2, 4, 8, 16};
  const CarlemanWeightSet base = make_weight_set(d, 0.5, T, 1.0);
  const CarlemanSetup setup{gamma_plus_tags(d, classify_boundary(d))};
  const Discrete coarse = discretize(d, 0.05, 0.5), fine = discretize(d, 0.025, 0.5);
  const SpectralBasis bc = solve_eigenpairs(*coarse.ops, 10), bf = solve_eigenpairs(*fine.ops, 10);
  std::mt19937 rng(42);
  std::normal_distribution<double> nd;
  Outcome o{true, ""};
  double worst_time = 0.0, worst_space = 0.0;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> c(10);
    double n2 = 0.0;
    for (double& x : c) {
      x = nd(rng);
      n2 += x * x;
    }
    for (double& x : c) x /= std::sqrt(n2);
    // Both bases share a mesh-independent sign convention.
    const std::vector<double>& cf = c;
    const Vector phic = reconstruct(bc, c), phif = reconstruct(bf, cf);
    const SSweepReport a = s_sweep(solve_backward(*coarse.ops, phic, {T, 64}), *coarse.ops, base, s_grid, setup);
    const SSweepReport at = s_sweep(solve_backward(*coarse.ops, phic, {T, 128}), *coarse.ops, base, s_grid, setup);
    const SSweepReport ah = s_sweep(solve_backward(*fine.ops, phif, {T, 64}), *fine.ops, base, s_grid, setup);
    bool bounded = true;
    for (std::size_t j = a.knee_index; j < a.rows.size(); ++j) bounded = bounded && a.rows[j].ratio <= a.fitted_constant;
    worst_time = std::max(worst_time, max_relative_change(a, at));
    worst_space = std::max(worst_space, max_relative_change(a, ah));
    o.pass = o.pass && a.pass && bounded;
  }
  o.pass = o.pass && worst_time <= 0.2 && worst_space <= 0.2;
  std::ostringstream s;
  s << "max change dt/2=" << worst_time << " h/2=" << worst_space;
  o.detail = s.str();
  return o;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"1 spectral lower bound", spectral_bound},
      {"2 Hardy inequality", hardy},
      {"3 weight identities", identities},
      {"4 conjugation identity", conjugation},
      {"5 spectral vs Crank-Nicolson", richardson},
      {"6 discrete duality", duality},
      {"7 truncation sweep", sweep},
      {"8 backward inequalities", backward_inequalities},
      {"9 observability constant", observability},
      {"10 Carleman s-sweep", carleman},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", name, seconds_since(t0), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
