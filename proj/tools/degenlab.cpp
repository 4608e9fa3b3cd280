// Command-line driver: one subcommand per experiment, configured by a JSON
// file, writing CSV/JSON reports and a manifest of the checks that ran.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "degenlab/degenlab.hpp"

namespace fs = std::filesystem;
using namespace degenlab;

namespace {

struct Check {
  std::string name;
  bool pass = false;
  json detail;
};

struct Run {
  std::string command;
  RunConfig config;
  unsigned threads = 1;
  std::vector<Check> checks;
  std::vector<std::string> files;

  // Each command writes into its own subdirectory of the configured output.
  fs::path dir() const { return config.output / command; }
  fs::path out(const std::string& name) {
    files.push_back(name);
    return dir() / name;
  }
  void check(std::string name, bool pass, json detail = json::object()) {
    checks.push_back({std::move(name), pass, std::move(detail)});
  }
  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
  void write_manifest() {
    json cj = json::array();
    for (const Check& c : checks) cj.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    files.push_back("manifest.json");
    write_json(dir() / "manifest.json", {{"command", command},
                                                  {"config", config.source},
                                                  {"checks", cj},
                                                  {"files", files},
                                                  {"pass", all_pass()}});
  }
};

json vec_json(const std::vector<double>& v) { return json(v); }

Mesh build_mesh(const RunConfig& c) { return generate_mesh(c.domain, c.mesh); }

void cmd_check_geometry(Run& run) {
  const RunConfig& c = run.config;
  const BoundaryClassification cls = classify_boundary(c.domain);
  const auto tags = gamma_plus_tags(c.domain, cls);
  json segs = json::array();
  for (std::size_t i = 0; i < c.domain.segments.size(); ++i) {
    const char* cls_name = std::find(cls.gamma_plus.begin(), cls.gamma_plus.end(), i) != cls.gamma_plus.end()
                               ? "gamma_plus"
                           : std::find(cls.gamma_zero.begin(), cls.gamma_zero.end(), i) != cls.gamma_zero.end()
                               ? "gamma_zero"
                               : "gamma_minus";
    segs.push_back({{"index", i}, {"tag", c.domain.segments[i].tag}, {"x_dot_nu", cls.x_dot_nu[i]},
                    {"class", cls_name}});
  }
  const Mesh mesh = build_mesh(c);
  write_json(run.out("geometry.json"),
             {{"domain", domain_to_json(c.domain)},
              {"domain_hash", std::to_string(domain_hash(c.domain))},
              {"segments", segs},
              {"gamma_plus_tags", tags},
              {"condition_holds", cls.condition_holds},
              {"sup_x_dot_nu", cls.sup_x_dot_nu},
              {"min_gamma_plus_x_dot_nu", cls.min_gamma_plus_x_dot_nu},
              {"weak_observation_sign", cls.weak_observation_sign},
              {"delta0", delta0(c.domain)},
              {"mesh", {{"nodes", mesh.num_nodes()},
                        {"triangles", mesh.num_triangles()},
                        {"max_element_diameter", max_element_diameter(mesh)},
                        {"area", mesh_area(mesh)},
                        {"polygon_area", polygon_area(c.domain)}}}});
  write_json(run.out("mesh.json"), mesh_to_json(mesh));
  run.check("geometric_condition", cls.condition_holds);
  run.check("gamma_plus_nonempty", !tags.empty());
  run.check("mesh_diameter_within_h", max_element_diameter(mesh) <= c.mesh.h,
            {{"max_element_diameter", max_element_diameter(mesh)}, {"h", c.mesh.h}});
}

void cmd_spectrum(Run& run) {
  const RunConfig& c = run.config;
  const Mesh mesh = build_mesh(c);
  const AssembledOperators ops = assemble(mesh, c.alpha);
  const SpectralBasis basis = solve_eigenpairs(ops, c.spectrum.modes);
  write_spectrum_csv(run.out("spectrum.csv"), basis);
  const auto fields = hardy_test_fields(basis, c.spectrum.modes, c.spectrum.hardy_bumps, c.spectrum.seed);
  const RatioReport hardy = verify_hardy(ops, fields);
  const RatioReport poincare = verify_poincare(ops, fields, c.domain.M_radius);
  const double bound = lambda1_lower_bound(c.alpha, c.domain.M_radius);
  const bool lambda_ok = basis.lambdas[0] >= bound;
  write_json(run.out("bounds.json"), {{"alpha", c.alpha},
                                      {"M_radius", c.domain.M_radius},
                                      {"nodes", mesh.num_nodes()},
                                      {"lambda1", basis.lambdas[0]},
                                      {"lambda1_lower_bound", bound},
                                      {"lambda1_bound_pass", lambda_ok},
                                      {"hardy_bound", hardy.bound},
                                      {"hardy_max_ratio", hardy.max_ratio},
                                      {"hardy_tolerance", hardy.tolerance},
                                      {"hardy_pass", hardy.pass},
                                      {"poincare_bound", poincare.bound},
                                      {"poincare_max_ratio", poincare.max_ratio},
                                      {"poincare_pass", poincare.pass},
                                      {"max_residual", *std::max_element(basis.residuals.begin(),
                                                                         basis.residuals.end())}});
  if (c.spectrum.export_matrices) {
    write_coo(run.out("K.coo.csv"), ops.K);
    write_coo(run.out("M.coo.csv"), ops.M);
    write_coo(run.out("H.coo.csv"), ops.H);
  }
  run.check("lambda1_lower_bound", lambda_ok, {{"lambda1", basis.lambdas[0]}, {"bound", bound}});
  run.check("hardy", hardy.pass, {{"max_ratio", hardy.max_ratio}, {"bound", hardy.bound}});
  run.check("poincare", poincare.pass, {{"max_ratio", poincare.max_ratio}, {"bound", poincare.bound}});
}

void cmd_solve(Run& run) {
  const RunConfig& c = run.config;
  const Mesh mesh = build_mesh(c);
  const AssembledOperators ops = assemble(mesh, c.alpha);
  const SpectralBasis basis = solve_eigenpairs(ops, c.spectrum.modes);
  const Vector y0 = basis.phi(c.solve.y0_mode - 1);

  const TimeGrid coarse = c.grid(), fine{c.T, 2 * c.steps};
  const Trajectory cn = solve_forward_cn(ops, y0, coarse);
  const Trajectory sp = solve_forward_spectral(basis, y0, coarse);
  const Trajectory cn2 = solve_forward_cn(ops, y0, fine);
  const Trajectory sp2 = solve_forward_spectral(basis, y0, fine);
  const double e1 = m_norm(ops, cn.frames.back() - sp.frames.back());
  const double e2 = m_norm(ops, cn2.frames.back() - sp2.frames.back());
  const double richardson = e1 / e2;

  std::vector<std::vector<CsvCell>> rows;
  for (int k = 0; k <= coarse.steps; ++k)
    rows.push_back({coarse.time(k), m_norm(ops, cn.frames[k]), m_norm(ops, sp.frames[k]),
                    m_norm(ops, cn.frames[k] - sp.frames[k])});
  write_csv(run.out("solve.csv"), {"t", "norm_cn", "norm_spectral", "discrepancy"}, rows);

  std::mt19937 rng(c.solve.seed);
  double worst = 0.0;
  json pairs = json::array();
  for (int i = 0; i < c.solve.duality_pairs; ++i) {
    const Vector a = random_free_vector(ops, rng);
    const Vector b = random_free_vector(ops, rng);
    const DualityResult d = duality_check(ops, a, b, coarse);
    worst = std::max(worst, d.defect / d.scale);
    pairs.push_back({{"forward", d.forward_pairing}, {"backward", d.backward_pairing}, {"relative_defect",
                                                                                         d.defect / d.scale}});
  }
  const bool richardson_ok = richardson >= 3.5 && richardson <= 4.5;
  write_json(run.out("solve.json"), {{"y0_mode", c.solve.y0_mode},
                                     {"lambda", basis.lambdas[c.solve.y0_mode - 1]},
                                     {"terminal_discrepancy", {{"steps", coarse.steps}, {"value", e1}}},
                                     {"terminal_discrepancy_refined", {{"steps", fine.steps}, {"value", e2}}},
                                     {"richardson_ratio", richardson},
                                     {"duality", pairs},
                                     {"duality_max_relative_defect", worst}});
  run.check("richardson_ratio", richardson_ok, {{"ratio", richardson}});
  run.check("discrete_duality", worst <= 1e-10, {{"max_relative_defect", worst}});
}

void cmd_sweep_delta(Run& run) {
  const RunConfig& c = run.config;
  if (c.sweep.deltas.empty()) throw ConfigError("sweep-delta needs a 'sweep.deltas' list");
  const Mesh mesh = build_mesh(c);
  const AssembledOperators ops = assemble(mesh, c.alpha);
  const Vector y0 = bump_field(mesh, c.sweep.y0_center, c.sweep.y0_radius);
  SweepOptions so;
  so.deltas = c.sweep.deltas;
  so.alpha = c.alpha;
  so.grid = c.grid();
  so.mesh = c.mesh;
  so.threads = run.threads;
  so.record_runtime = c.timing;
  const SweepReport rep = delta_sweep(c.domain, mesh, ops, y0, so);
  std::vector<std::vector<CsvCell>> rows;
  json snapped = json::array();
  for (const SweepRow& r : rep.rows) {
    rows.push_back({r.delta, r.l2q_error, r.flux_error_gamma_plus, r.runtime_ms});
    snapped.push_back({{"delta", r.delta}, {"snapped_delta", r.snapped_delta}, {"submesh_nodes", r.submesh_nodes}});
  }
  write_csv(run.out("sweep.csv"), {"delta", "l2q_error", "flux_error_gamma_plus", "runtime_ms"}, rows);
  write_json(run.out("sweep.json"), {{"rows", snapped},
                                     {"mesh_nodes", rep.mesh_nodes},
                                     {"reference_l2q_norm", rep.reference_l2q_norm},
                                     {"observation_tags", rep.observation_tags},
                                     {"l2q_monotone", rep.l2q_monotone},
                                     {"flux_monotone", rep.flux_monotone}});
  run.check("l2q_error_decreasing", rep.l2q_monotone);
  run.check("flux_error_decreasing", rep.flux_monotone);
}

void cmd_carleman(Run& run) {
  const RunConfig& c = run.config;
  const CarlemanConfig& cc = c.carleman;

  const double min_r = std::max(0.05, 10.0 * cc.fd_step);
  const auto pts = sample_points_in_domain(c.domain, cc.identity_points, min_r, cc.seed);
  const IdentityReport ids = verify_weight_identities(c.alpha, pts, cc.fd_step, &c.domain, c.T, 1e-5,
                                                      cc.theta_exponent);
  json id_checks = json::array();
  for (const IdentityCheck& ic : ids.checks)
    id_checks.push_back({{"name", ic.name}, {"max_deviation", ic.max_deviation}, {"pass", ic.pass}});

  const auto cpts = conjugation_samples(c.domain, cc.conjugation_T, cc.identity_points, min_r, cc.seed + 7);
  json conj = json::array();
  bool conj_ok = true;
  for (double s : cc.conjugation_s) {
    const CarlemanWeightSet ws = make_weight_set(c.domain, c.alpha, cc.conjugation_T, s, cc.theta_exponent);
    const ConjugationReport cr = conjugation_residual(ws, separable_bump(c.domain), cpts, cc.fd_step);
    conj_ok = conj_ok && cr.max_relative_residual <= 1e-4;
    conj.push_back({{"s", s}, {"max_relative_residual", cr.max_relative_residual},
                    {"max_abs_residual", cr.max_abs_residual}});
  }
  write_json(run.out("identities.json"), {{"alpha", c.alpha},
                                          {"fd_step", cc.fd_step},
                                          {"tolerance", ids.tolerance},
                                          {"div_w_grad_eta", ids.div_w_grad_eta},
                                          {"checks", id_checks},
                                          {"theta_c1", ids.theta_c1},
                                          {"theta_c2", ids.theta_c2},
                                          {"conjugation_T", cc.conjugation_T},
                                          {"conjugation", conj}});

  const Mesh mesh = build_mesh(c);
  const AssembledOperators ops = assemble(mesh, c.alpha);
  const SpectralBasis basis = solve_eigenpairs(ops, cc.modes);
  const BoundaryClassification cls = classify_boundary(c.domain);
  CarlemanSetup setup;
  setup.observation_tags = gamma_plus_tags(c.domain, cls);
  const CarlemanWeightSet base = make_weight_set(c.domain, c.alpha, c.T, 1.0, cc.theta_exponent);
  const double gap = min_gamma_minus_eta(base, mesh);

  EnsembleSpec es{cc.modes, cc.samples, cc.seed};
  const auto coeffs = ensemble_coefficients(es);
  struct SampleResult {
    SSweepReport sweep;
    double refinement_change = 0.0;
  };
  const auto results = parallel_map(coeffs.size(), run.threads, [&](std::size_t i) {
    const Vector phiT = reconstruct(basis, coeffs[i]);
    SampleResult r;
    r.sweep = s_sweep(solve_backward(ops, phiT, c.grid()), ops, base, cc.s_grid, setup);
    const SSweepReport fine = s_sweep(solve_backward(ops, phiT, {c.T, 2 * c.steps}), ops, base, cc.s_grid, setup);
    r.refinement_change = max_relative_change(r.sweep, fine);
    return r;
  });

  std::vector<std::vector<CsvCell>> rows;
  json samples = json::array();
  bool finite = true, nondegenerate = true;
  double worst_change = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const SSweepReport& sw = results[i].sweep;
    for (const CarlemanFunctionals& f : sw.rows)
      rows.push_back({static_cast<long long>(i), f.s, f.lhs_grad, f.lhs_zero, f.rhs_boundary, f.ratio,
                      f.log_lhs_grad, f.log_lhs_zero, f.log_rhs_boundary});
    finite = finite && sw.all_finite;
    nondegenerate = nondegenerate && !sw.all_degenerate;
    worst_change = std::max(worst_change, results[i].refinement_change);
    json tails = json::array();
    for (const CarlemanFunctionals& f : sw.rows) tails.push_back(f.log10_tail_bound);
    samples.push_back({{"sample", i},
                       {"knee_index", sw.knee_index},
                       {"s0", sw.s0},
                       {"fitted_constant", sw.fitted_constant},
                       {"time_refinement_change", results[i].refinement_change},
                       {"log10_tail_bound", tails}});
  }
  write_csv(run.out("carleman_sweep.csv"),
            {"sample", "s", "lhs_grad", "lhs_zero", "rhs_boundary", "ratio", "log_lhs_grad", "log_lhs_zero",
             "log_rhs_boundary"},
            rows);
  write_json(run.out("carleman.json"), {{"alpha", c.alpha},
                                        {"T", c.T},
                                        {"steps", c.steps},
                                        {"gamma", base.gamma},
                                        {"theta_exponent", cc.theta_exponent},
                                        {"min_gamma_minus_eta", gap},
                                        {"s_grid", vec_json(cc.s_grid)},
                                        {"observation_tags", setup.observation_tags},
                                        {"samples", samples}});
  run.check("weight_identities", ids.pass);
  run.check("conjugation_identity", conj_ok);
  run.check("gamma_minus_eta_at_least_one", gap >= 1.0 - 1e-12, {{"min", gap}});
  run.check("carleman_ratio_finite", finite);
  run.check("boundary_term_nondegenerate", nondegenerate);
  run.check("time_refinement_within_20pct", worst_change <= 0.2, {{"max_change", worst_change}});
}

void cmd_observability(Run& run) {
  const RunConfig& c = run.config;
  ObservabilityProblem p;
  p.domain = c.domain;
  p.alpha = c.alpha;
  p.grid = c.grid();
  p.mesh = c.mesh;
  p.threads = run.threads;
  const ObservabilityReport rep = estimate_constant(p, c.ensemble);
  std::vector<std::vector<CsvCell>> rows;
  bool mono = true, avg = true;
  for (const ObservabilityRow& r : rep.rows) {
    rows.push_back({static_cast<long long>(r.sample_id), r.phi0_sq, r.boundary_energy, r.ratio,
                    std::string(r.monotone ? "1" : "0"), std::string(r.time_average_pass ? "1" : "0"),
                    r.time_average_margin, std::string(r.violation_candidate ? "1" : "0")});
    mono = mono && r.monotone;
    avg = avg && r.time_average_pass;
  }
  write_csv(run.out("observability.csv"),
            {"sample_id", "phi0_sq", "boundary_energy", "ratio", "monotone", "time_average_pass",
             "time_average_margin", "violation_candidate"},
            rows);
  json violations = json::array();
  for (const ObservabilityRow& r : rep.rows)
    if (r.violation_candidate)
      violations.push_back({{"sample_id", r.sample_id}, {"refined_ratio", r.refined_ratio ? json(*r.refined_ratio)
                                                                                          : json(nullptr)}});
  write_json(run.out("observability.json"), {{"c_obs_empirical", rep.c_obs_empirical},
                                             {"alpha", rep.alpha},
                                             {"T", rep.T},
                                             {"h", rep.h},
                                             {"steps", rep.steps},
                                             {"seed", rep.ensemble.seed},
                                             {"modes", rep.ensemble.modes},
                                             {"samples", rep.ensemble.samples},
                                             {"mesh_nodes", rep.mesh_nodes},
                                             {"domain_hash", std::to_string(rep.domain_hash)},
                                             {"sup_x_dot_nu", rep.sup_x_dot_nu},
                                             {"lambdas", vec_json(rep.lambdas)},
                                             {"violation_candidates", violations}});
  run.check("c_obs_finite", rep.finite, {{"c_obs_empirical", rep.c_obs_empirical}});
  run.check("backward_monotonicity", mono);
  run.check("time_average_bound", avg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical experiments for parabolic equations degenerating at a boundary point"};
  app.require_subcommand(1);
  std::string config_path;
  unsigned threads = default_threads();
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  struct Sub {
    const char* name;
    const char* help;
    void (*fn)(Run&);
  };
  const Sub subs[] = {
      {"check-geometry", "classify the boundary and mesh the domain", cmd_check_geometry},
      {"spectrum", "lowest eigenpairs and the Hardy/Poincare checks", cmd_spectrum},
      {"solve", "spectral vs Crank-Nicolson forward solves and discrete duality", cmd_solve},
      {"sweep-delta", "truncation-radius sweep with zero extension", cmd_sweep_delta},
      {"carleman", "weight identities, conjugation and the s-sweep", cmd_carleman},
      {"observability", "empirical observability constant over an ensemble", cmd_observability},
  };
  for (const Sub& s : subs) app.add_subcommand(s.name, s.help)->add_option("--config", config_path, "JSON config")
                                ->required()
                                ->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);

  const Sub* chosen = nullptr;
  for (const Sub& s : subs)
    if (app.got_subcommand(s.name)) chosen = &s;

  try {
    Run run;
    run.command = chosen->name;
    run.config = load_config(config_path);
    run.threads = threads;
    fs::create_directories(run.dir());
    chosen->fn(run);
    run.write_manifest();
    for (const Check& c : run.checks) std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << '\n';
    return run.all_pass() ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
