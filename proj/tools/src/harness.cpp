#include "ioc/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ioc/error.hpp"

namespace ioc::harness {

namespace {

Eigen::MatrixXd matrix_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw Error(ErrorCode::kParseError, what + " must be an array of rows");
  }
  Eigen::MatrixXd m(static_cast<Index>(j.size()), static_cast<Index>(j[0].size()));
  for (Index r = 0; r < m.rows(); ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (static_cast<Index>(row.size()) != m.cols()) {
      throw Error(ErrorCode::kParseError, what + " is ragged");
    }
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json to_json(const Eigen::VectorXcd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back({{"re", v(i).real()}, {"im", v(i).imag()}});
  return out;
}

template <class T>
json to_json_value(const T& v) {
  if constexpr (std::is_arithmetic_v<T>) {
    return v;
  } else {
    return to_json(v);
  }
}

template <class T>
json opt(const std::optional<T>& v) {
  if (!v) return nullptr;
  if constexpr (std::is_same_v<T, Eigen::Vector2d>) {
    return to_json(Eigen::VectorXd(*v));
  } else {
    return to_json_value(*v);
  }
}

std::string problem_text(const json& j) { return j.dump(); }

Eigen::VectorXcd spectrum(const Eigen::MatrixXd& a) {
  return Eigen::EigenSolver<Eigen::MatrixXd>(a, false).eigenvalues();
}

}  // namespace

void ScenarioConfig::validate() const {
  const int sources = static_cast<int>(example.has_value()) +
                      static_cast<int>(problem.has_value()) +
                      static_cast<int>(trajectory_file.has_value());
  if (sources != 1) {
    throw Error(ErrorCode::kInvalidProblem,
                "config needs exactly one of example, problem, trajectory_file");
  }
  if (example && (*example < 1 || *example > 3)) {
    throw Error(ErrorCode::kInvalidProblem, "example must be 1, 2 or 3");
  }
  if (trajectory_file && (!M || !N)) {
    throw Error(ErrorCode::kInvalidProblem, "trajectory_file needs dynamics M and N");
  }
  if (known_value && *known_value == 0.0) {
    throw Error(ErrorCode::kInvalidProblem, "known_value must be nonzero");
  }
  if (!run_soft && !run_hard && !diagnostics) {
    throw Error(ErrorCode::kInvalidProblem, "nothing to run");
  }
}

ScenarioConfig parse_config(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParseError, "config must be an object");
  ScenarioConfig c;
  try {
    if (j.contains("example")) c.example = j["example"].get<int>();
    if (j.contains("problem")) c.problem = parse_problem(problem_text(j["problem"]));
    if (j.contains("problem_file")) {
      if (c.problem) throw Error(ErrorCode::kInvalidProblem, "problem given twice");
      c.problem = load_problem(j["problem_file"].get<std::string>());
    }
    if (j.contains("trajectory_file")) c.trajectory_file = j["trajectory_file"].get<std::string>();
    if (j.contains("dynamics")) {
      c.M = matrix_from(j["dynamics"].at("M"), "dynamics.M");
      c.N = matrix_from(j["dynamics"].at("N"), "dynamics.N");
    }
    if (j.contains("known_index")) c.known_index = j["known_index"].get<Index>();
    if (j.contains("known_value")) c.known_value = j["known_value"].get<double>();
    if (j.contains("methods")) {
      c.run_soft = c.run_hard = false;
      for (const auto& m : j["methods"]) {
        const auto name = m.get<std::string>();
        if (name == "soft") {
          c.run_soft = true;
        } else if (name == "hard") {
          c.run_hard = true;
        } else {
          throw Error(ErrorCode::kParseError, "unknown method " + name);
        }
      }
    }
    if (j.contains("diagnostics")) c.diagnostics = j["diagnostics"].get<bool>();
    if (j.contains("grid")) {
      const json& g = j["grid"];
      if (g.contains("horizon")) c.horizon = g["horizon"].get<double>();
      if (g.contains("step")) c.step = g["step"].get<double>();
    }
    if (j.contains("rank_window")) c.rank_window = j["rank_window"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("count")) c.count = j["count"].get<Index>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParseError, "cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
  return parse_config(j);
}

LtiProblem example_problem(int id) {
  LtiProblem p;
  p.N = Eigen::MatrixXd(2, 1);
  p.N << 0.0, 1.0;
  p.E = 1.0;
  p.M = Eigen::MatrixXd(2, 2);
  p.D_diag = Eigen::VectorXd(2);
  p.x0 = Eigen::VectorXd(2);
  switch (id) {
    case 1:
      p.M << 0.0, -1.0, 6.0, 5.0;
      p.D_diag << 32.0, 2.0;
      p.x0 << 1.0, -3.0;
      break;
    case 2:
      p.M << 0.0, 1.0, -0.64, -0.16;
      p.D_diag << 20.0, 20.0;
      p.x0 << 1.0, 0.0;
      p.x0_mode = 0;
      break;
    case 3:
      p.M << -0.5, 1.0, -1.895588534068740, 1.393261306481120;
      p.D_diag << 0.0019, 0.0019;
      p.x0 << 1.0, 0.091542807321846;
      break;
    default:
      throw Error(ErrorCode::kInvalidProblem, "no example " + std::to_string(id));
  }
  return p;
}

RankPolicy rank_policy_from_env() {
  RankPolicy policy;
  if (const char* env = std::getenv("IOC_RANK_TOL")) {
    char* end = nullptr;
    const double v = std::strtod(env, &end);
    if (end == env || *end != '\0' || !(v > 0.0)) {
      throw Error(ErrorCode::kInvalidProblem, std::string("bad IOC_RANK_TOL: ") + env);
    }
    policy.relative = v;
  }
  return policy;
}

Prepared prepare(const ScenarioConfig& config) {
  config.validate();
  Prepared d;
  if (config.trajectory_file) {
    d.traj = load_trajectory(*config.trajectory_file, format_from_path(*config.trajectory_file));
    d.table = tabulate_lti_quadratic(d.traj, *config.M, *config.N);
    d.x0 = d.traj.x.row(0).transpose();
  } else {
    LtiProblem prob = config.example ? example_problem(*config.example) : *config.problem;
    if (config.horizon) prob.horizon = config.horizon;
    if (config.step) prob.step = config.step;
    prob.validate();
    LqrSolution sol = solve_are(prob);
    d.x0 = resolved_initial_state(prob, sol);
    d.grid_choice = default_grid(prob, sol);
    d.traj = simulate_closed_loop(prob, sol, d.grid_choice->grid);
    d.table = tabulate_lti_quadratic(d.traj, prob, sol);
    d.truth = prob.true_weights();
    d.problem = std::move(prob);
    d.solution = std::move(sol);
  }
  const Index k = d.table.k;
  d.known_index = config.known_index.value_or(k - 1);
  if (d.known_index < 0 || d.known_index >= k) {
    throw Error(ErrorCode::kInvalidProblem, "known_index out of range");
  }
  if (config.known_value) {
    d.known_value = *config.known_value;
  } else if (d.truth) {
    d.known_value = (*d.truth)(d.known_index);
  }
  if (d.known_value == 0.0) {
    throw Error(ErrorCode::kInvalidProblem, "known weight is zero; give known_value");
  }
  return d;
}

PipelineResult run_pipeline(const ScenarioConfig& config,
                            const PipelineOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  PipelineResult r;
  r.policy = rank_policy_from_env();
  r.data = prepare(config);
  const Prepared& d = r.data;
  const TimeGrid& grid = d.traj.grid;
  ResidualMatrices res = assemble_residual(d.table);

  if (config.run_soft) {
    try {
      RiccatiSolution ric = integrate_riccati(res, grid);
      r.soft = recover_weights_soft(ric.P0, d.table.k, d.known_index, d.known_value, r.policy);
      if (options.keep_series) r.riccati = std::move(ric);
    } catch (const Error& e) {
      r.soft_error = e.what();
    }
  }
  if (config.run_hard) {
    try {
      r.hard = assemble_W(d.table, integrate_L(d.table, grid), grid);
      if (!r.hard->diverged) {
        r.hard_recovery = recover_weights_hard(*r.hard, d.known_index, d.known_value, r.policy);
      }
    } catch (const Error& e) {
      r.hard_error = e.what();
    }
  }
  if (config.diagnostics) {
    try {
      const KernelSelectors sel = kernel_selectors(d.table.k, d.table.n, {d.known_index});
      ObservabilityOptions oo;
      oo.policy = r.policy;
      if (config.rank_window) {
        oo.window_end = config.rank_window;
      } else {
        const Eigen::MatrixXd mbar = d.solution ? d.solution->Mbar : d.table.lti->Mbar;
        oo.window_end = default_rank_window(grid, max_real_eigenvalue(mbar));
      }
      r.observability = observability_series(res, d.table, grid, sel, oo);
      if (d.solution) {
        if (d.problem->n() != 2) {
          r.warnings.push_back("NotSecondOrder: case analysis skipped, generic rank tests only");
        }
        r.verdict = diagnose_case(*d.solution, *d.problem, d.x0, &*r.observability, r.policy);
      }
    } catch (const Error& e) {
      r.warnings.push_back(std::string("diagnostics: ") + e.what());
    }
  }
  if (r.verdict && d.truth) {
    std::optional<HardOutcome> outcome;
    if (r.hard) {
      outcome = HardOutcome{r.hard->diverged, r.hard_recovery};
    }
    r.comparison = predict_vs_empirical(*r.verdict, r.soft, outcome, *d.truth,
                                        options.agreement_tolerance);
  }
  if (options.keep_series) r.residual = std::move(res);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

json grid_json(const Prepared& d) {
  json g = {{"t0", d.traj.grid.t0}, {"tf", d.traj.grid.tf}, {"h", d.traj.grid.h},
            {"count", d.traj.grid.count}};
  if (d.grid_choice) {
    g["decay_rate"] = d.grid_choice->decay_rate;
    g["truncated"] = d.grid_choice->truncated;
  }
  return g;
}

json forward_json(const Prepared& d) {
  json j;
  j["grid"] = grid_json(d);
  j["x0"] = to_json(d.x0);
  if (d.problem) {
    j["M"] = to_json(d.problem->M);
    j["N"] = to_json(d.problem->N);
    j["D_diag"] = to_json(d.problem->D_diag);
    j["E"] = d.problem->E;
    j["open_loop_eigenvalues"] = to_json(spectrum(d.problem->M));
  }
  if (d.solution) {
    const auto& s = *d.solution;
    j["Pi"] = to_json(s.Pi);
    j["Theta"] = to_json(s.Theta);
    j["Mbar"] = to_json(s.Mbar);
    j["closed_loop_eigenvalues"] = to_json(s.eigenvalues);
    j["are_residual"] = s.are_residual;
    const DampingClass dc = classify_damping(s);
    j["damping"] = to_string(dc.kind);
    if (dc.kind == DampingClass::Kind::UnderDamped) {
      j["sigma"] = dc.sigma;
      j["omega"] = dc.omega;
    } else {
      j["lambdas"] = to_json(dc.lambdas);
      j["eigenvectors"] = to_json(dc.eigenvectors);
    }
  }
  return j;
}

json soft_json(const PipelineResult& r) {
  json j;
  j["method"] = "soft";
  j["grid"] = grid_json(r.data);
  j["known_index"] = r.data.known_index;
  j["known_value"] = r.data.known_value;
  if (r.soft_error) {
    j["status"] = "ERROR";
    j["error"] = *r.soft_error;
    return j;
  }
  if (!r.soft) return j;
  const SoftRecovery& s = *r.soft;
  j["status"] = s.unique ? "OK" : "NON_UNIQUE";
  j["c"] = to_json(s.c);
  j["p0"] = to_json(s.p0);
  j["objective"] = s.objective;
  j["cond_P0_reduced"] = s.cond_P0_reduced;
  j["reduced_rank"] = s.reduced_rank;
  j["unique"] = s.unique;
  if (r.data.truth) j["max_rel_error"] = max_relative_error(s.c, *r.data.truth);
  return j;
}

json hard_json(const PipelineResult& r) {
  json j;
  j["method"] = "hard";
  j["grid"] = grid_json(r.data);
  j["known_index"] = r.data.known_index;
  j["known_value"] = r.data.known_value;
  if (r.hard_error) {
    j["status"] = "ERROR";
    j["error"] = *r.hard_error;
    return j;
  }
  if (!r.hard) return j;
  const AdjointSolution& a = r.hard->adjoint;
  j["diverged"] = r.hard->diverged;
  j["L_max_norm"] = a.max_norm;
  j["tail_ratio"] = a.tail_ratio;
  j["growth_rate"] = a.growth_rate;
  j["blowup_time"] = a.blowup_time ? json(*a.blowup_time) : json(nullptr);
  if (r.hard->diverged) {
    j["status"] = "DIVERGED";
    j["divergence_reason"] = a.divergence_reason;
    return j;
  }
  const HardRecovery& h = *r.hard_recovery;
  j["status"] = h.unique ? "OK" : "NON_UNIQUE";
  j["W"] = to_json(r.hard->W);
  j["c"] = to_json(h.c);
  j["objective"] = h.objective;
  j["reduced_rank"] = h.reduced_rank;
  j["cond_reduced"] = h.cond_reduced;
  j["unique"] = h.unique;
  if (r.data.truth) j["max_rel_error"] = max_relative_error(h.c, *r.data.truth);
  return j;
}

json verdict_json(const PipelineResult& r) {
  json j;
  j["grid"] = grid_json(r.data);
  j["warnings"] = r.warnings;
  if (r.observability) {
    const auto& o = *r.observability;
    int min_rank = o.full_rank;
    int max_rank = 0;
    for (int k : o.Qp_rank) {
      min_rank = std::min(min_rank, k);
      max_rank = std::max(max_rank, k);
    }
    j["observability"] = {{"window_end", o.window_end},
                          {"samples", o.Qp_rank.size()},
                          {"full_rank", o.full_rank},
                          {"min_rank", min_rank},
                          {"max_rank", max_rank},
                          {"full_rank_fraction", o.full_rank_fraction},
                          {"cond_at_t0", o.Qp_cond.front()},
                          {"analytic", o.analytic}};
  }
  if (r.verdict) {
    const CaseVerdict& v = *r.verdict;
    const CaseEvidence& e = v.evidence;
    j["damping"] = to_string(v.damping.kind);
    j["soft_predicted"] = to_string(v.soft_predicted);
    j["hard_predicted"] = to_string(v.hard_predicted);
    j["hard_general"] = to_string(v.hard_general);
    json ev;
    ev["soft_basis"] = e.soft_basis;
    ev["hard_branch"] = e.hard_branch;
    ev["mode_index"] = e.mode_index ? json(*e.mode_index) : json(nullptr);
    ev["mode_angle"] = opt(e.mode_angle);
    ev["lambda1"] = opt(e.lambda1);
    ev["V1"] = e.V1 ? to_json(*e.V1) : json(nullptr);
    ev["v11_nonzero"] = e.v11_nonzero ? json(*e.v11_nonzero) : json(nullptr);
    ev["v12_nonzero"] = e.v12_nonzero ? json(*e.v12_nonzero) : json(nullptr);
    ev["theta_v1_nonzero"] = e.theta_v1_nonzero ? json(*e.theta_v1_nonzero) : json(nullptr);
    ev["lambda_bar"] = e.lambda_bar ? to_json(*e.lambda_bar) : json(nullptr);
    ev["lambda_hat"] = e.lambda_hat ? to_json(*e.lambda_hat) : json(nullptr);
    ev["sigma"] = opt(e.sigma);
    ev["omega"] = opt(e.omega);
    ev["max_real_sum"] = opt(e.max_real_sum);
    ev["delta"] = opt(e.delta);
    ev["mu"] = opt(e.mu);
    ev["product"] = opt(e.product);
    ev["HrN"] = opt(e.HrN);
    ev["HcN"] = opt(e.HcN);
    ev["dependence_residual"] = opt(e.dependence_residual);
    ev["full_rank_fraction"] = opt(e.full_rank_fraction);
    ev["borderline"] = e.borderline;
    j["evidence"] = ev;
  }
  if (r.comparison) {
    json rows = json::array();
    for (const auto& row : r.comparison->rows) {
      rows.push_back({{"method", row.method},
                      {"predicted", row.predicted},
                      {"observed", row.observed},
                      {"max_rel_error", opt(row.max_rel_error)},
                      {"agree", row.agree ? json(*row.agree) : json(nullptr)}});
    }
    j["comparison"] = rows;
  }
  return j;
}

// ---------------------------------------------------------------------------
// reproduction

namespace {

constexpr double kClose = 0.05;
constexpr double kFar = 0.50;

ReproduceRow row_for(int id, const std::string& method) {
  ReproduceRow row;
  row.example = id;
  row.method = method;
  return row;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(6) << v;
  return ss.str();
}

}  // namespace

std::vector<ReproduceRow> reproduce_example(int id, double* seconds) {
  ScenarioConfig config;
  config.example = id;
  PipelineResult r;
  std::vector<ReproduceRow> rows;
  try {
    r = run_pipeline(config);
  } catch (const Error& e) {
    for (const char* m : {"soft", "hard"}) {
      ReproduceRow row = row_for(id, m);
      row.observed = "ERROR";
      row.detail = e.what();
      rows.push_back(row);
    }
    return rows;
  }
  if (seconds) *seconds = r.seconds;
  const Eigen::VectorXd& truth = *r.data.truth;
  const auto& v = r.verdict;
  const auto& obs = r.observability;

  ReproduceRow soft = row_for(id, "soft");
  soft.predicted = v ? to_string(v->soft_predicted) : "UNKNOWN";
  ReproduceRow hard = row_for(id, "hard");
  hard.predicted = v ? to_string(v->hard_predicted) : "UNKNOWN";

  if (r.soft) {
    soft.error = max_relative_error(r.soft->c, truth);
    soft.observed = r.soft->unique ? (*soft.error <= kClose ? "RECOVERED" : "FAILED") : "NON_UNIQUE";
  } else {
    soft.observed = "ERROR";
    soft.detail = r.soft_error.value_or("no result");
  }
  if (r.hard && r.hard->diverged) {
    hard.observed = "DIVERGED";
  } else if (r.hard_recovery) {
    hard.error = max_relative_error(r.hard_recovery->c, truth);
    hard.observed = r.hard_recovery->unique ? (*hard.error <= kClose ? "RECOVERED" : "FAILED")
                                            : "NON_UNIQUE";
  } else {
    hard.observed = "ERROR";
    hard.detail = r.hard_error.value_or("no result");
  }

  const double frac = obs ? obs->full_rank_fraction : 0.0;
  if (id == 1) {
    soft.pass = soft.error && *soft.error <= kClose && frac >= kFullRankFraction &&
                soft.predicted == "SOLVABLE";
    soft.detail = "full_rank_fraction=" + fmt(frac);
    const Eigen::VectorXcd ev = spectrum(r.data.problem->M);
    std::vector<double> re{ev(0).real(), ev(1).real()};
    std::sort(re.begin(), re.end());
    const bool eig_ok = std::abs(re[0] - 2.0) <= 1e-12 && std::abs(re[1] - 3.0) <= 1e-12 &&
                        ev.imag().cwiseAbs().maxCoeff() <= 1e-12;
    const bool blowup = r.hard && r.hard->adjoint.blowup_time.has_value();
    hard.pass = hard.observed == "DIVERGED" && blowup && eig_ok && hard.predicted == "DIVERGED";
    hard.detail = "open-loop eig={" + fmt(re[0]) + "," + fmt(re[1]) + "}" +
                  (blowup ? " blowup_t=" + fmt(*r.hard->adjoint.blowup_time) : " no blowup");
  } else if (id == 2) {
    std::size_t rank3 = 0;
    if (obs) {
      for (int k : obs->Qp_rank) rank3 += k == 3 ? 1 : 0;
    }
    const double share = obs ? static_cast<double>(rank3) / static_cast<double>(obs->Qp_rank.size()) : 0.0;
    soft.pass = share >= kFullRankFraction && soft.error && *soft.error >= kFar &&
                soft.predicted == "NOT_SOLVABLE";
    soft.detail = "rank(Qp)=3 share=" + fmt(share);
    const int rank = r.hard_recovery ? r.hard_recovery->reduced_rank : -1;
    hard.pass = rank == 1 && hard.error && *hard.error >= kFar && hard.predicted == "NON_UNIQUE";
    hard.detail = "reduced_rank=" + std::to_string(rank);
  } else {
    soft.pass = soft.error && *soft.error <= kClose;
    soft.detail = "full_rank_fraction=" + fmt(frac);
    const auto& e = v->evidence;
    const double tol = r.policy.threshold(2, 2, 1.0);
    const bool product_neg = e.product && *e.product < 0.0;
    const bool dependent = e.dependence_residual && *e.dependence_residual < tol;
    hard.pass = product_neg && dependent && hard.error && *hard.error >= kFar &&
                hard.predicted == "NON_UNIQUE";
    hard.detail = "product=" + (e.product ? fmt(*e.product) : std::string("n/a")) +
                  " dependence=" +
                  (e.dependence_residual ? fmt(*e.dependence_residual) : std::string("n/a"));
  }
  rows.push_back(soft);
  rows.push_back(hard);
  return rows;
}

std::string format_reproduce_table(const std::vector<ReproduceRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(9) << "example" << std::setw(8) << "method" << std::setw(14)
      << "predicted" << std::setw(12) << "observed" << std::setw(14) << "error" << std::setw(8)
      << "result"
      << "detail\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(9) << r.example << std::setw(8) << r.method << std::setw(14)
        << r.predicted << std::setw(12) << r.observed << std::setw(14)
        << (r.error ? fmt(*r.error) : std::string("-")) << std::setw(6)
        << (r.pass ? "PASS" : "FAIL") << r.detail << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// sweep

double SweepSummary::hard_agreement() const {
  return hard_scored ? static_cast<double>(hard_agree) / static_cast<double>(hard_scored) : 1.0;
}

double SweepSummary::underdamped_soft_rate() const {
  return underdamped ? static_cast<double>(underdamped_soft_ok) / static_cast<double>(underdamped)
                     : 1.0;
}

LtiProblem sample_problem(std::uint64_t seed, Index index) {
  std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                     static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(sseq);
  std::uniform_real_distribution<double> entry(-3.0, 3.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  LtiProblem p;
  p.M.resize(2, 2);
  p.N.resize(2, 1);
  p.D_diag.resize(2);
  p.x0.resize(2);
  for (Index i = 0; i < 4; ++i) p.M(i / 2, i % 2) = entry(rng);
  for (Index i = 0; i < 2; ++i) p.N(i, 0) = entry(rng);
  for (Index i = 0; i < 2; ++i) p.D_diag(i) = 50.0 * (1.0 - unit(rng));
  p.E = 1.0;
  do {
    for (Index i = 0; i < 2; ++i) p.x0(i) = normal(rng);
  } while (p.x0.norm() == 0.0);
  p.x0.normalize();
  return p;
}

std::vector<SweepRow> run_sweep(std::uint64_t seed, Index count) {
  std::vector<SweepRow> rows;
  for (Index i = 0; i < count; ++i) {
    SweepRow row;
    row.index = i;
    row.problem = sample_problem(seed, i);
    try {
      ScenarioConfig config;
      config.problem = row.problem;
      const PipelineResult r = run_pipeline(config);
      row.horizon = r.data.traj.grid.tf;
      row.truncated = r.data.grid_choice->truncated;
      if (r.hard && !r.hard->adjoint.blowup_time) row.tail_ratio = r.hard->adjoint.tail_ratio;
      if (r.verdict) {
        const CaseVerdict& v = *r.verdict;
        row.damping = to_string(v.damping.kind);
        row.sigma = v.evidence.sigma;
        row.omega = v.evidence.omega;
        row.max_real_sum = v.evidence.max_real_sum;
        row.product = v.evidence.product;
        row.borderline = v.evidence.borderline;
        row.hard_branch = v.evidence.hard_branch;
        row.hard_predicted = to_string(v.hard_predicted);
        row.soft_predicted = to_string(v.soft_predicted);
      }
      if (r.comparison) {
        for (const auto& c : r.comparison->rows) {
          if (c.method == "hard") {
            row.hard_observed = c.observed;
            row.hard_error = c.max_rel_error;
            row.hard_agree = c.agree;
          } else {
            row.soft_observed = c.observed;
            row.soft_error = c.max_rel_error;
            row.soft_agree = c.agree;
          }
        }
      }
      if (r.soft_error) row.failure += *r.soft_error;
      if (r.hard_error) row.failure += (row.failure.empty() ? "" : "; ") + *r.hard_error;
    } catch (const std::exception& e) {
      row.failure = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

SweepSummary summarize(const std::vector<SweepRow>& rows) {
  SweepSummary s;
  for (const auto& r : rows) {
    ++s.scenarios;
    if (!r.failure.empty() && r.hard_observed.empty() && r.soft_observed.empty()) {
      ++s.failures;
      continue;
    }
    if (r.hard_agree && !r.borderline) {
      ++s.hard_scored;
      if (*r.hard_agree) ++s.hard_agree;
    }
    if (r.damping == "UnderDamped" && r.soft_error) {
      ++s.underdamped;
      if (*r.soft_error <= 0.01 && r.soft_observed == "RECOVERED") ++s.underdamped_soft_ok;
    }
  }
  return s;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  auto num = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  auto flag = [](const std::optional<bool>& v) {
    return v ? std::string(*v ? "1" : "0") : std::string();
  };
  out << "index,m11,m12,m21,m22,n1,n2,d1,d2,x01,x02,damping,sigma,omega,max_real_sum,product,"
         "borderline,hard_branch,hard_predicted,hard_observed,hard_error,hard_agree,"
         "soft_predicted,soft_observed,soft_error,soft_agree,horizon,truncated,tail_ratio,failure\n";
  for (const auto& r : rows) {
    const auto& p = r.problem;
    out << r.index << ',' << format_number(p.M(0, 0)) << ',' << format_number(p.M(0, 1)) << ','
        << format_number(p.M(1, 0)) << ',' << format_number(p.M(1, 1)) << ','
        << format_number(p.N(0, 0)) << ',' << format_number(p.N(1, 0)) << ','
        << format_number(p.D_diag(0)) << ',' << format_number(p.D_diag(1)) << ','
        << format_number(p.x0(0)) << ',' << format_number(p.x0(1)) << ',' << r.damping << ','
        << num(r.sigma) << ',' << num(r.omega) << ',' << num(r.max_real_sum) << ','
        << num(r.product) << ',' << (r.borderline ? 1 : 0) << ',' << r.hard_branch << ','
        << r.hard_predicted << ',' << r.hard_observed << ',' << num(r.hard_error) << ','
        << flag(r.hard_agree) << ',' << r.soft_predicted << ',' << r.soft_observed << ','
        << num(r.soft_error) << ',' << flag(r.soft_agree) << ',' << format_number(r.horizon)
        << ',' << (r.truncated ? 1 : 0) << ',' << num(r.tail_ratio) << ",\"";
    for (char ch : r.failure) out << (ch == '"' ? '\'' : ch);
    out << "\"\n";
  }
  return out.str();
}

json summary_json(const SweepSummary& s, std::uint64_t seed) {
  return {{"seed", seed},
          {"scenarios", s.scenarios},
          {"failures", s.failures},
          {"hard_scored", s.hard_scored},
          {"hard_agree", s.hard_agree},
          {"hard_agreement", s.hard_agreement()},
          {"underdamped", s.underdamped},
          {"underdamped_soft_ok", s.underdamped_soft_ok},
          {"underdamped_soft_rate", s.underdamped_soft_rate()}};
}

}  // namespace ioc::harness
