#include "ioc/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ioc/error.hpp"
#include "json_util.hpp"

namespace ioc {

namespace {

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

// Eigenvalues ordered by decreasing real part, then decreasing imaginary part.
Eigen::VectorXcd sorted_spectrum(const Eigen::MatrixXd& a) {
  Eigen::VectorXcd ev = Eigen::EigenSolver<Eigen::MatrixXd>(a, false).eigenvalues();
  std::vector<std::complex<double>> v(ev.data(), ev.data() + ev.size());
  std::sort(v.begin(), v.end(), [](const auto& l, const auto& r) {
    if (l.real() != r.real()) return l.real() > r.real();
    return l.imag() > r.imag();
  });
  return Eigen::Map<Eigen::VectorXcd>(v.data(), static_cast<Index>(v.size()));
}

// Unit vector spanning the (numerical) null space of a - lambda I.
Eigen::VectorXd real_eigenvector(const Eigen::MatrixXd& a, double lambda) {
  const Index n = a.rows();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      a - lambda * Eigen::MatrixXd::Identity(n, n), Eigen::ComputeFullV);
  Eigen::VectorXd v = svd.matrixV().col(n - 1);
  Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0) v = -v;
  return v.normalized();
}

}  // namespace

Eigen::VectorXd LtiProblem::true_weights() const {
  Eigen::VectorXd c(D_diag.size() + 1);
  c << D_diag, E;
  return c;
}

void LtiProblem::validate() const {
  const Index n = M.rows();
  if (n < 1 || M.cols() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "M must be square with n >= 1");
  }
  if (N.rows() != n || N.cols() != 1) {
    throw Error(ErrorCode::kDimensionMismatch, "N must be n x 1");
  }
  if (D_diag.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "D_diag must have n entries");
  }
  if (x0.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "x0 must have n entries");
  }
  if (!all_finite(M) || !all_finite(N) || !D_diag.allFinite() ||
      !x0.allFinite() || !std::isfinite(E)) {
    throw Error(ErrorCode::kInvalidProblem, "non-finite entry");
  }
  if ((D_diag.array() < 0.0).any()) {
    throw Error(ErrorCode::kInvalidProblem, "D must be nonnegative");
  }
  if (!(E > 0.0)) throw Error(ErrorCode::kInvalidProblem, "E must be positive");
  if (horizon && !(*horizon > 0.0)) {
    throw Error(ErrorCode::kInvalidProblem, "horizon must be positive");
  }
  if (step && !(*step > 0.0)) {
    throw Error(ErrorCode::kInvalidProblem, "step must be positive");
  }
}

LtiProblem parse_problem(const std::string& json_text) {
  using detail::json;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kParseError, "problem must be an object");
  for (const char* key : {"M", "N", "D_diag", "E"}) {
    if (!j.contains(key)) {
      throw Error(ErrorCode::kParseError, std::string("missing field ") + key);
    }
  }
  LtiProblem p;
  p.M = detail::matrix_from_json(j["M"], "M");
  p.N = detail::matrix_from_json(j["N"], "N");
  p.D_diag = detail::vector_from_json(j["D_diag"], "D_diag");
  if (!j["E"].is_number()) throw Error(ErrorCode::kParseError, "E must be a number");
  p.E = j["E"].get<double>();
  if (j.contains("x0")) {
    p.x0 = detail::vector_from_json(j["x0"], "x0");
  } else {
    p.x0 = Eigen::VectorXd::Zero(p.M.rows());
  }
  if (j.contains("horizon") && !j["horizon"].is_null()) p.horizon = j["horizon"].get<double>();
  if (j.contains("step") && !j["step"].is_null()) p.step = j["step"].get<double>();
  if (j.contains("x0_mode") && !j["x0_mode"].is_null()) p.x0_mode = j["x0_mode"].get<int>();
  p.validate();
  return p;
}

LtiProblem load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParseError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem(ss.str());
}

double max_real_eigenvalue(const Eigen::MatrixXd& a) {
  return Eigen::EigenSolver<Eigen::MatrixXd>(a, false).eigenvalues().real().maxCoeff();
}

bool is_stabilizable(const Eigen::MatrixXd& M, const Eigen::MatrixXd& N,
                     double tol) {
  const Index n = M.rows();
  const Eigen::VectorXcd ev = Eigen::EigenSolver<Eigen::MatrixXd>(M, false).eigenvalues();
  for (Index i = 0; i < ev.size(); ++i) {
    if (ev(i).real() < -tol) continue;
    Eigen::MatrixXcd pbh(n, n + N.cols());
    pbh.leftCols(n) = ev(i) * Eigen::MatrixXcd::Identity(n, n) - M.cast<std::complex<double>>();
    pbh.rightCols(N.cols()) = N.cast<std::complex<double>>();
    const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXcd>(pbh).singularValues();
    if (s(n - 1) <= tol * std::max(1.0, s(0))) return false;
  }
  return true;
}

LqrSolution solve_are(const LtiProblem& prob) {
  prob.validate();
  if (!is_stabilizable(prob.M, prob.N)) {
    throw Error(ErrorCode::kNotStabilizable, "(M, N) fails the PBH test");
  }
  const Index n = prob.n();
  const Eigen::MatrixXd D = prob.D();
  Eigen::MatrixXd H(2 * n, 2 * n);
  H << prob.M, -(prob.N * prob.N.transpose()) / prob.E, -D, -prob.M.transpose();

  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(H.cast<std::complex<double>>());
  const Eigen::VectorXcd& ev = es.eigenvalues();
  std::vector<Index> order(static_cast<std::size_t>(2 * n));
  for (Index i = 0; i < 2 * n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return ev(a).real() < ev(b).real(); });
  const double scale = std::max(1.0, H.norm());
  if (!(ev(order[static_cast<std::size_t>(n - 1)]).real() < -1e-12 * scale)) {
    throw Error(ErrorCode::kNoStabilizingSolution,
                "Hamiltonian has eigenvalues on the imaginary axis");
  }
  Eigen::MatrixXcd X(2 * n, n);
  for (Index j = 0; j < n; ++j) X.col(j) = es.eigenvectors().col(order[static_cast<std::size_t>(j)]);
  const Eigen::MatrixXcd X1 = X.topRows(n);
  const Eigen::MatrixXcd X2 = X.bottomRows(n);
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(X1);
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::kNoStabilizingSolution, "stable subspace is not a graph");
  }
  // Pi X1 = X2  <=>  X1' Pi' = X2'.
  const Eigen::MatrixXcd pi_t = X1.transpose().fullPivLu().solve(X2.transpose());
  Eigen::MatrixXd Pi = pi_t.transpose().real();
  Pi = 0.5 * (Pi + Pi.transpose()).eval();

  LqrSolution sol;
  sol.Pi = Pi;
  sol.Theta = -(prob.N.transpose() * Pi) / prob.E;
  sol.Mbar = prob.M + prob.N * sol.Theta;
  sol.eigenvalues = sorted_spectrum(sol.Mbar);
  sol.are_residual = (prob.M.transpose() * Pi + Pi * prob.M + D -
                      Pi * prob.N * prob.N.transpose() * Pi / prob.E)
                         .norm();
  if (!(sol.eigenvalues.real().maxCoeff() < 0.0)) {
    throw Error(ErrorCode::kNoStabilizingSolution, "closed loop is not stable");
  }
  return sol;
}

std::string to_string(DampingClass::Kind kind) {
  switch (kind) {
    case DampingClass::Kind::OverDamped: return "OverDamped";
    case DampingClass::Kind::CriticallyDamped: return "CriticallyDamped";
    case DampingClass::Kind::UnderDamped: return "UnderDamped";
  }
  return "Unknown";
}

DampingClass classify_damping(const LqrSolution& sol, double eig_tol) {
  const Eigen::VectorXcd ev = sorted_spectrum(sol.Mbar);
  DampingClass out;
  const Index n = ev.size();
  if (std::abs(ev(0).imag()) > eig_tol) {
    out.kind = DampingClass::Kind::UnderDamped;
    out.sigma = ev(0).real();
    out.omega = std::abs(ev(0).imag());
    return out;
  }
  std::vector<double> lambdas;
  for (Index i = 0; i < n; ++i) {
    if (std::abs(ev(i).imag()) <= eig_tol) lambdas.push_back(ev(i).real());
  }
  out.lambdas = Eigen::Map<Eigen::VectorXd>(lambdas.data(), static_cast<Index>(lambdas.size()));
  out.eigenvectors.resize(sol.Mbar.rows(), out.lambdas.size());
  for (Index j = 0; j < out.lambdas.size(); ++j) {
    out.eigenvectors.col(j) = real_eigenvector(sol.Mbar, out.lambdas(j));
  }
  out.sigma = out.lambdas(0);
  out.kind = DampingClass::Kind::OverDamped;
  if (n >= 2 && std::abs(ev(1).imag()) <= eig_tol &&
      std::abs(ev(0).real() - ev(1).real()) <=
          eig_tol * std::max(1.0, std::abs(ev(0).real()))) {
    out.kind = DampingClass::Kind::CriticallyDamped;
  }
  return out;
}

Eigen::VectorXd eigenmode_initial_state(const LqrSolution& sol, int mode_index) {
  const Eigen::VectorXcd ev = sorted_spectrum(sol.Mbar);
  if (mode_index < 0 || mode_index >= ev.size()) {
    throw Error(ErrorCode::kInvalidProblem, "mode index out of range");
  }
  const std::complex<double> lambda = ev(mode_index);
  if (std::abs(lambda.imag()) > kEigTol) {
    throw Error(ErrorCode::kNotRealMode, "requested eigenvalue is complex");
  }
  return real_eigenvector(sol.Mbar, lambda.real());
}

Eigen::VectorXd resolved_initial_state(const LtiProblem& prob,
                                       const LqrSolution& sol) {
  if (prob.x0_mode) return eigenmode_initial_state(sol, *prob.x0_mode);
  return prob.x0;
}

Trajectory simulate_closed_loop(const LtiProblem& prob, const LqrSolution& sol,
                                const TimeGrid& grid) {
  if (!(grid.h > 0.0) || grid.count < 1) {
    throw Error(ErrorCode::kInvalidProblem, "grid needs h > 0 and samples");
  }
  const Index n = prob.n();
  const double spectral = sol.eigenvalues.cwiseAbs().maxCoeff();
  if (grid.h * spectral > 0.1) {
    throw Error(ErrorCode::kGridTooCoarse,
                "h * max|lambda(Mbar)| = " + format_number(grid.h * spectral));
  }
  // One RK4 step of a linear ODE is the degree-4 Taylor polynomial of e^{hA}.
  const Eigen::MatrixXd a = grid.h * sol.Mbar;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd step =
      I + a * (I + a * (I + a * (I + a / 4.0) / 3.0) / 2.0);

  Trajectory traj;
  traj.grid = grid;
  traj.x.resize(grid.count, n);
  Eigen::VectorXd x = resolved_initial_state(prob, sol);
  for (Index i = 0; i < grid.count; ++i) {
    traj.x.row(i) = x.transpose();
    x = step * x;
  }
  traj.u = traj.x * sol.Theta.transpose();
  traj.p_true = traj.x * sol.Pi;
  return traj;
}

GridChoice default_grid(const LtiProblem& prob, const LqrSolution& sol) {
  const double sigma_max = sol.eigenvalues.real().maxCoeff();
  const double open_loop = max_real_eigenvalue(prob.M);
  // Slowest envelope among the states and the hard-method adjoint integrand.
  const double rate = sigma_max + std::max(0.0, open_loop);
  GridChoice out;
  out.decay_rate = rate;
  double horizon = kHorizonCap;
  if (rate < 0.0) {
    horizon = std::log(1.0 / kDecayTarget) / -rate;
  }
  if (horizon > kHorizonCap) {
    horizon = kHorizonCap;
    out.truncated = true;
  } else if (rate >= 0.0) {
    out.truncated = true;
  }
  if (prob.horizon) {
    horizon = *prob.horizon;
    out.truncated = rate >= 0.0 || std::exp(rate * horizon) > kDecayTarget;
  }
  const double spectral = sol.eigenvalues.cwiseAbs().maxCoeff();
  double h = std::min(0.001, 0.05 / spectral);
  if (prob.step) h = *prob.step;
  out.grid = TimeGrid::uniform(0.0, horizon, h);
  return out;
}

JacobianTable tabulate_lti_quadratic(const Trajectory& traj,
                                     const LtiProblem& prob) {
  return tabulate_lti_quadratic(traj, prob.M, prob.N);
}

JacobianTable tabulate_lti_quadratic(const Trajectory& traj,
                                     const LtiProblem& prob,
                                     const LqrSolution& sol) {
  return tabulate_lti_quadratic(traj, prob.M, prob.N, sol.Theta);
}

}  // namespace ioc
