#include "ioc/solvability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "ioc/error.hpp"

namespace ioc {

KernelSelectors kernel_selectors(Index k, Index n,
                                 const std::vector<Index>& known_indices) {
  std::vector<bool> known(static_cast<std::size_t>(k), false);
  for (Index i : known_indices) {
    if (i < 0 || i >= k) throw Error(ErrorCode::kInvalidProblem, "known index out of range");
    known[static_cast<std::size_t>(i)] = true;
  }
  KernelSelectors s;
  for (Index i = 0; i < k; ++i) {
    if (!known[static_cast<std::size_t>(i)]) s.hard_free.push_back(i);
  }
  if (s.hard_free.empty()) throw Error(ErrorCode::kAllKnown, "every weight is known");
  s.soft_free = s.hard_free;
  for (Index i = 0; i < n; ++i) s.soft_free.push_back(k + i);
  s.Nh = Eigen::MatrixXd::Zero(k, static_cast<Index>(s.hard_free.size()));
  for (std::size_t c = 0; c < s.hard_free.size(); ++c) s.Nh(s.hard_free[c], static_cast<Index>(c)) = 1.0;
  s.Ns = Eigen::MatrixXd::Zero(k + n, static_cast<Index>(s.soft_free.size()));
  for (std::size_t c = 0; c < s.soft_free.size(); ++c) s.Ns(s.soft_free[c], static_cast<Index>(c)) = 1.0;
  return s;
}

Eigen::MatrixXd lti_observability_matrix(const Eigen::MatrixXd& M,
                                         const Eigen::MatrixXd& N,
                                         const Eigen::MatrixXd& Theta,
                                         const Eigen::MatrixXd& X) {
  const Index n = M.rows();
  const Index k = n + 1;
  const Index l = X.cols();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(k + n, l);
  // bottom.col(r - 1) holds bottom block r.
  Eigen::MatrixXd bottom(n, l);
  bottom.col(0) = N.col(0);
  for (Index r = 1; r < l; ++r) bottom.col(r) = -M * bottom.col(r - 1);
  for (Index i = 1; i <= l; ++i) {
    Eigen::VectorXd top = Eigen::VectorXd::Zero(k);
    top(n) = 2.0 * Theta.row(0).dot(X.col(i - 1));
    for (Index j = 0; j + 2 <= i; ++j) {
      // Phi^(j) b = 2 diag(X_j) b on the state rows; the u row of Phi is 0.
      top.head(n) -= 2.0 * X.col(j).cwiseProduct(bottom.col(i - 2 - j));
    }
    Q.col(i - 1).head(k) = top;
    Q.col(i - 1).tail(n) = bottom.col(i - 1);
  }
  return Q;
}

double default_rank_window(const TimeGrid& grid, double sigma_max) {
  if (sigma_max == 0.0) return grid.tf;
  return std::min(grid.tf, grid.t0 + 5.0 / std::abs(sigma_max));
}

ObservabilitySeries observability_series(const ResidualMatrices& res,
                                         const JacobianTable& table,
                                         const TimeGrid& grid,
                                         const KernelSelectors& sel,
                                         const ObservabilityOptions& options) {
  if (res.count() != grid.count || table.count() != grid.count) {
    throw Error(ErrorCode::kDimensionMismatch, "series do not match the grid");
  }
  const Index d = res.dim();
  const Index m = res.m;
  const Index l = d;
  if (sel.Ns.rows() != d) throw Error(ErrorCode::kDimensionMismatch, "Ns has the wrong size");
  const double end = options.window_end.value_or(grid.tf);
  const Index wc = grid.index_at(end) + 1;

  ObservabilitySeries out;
  out.window_end = grid.time(wc - 1);
  out.Qo = MatrixSeries(d, l * m, wc);
  out.analytic = table.lti.has_value() && !options.force_generic && m == 1 &&
                 table.k == table.n + 1;
  if (out.analytic) {
    const ClosedLoopModel& cl = *table.lti;
    Eigen::MatrixXd X(table.n, l);
    for (Index i = 0; i < wc; ++i) {
      X.col(0) = cl.x.row(i).transpose();
      for (Index j = 1; j < l; ++j) X.col(j) = cl.Mbar * X.col(j - 1);
      out.Qo[i] = lti_observability_matrix(cl.M, cl.N, cl.Theta, X);
    }
  } else {
    // Q_{o,1} = C', Q_{o,i} = A' Q_{o,i-1} + d/dt Q_{o,i-1}.
    MatrixSeries level(d, m, wc);
    for (Index i = 0; i < wc; ++i) level[i] = res.C[i].transpose();
    TimeGrid window = grid;
    window.count = wc;
    window.tf = out.window_end;
    for (Index b = 0; b < l; ++b) {
      for (Index i = 0; i < wc; ++i) out.Qo[i].middleCols(b * m, m) = level[i];
      if (b + 1 == l) break;
      const MatrixSeries dot = derivative_series(level, window);
      MatrixSeries next(d, m, wc);
      for (Index i = 0; i < wc; ++i) {
        next[i] = res.A(i).transpose() * level[i] + dot[i];
      }
      level = std::move(next);
    }
  }

  out.full_rank = static_cast<int>(sel.Ns.cols());
  out.Qp_rank.resize(static_cast<std::size_t>(wc));
  out.Qp_cond.resize(static_cast<std::size_t>(wc));
  Index full = 0;
  for (Index i = 0; i < wc; ++i) {
    const Eigen::MatrixXd y = sel.Ns.transpose() * out.Qo[i];
    Eigen::VectorXd s = Eigen::VectorXd::Zero(y.rows());
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(y).singularValues();
    s.head(sv.size()) = sv.array().square().matrix();
    const int rank = options.policy.rank(s, y.rows(), y.rows());
    out.Qp_rank[static_cast<std::size_t>(i)] = rank;
    const double smin = s.minCoeff();
    out.Qp_cond[static_cast<std::size_t>(i)] =
        smin > 0.0 ? s.maxCoeff() / smin : std::numeric_limits<double>::infinity();
    if (rank == out.full_rank) ++full;
  }
  out.full_rank_fraction = static_cast<double>(full) / static_cast<double>(wc);
  return out;
}

std::string to_string(SoftVerdict v) {
  switch (v) {
    case SoftVerdict::Solvable: return "SOLVABLE";
    case SoftVerdict::NotSolvable: return "NOT_SOLVABLE";
    case SoftVerdict::Unknown: return "UNKNOWN";
  }
  return "UNKNOWN";
}

std::string to_string(HardVerdict v) {
  switch (v) {
    case HardVerdict::Solvable: return "SOLVABLE";
    case HardVerdict::NonUnique: return "NON_UNIQUE";
    case HardVerdict::Diverged: return "DIVERGED";
    case HardVerdict::InitialStateDependent: return "INITIAL_STATE_DEPENDENT";
    case HardVerdict::Unknown: return "UNKNOWN";
  }
  return "UNKNOWN";
}

std::optional<std::pair<int, double>> single_real_mode(
    const DampingClass& damping, const Eigen::VectorXd& x0, double angle_tol) {
  if (damping.kind == DampingClass::Kind::UnderDamped) return std::nullopt;
  const double norm = x0.norm();
  if (!(norm > 0.0)) return std::nullopt;
  const Eigen::VectorXd xh = x0 / norm;
  std::optional<std::pair<int, double>> best;
  for (Index j = 0; j < damping.eigenvectors.cols(); ++j) {
    const Eigen::VectorXd v = damping.eigenvectors.col(j);
    const double s = (xh - v.dot(xh) * v).norm();
    const double angle = std::asin(std::min(1.0, s));
    if (!best || angle < best->second) best = std::make_pair(static_cast<int>(j), angle);
  }
  if (best && best->second <= angle_tol) return best;
  return std::nullopt;
}

CaseVerdict soft_case_overdamped(const LqrSolution& sol, const LtiProblem& prob) {
  CaseVerdict v;
  v.damping = classify_damping(sol);
  if (v.damping.kind == DampingClass::Kind::UnderDamped) {
    throw Error(ErrorCode::kNotApplicable, "closed loop is under-damped");
  }
  const Eigen::VectorXd x0 = resolved_initial_state(prob, sol);
  const auto mode = single_real_mode(v.damping, x0);
  if (!mode) throw Error(ErrorCode::kNotApplicable, "x0 is not a single real mode");
  const Eigen::VectorXd V1 = v.damping.eigenvectors.col(mode->first);
  CaseEvidence& e = v.evidence;
  e.soft_basis = "single_mode_bound";
  e.mode_index = mode->first;
  e.mode_angle = mode->second;
  e.lambda1 = v.damping.lambdas(mode->first);
  e.V1 = V1;
  const double tiny = 1e-8;
  e.v11_nonzero = std::abs(V1(0)) > tiny;
  if (V1.size() > 1) e.v12_nonzero = std::abs(V1(1)) > tiny;
  e.theta_v1_nonzero = std::abs(sol.Theta.row(0).dot(V1)) > tiny * std::max(1.0, sol.Theta.norm());
  v.soft_predicted = SoftVerdict::NotSolvable;
  return v;
}

DeltaMu delta_mu_terms(const Eigen::MatrixXd& M, const Eigen::MatrixXd& N,
                       double sigma, double omega, const Eigen::Vector2d& x0) {
  const Eigen::Matrix2d S = M + sigma * Eigen::Matrix2d::Identity();
  const Eigen::Matrix2d K = S * S / omega + omega * Eigen::Matrix2d::Identity();
  DeltaMu out;
  out.delta = K.partialPivLu().solve(Eigen::Vector2d(N.col(0)));
  out.mu = S * out.delta / omega;
  out.HrN = Eigen::Vector2d(x0(0) * out.mu(0), x0(1) * out.mu(1));
  out.HcN = Eigen::Vector2d(-x0(1) * out.delta(0), x0(0) * out.delta(1));
  out.product = out.delta(0) * out.mu(1) * out.delta(1) * out.mu(0);
  Eigen::Matrix2d H;
  H << out.HrN, out.HcN;
  const Eigen::Vector2d s = Eigen::JacobiSVD<Eigen::Matrix2d>(H).singularValues();
  out.dependence_residual = s(0) > 0.0 ? s(1) / s(0) : 0.0;
  return out;
}

CaseVerdict hard_case_analysis(const LqrSolution& sol, const LtiProblem& prob,
                               const Eigen::VectorXd& x0,
                               const RankPolicy& policy) {
  if (prob.n() != 2) {
    throw Error(ErrorCode::kNotSecondOrder, "case analysis needs n = 2");
  }
  CaseVerdict v;
  v.damping = classify_damping(sol);
  CaseEvidence& e = v.evidence;
  const Eigen::VectorXcd lambda_hat =
      Eigen::EigenSolver<Eigen::MatrixXd>(prob.M, false).eigenvalues();
  e.lambda_hat = lambda_hat;

  if (v.damping.kind != DampingClass::Kind::UnderDamped) {
    const auto mode = single_real_mode(v.damping, x0);
    if (!mode) {
      // Several real modes excited: the adjoint integrand grows like the
      // slowest one, so the single-mode sign test carries over with the
      // dominant eigenvalue; two independent modes give a full-rank W.
      const double top = lambda_hat.real().maxCoeff() + v.damping.lambdas(0);
      e.max_real_sum = top;
      e.borderline = std::abs(top) <= kBorderlineBand;
      if (top < 0.0) {
        e.hard_branch = "mixed_modes_stable";
        v.hard_predicted = v.hard_general = HardVerdict::Solvable;
      } else {
        e.hard_branch = "mixed_modes_unstable";
        v.hard_predicted = v.hard_general = HardVerdict::Diverged;
      }
      return v;
    }
    const double l1 = v.damping.lambdas(mode->first);
    e.mode_index = mode->first;
    e.mode_angle = mode->second;
    e.lambda1 = l1;
    e.V1 = Eigen::VectorXd(v.damping.eigenvectors.col(mode->first));
    const Eigen::VectorXcd lambda_bar =
        lambda_hat + Eigen::VectorXcd::Constant(lambda_hat.size(), l1);
    e.lambda_bar = lambda_bar;
    const double top = lambda_bar.real().maxCoeff();
    e.max_real_sum = top;
    e.borderline = std::abs(top) <= kBorderlineBand;
    if (top < 0.0) {
      e.hard_branch = "single_mode_stable";
      v.hard_predicted = v.hard_general = HardVerdict::NonUnique;
    } else {
      e.hard_branch = "single_mode_unstable";
      v.hard_predicted = v.hard_general = HardVerdict::Diverged;
    }
    return v;
  }

  const double sigma = v.damping.sigma;
  const double omega = v.damping.omega;
  e.sigma = sigma;
  e.omega = omega;
  const double top = lambda_hat.real().maxCoeff() + sigma;
  e.max_real_sum = top;
  e.borderline = std::abs(top) <= kBorderlineBand;
  if (top > 0.0) {
    e.hard_branch = "shifted_unstable";
    v.hard_predicted = v.hard_general = HardVerdict::Diverged;
    return v;
  }
  const DeltaMu dm = delta_mu_terms(prob.M, prob.N, sigma, omega, x0.head<2>());
  e.delta = dm.delta;
  e.mu = dm.mu;
  e.product = dm.product;
  e.HrN = dm.HrN;
  e.HcN = dm.HcN;
  e.dependence_residual = dm.dependence_residual;
  e.borderline = e.borderline || std::abs(dm.product) <= kBorderlineBand;
  if (dm.product > 0.0) {
    e.hard_branch = "sign_positive";
    v.hard_predicted = v.hard_general = HardVerdict::Solvable;
    return v;
  }
  e.hard_branch = "sign_state_dependent";
  v.hard_general = HardVerdict::InitialStateDependent;
  const double tol = policy.threshold(2, 2, 1.0);
  v.hard_predicted = dm.dependence_residual <= tol ? HardVerdict::NonUnique
                                                   : HardVerdict::Solvable;
  return v;
}

CaseVerdict diagnose_case(const LqrSolution& sol, const LtiProblem& prob,
                          const Eigen::VectorXd& x0,
                          const ObservabilitySeries* obs,
                          const RankPolicy& policy) {
  CaseVerdict v;
  if (prob.n() == 2) {
    v = hard_case_analysis(sol, prob, x0, policy);
  } else {
    v.damping = classify_damping(sol);
    v.evidence.hard_branch = "not_second_order";
  }
  LtiProblem at_x0 = prob;
  at_x0.x0 = x0;
  at_x0.x0_mode.reset();
  CaseEvidence& e = v.evidence;
  if (obs) e.full_rank_fraction = obs->full_rank_fraction;
  try {
    const CaseVerdict soft = soft_case_overdamped(sol, at_x0);
    v.soft_predicted = soft.soft_predicted;
    e.soft_basis = soft.evidence.soft_basis;
    e.mode_index = soft.evidence.mode_index;
    e.mode_angle = soft.evidence.mode_angle;
    e.lambda1 = soft.evidence.lambda1;
    e.V1 = soft.evidence.V1;
    e.v11_nonzero = soft.evidence.v11_nonzero;
    e.v12_nonzero = soft.evidence.v12_nonzero;
    e.theta_v1_nonzero = soft.evidence.theta_v1_nonzero;
    return v;
  } catch (const Error& err) {
    if (err.code() != ErrorCode::kNotApplicable) throw;
  }
  if (obs && obs->full_rank_fraction >= kFullRankFraction) {
    v.soft_predicted = SoftVerdict::Solvable;
    e.soft_basis = "observability_rank";
  } else if (!obs && v.damping.kind == DampingClass::Kind::UnderDamped) {
    v.soft_predicted = SoftVerdict::Solvable;
    e.soft_basis = "numerical_conjecture";
  } else {
    v.soft_predicted = SoftVerdict::Unknown;
    e.soft_basis = "none";
  }
  return v;
}

UnderdampedTerms underdamped_observability_terms(const Eigen::MatrixXd& M,
                                                 const Eigen::MatrixXd& N,
                                                 const Eigen::MatrixXd& Theta,
                                                 double sigma, double omega,
                                                 const Eigen::Vector2d& x0) {
  const Index n = 2;
  const Index k = 3;
  const Index l = k + n;
  Eigen::Matrix2d Mbar;
  Mbar << sigma, omega, -omega, sigma;
  Eigen::Matrix2d J;
  J << 0.0, 1.0, -1.0, 0.0;
  std::vector<Eigen::Vector2d> xc(static_cast<std::size_t>(l));
  std::vector<Eigen::Matrix2d> mpow(static_cast<std::size_t>(l));
  xc[0] = x0;
  mpow[0].setIdentity();
  for (Index j = 1; j < l; ++j) {
    xc[static_cast<std::size_t>(j)] = Mbar * xc[static_cast<std::size_t>(j - 1)];
    mpow[static_cast<std::size_t>(j)] = M * mpow[static_cast<std::size_t>(j - 1)];
  }
  UnderdampedTerms out;
  out.Qcc = Eigen::MatrixXd::Zero(l, k);
  out.Qss = Eigen::MatrixXd::Zero(l, k);
  out.qc = Eigen::MatrixXd::Zero(l, n);
  const Eigen::Vector2d Nv = N.col(0);
  for (Index i = 1; i <= l; ++i) {
    const auto row = i - 1;
    const double sign = (i % 2 == 1) ? 1.0 : -1.0;  // (-1)^{i-1}
    out.qc.row(row) = (sign * mpow[static_cast<std::size_t>(i - 1)] * Nv).transpose();
    Eigen::Vector2d ac = Eigen::Vector2d::Zero();
    Eigen::Vector2d as = Eigen::Vector2d::Zero();
    for (Index r = 2; r <= i; ++r) {
      const double s = ((i - r + 1) % 2 == 0) ? 1.0 : -1.0;  // (-1)^{i-r+1}
      const Eigen::Vector2d mn = mpow[static_cast<std::size_t>(i - r)] * Nv;
      const Eigen::Vector2d c = xc[static_cast<std::size_t>(r - 2)];
      const Eigen::Vector2d sn = J * c;
      ac += s * c.cwiseProduct(mn);
      as += s * sn.cwiseProduct(mn);
    }
    out.Qcc.row(row) << ac.transpose(), Theta.row(0).dot(xc[static_cast<std::size_t>(i - 1)]);
    out.Qss.row(row) << as.transpose(),
        Theta.row(0).dot(J * xc[static_cast<std::size_t>(i - 1)]);
  }
  return out;
}

int sampled_rank(const MatrixSeries& W1, const Eigen::MatrixXd& Nh,
                 Index points, Index last, const RankPolicy& policy) {
  if (points < 1 || last >= W1.count()) {
    throw Error(ErrorCode::kInvalidProblem, "bad sampling request");
  }
  const Index m = W1.rows();
  Eigen::MatrixXd Y(points * m, Nh.cols());
  for (Index j = 0; j < points; ++j) {
    const Index i = points == 1 ? 0
                                : static_cast<Index>(std::llround(
                                      static_cast<double>(j * last) /
                                      static_cast<double>(points - 1)));
    Y.middleRows(j * m, m) = W1[i] * Nh;
  }
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(Y).singularValues();
  return policy.rank(s, Y.rows(), Y.cols());
}

double max_relative_error(const Eigen::VectorXd& c, const Eigen::VectorXd& truth) {
  double worst = 0.0;
  for (Index i = 0; i < truth.size(); ++i) {
    const double diff = std::abs(c(i) - truth(i));
    const double rel = truth(i) != 0.0 ? diff / std::abs(truth(i)) : diff;
    worst = std::max(worst, std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity());
  }
  return worst;
}

ComparisonReport predict_vs_empirical(const CaseVerdict& verdict,
                                      const std::optional<SoftRecovery>& soft,
                                      const std::optional<HardOutcome>& hard,
                                      const Eigen::VectorXd& truth,
                                      double tolerance) {
  ComparisonReport report;
  auto classify = [&](const Eigen::VectorXd& c, bool unique, ComparisonRow& row) {
    row.max_rel_error = max_relative_error(c, truth);
    if (!unique) {
      row.observed = "NON_UNIQUE";
    } else {
      row.observed = *row.max_rel_error <= tolerance ? "RECOVERED" : "FAILED";
    }
  };
  if (soft) {
    ComparisonRow row;
    row.method = "soft";
    row.predicted = to_string(verdict.soft_predicted);
    classify(soft->c, soft->unique, row);
    if (verdict.soft_predicted == SoftVerdict::Solvable) {
      row.agree = row.observed == "RECOVERED";
    } else if (verdict.soft_predicted == SoftVerdict::NotSolvable) {
      row.agree = row.observed != "RECOVERED";
    }
    report.rows.push_back(row);
  }
  if (hard) {
    ComparisonRow row;
    row.method = "hard";
    row.predicted = to_string(verdict.hard_predicted);
    if (hard->diverged) {
      row.observed = "DIVERGED";
    } else if (hard->recovery) {
      classify(hard->recovery->c, hard->recovery->unique, row);
    } else {
      row.observed = "ERROR";
    }
    switch (verdict.hard_predicted) {
      case HardVerdict::Diverged:
        row.agree = row.observed == "DIVERGED";
        break;
      case HardVerdict::NonUnique:
        row.agree = row.observed == "NON_UNIQUE" || row.observed == "FAILED";
        break;
      case HardVerdict::Solvable:
        row.agree = row.observed == "RECOVERED";
        break;
      default:
        break;
    }
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace ioc
