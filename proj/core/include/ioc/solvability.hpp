#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ioc/hard_ioc.hpp"
#include "ioc/model.hpp"
#include "ioc/series.hpp"
#include "ioc/soft_ioc.hpp"
#include "ioc/trajectory.hpp"

namespace ioc {

/// Column selectors that drop the known-weight coordinates. Ns acts on
/// z = [c; p] (k + n entries), Nh on c (k entries).
struct KernelSelectors {
  Eigen::MatrixXd Ns;
  Eigen::MatrixXd Nh;
  std::vector<Index> soft_free;  // coordinates kept, ascending
  std::vector<Index> hard_free;
};

KernelSelectors kernel_selectors(Index k, Index n,
                                 const std::vector<Index>& known_indices);

/// Q_o for one LTI-quadratic sample with m = 1, built from the exact state
/// derivatives X = [x, Mbar x, ..., Mbar^{l-1} x] (n x l, l = k + n):
///   bottom block i = (-M)^{i-1} N
///   top block i    = psi^(i-1) - sum_{j<i-1} Phi^(j) bottom_{i-1-j}
/// where Phi^(j) = d^j/dt^j grad_x_phi and psi^(j) = d^j/dt^j grad_u_phi.
Eigen::MatrixXd lti_observability_matrix(const Eigen::MatrixXd& M,
                                         const Eigen::MatrixXd& N,
                                         const Eigen::MatrixXd& Theta,
                                         const Eigen::MatrixXd& X);

struct ObservabilityOptions {
  /// Right end T of the rank window [t0, T]; the whole grid when unset.
  std::optional<double> window_end;
  /// Finite differences even when the table carries a closed-loop model.
  bool force_generic = false;
  RankPolicy policy;
};

/// Q_o(t_i) over the rank window and the per-sample rank / conditioning of
/// Q_p = Ns' Q_o Q_o' Ns. Ranks are read from the singular values of Ns'Q_o
/// (squared), which gives the same decision as forming Q_p.
struct ObservabilitySeries {
  MatrixSeries Qo;  // (k + n) x (l m), one per window sample
  std::vector<int> Qp_rank;
  std::vector<double> Qp_cond;
  int full_rank = 0;
  double window_end = 0.0;
  double full_rank_fraction = 0.0;
  bool analytic = false;
};

ObservabilitySeries observability_series(const ResidualMatrices& res,
                                         const JacobianTable& table,
                                         const TimeGrid& grid,
                                         const KernelSelectors& selectors,
                                         const ObservabilityOptions& options = {});

/// Default window end min(tf, t0 + 5 / |sigma_max|).
double default_rank_window(const TimeGrid& grid, double sigma_max);

inline constexpr double kFullRankFraction = 0.99;
inline constexpr double kModeAngleTol = 1e-8;
inline constexpr double kBorderlineBand = 1e-6;

enum class SoftVerdict { Solvable, NotSolvable, Unknown };
enum class HardVerdict {
  Solvable,
  NonUnique,
  Diverged,
  InitialStateDependent,
  Unknown
};

std::string to_string(SoftVerdict v);
std::string to_string(HardVerdict v);

/// Evidence behind a verdict. Optional fields are filled only on the branch
/// that produced them.
struct CaseEvidence {
  std::string soft_basis;   // single_mode_bound | observability_rank | numerical_conjecture | none
  // single_mode_{stable,unstable} | shifted_unstable | sign_positive |
  // sign_state_dependent | mixed_modes_{stable,unstable}
  std::string hard_branch;
  std::optional<int> mode_index;
  std::optional<double> mode_angle;
  std::optional<double> lambda1;
  std::optional<Eigen::VectorXd> V1;
  std::optional<bool> v11_nonzero;
  std::optional<bool> v12_nonzero;
  std::optional<bool> theta_v1_nonzero;
  std::optional<Eigen::VectorXcd> lambda_bar;  // spectrum of lambda1 I + M
  std::optional<Eigen::VectorXcd> lambda_hat;  // spectrum of M
  std::optional<double> sigma;
  std::optional<double> omega;
  std::optional<double> max_real_sum;  // max Re of lambda_bar or lambda_hat + sigma
  std::optional<Eigen::Vector2d> delta;
  std::optional<Eigen::Vector2d> mu;
  std::optional<double> product;
  std::optional<Eigen::Vector2d> HrN;
  std::optional<Eigen::Vector2d> HcN;
  std::optional<double> dependence_residual;
  std::optional<double> full_rank_fraction;
  bool borderline = false;
};

struct CaseVerdict {
  DampingClass damping;
  SoftVerdict soft_predicted = SoftVerdict::Unknown;
  HardVerdict hard_predicted = HardVerdict::Unknown;
  /// Structural verdict before refinement with the actual initial state.
  HardVerdict hard_general = HardVerdict::Unknown;
  CaseEvidence evidence;
};

/// Index of the real mode whose eigenvector spans x0 within `angle_tol`
/// radians, together with that angle.
std::optional<std::pair<int, double>> single_real_mode(
    const DampingClass& damping, const Eigen::VectorXd& x0,
    double angle_tol = kModeAngleTol);

/// Rank bound for over- and critically damped closed loops started on one
/// real mode. Throws kNotApplicable otherwise.
CaseVerdict soft_case_overdamped(const LqrSolution& sol,
                                 const LtiProblem& prob);

/// Second-order eigen-structure analysis of the hard method. Throws
/// kNotSecondOrder unless n = 2.
CaseVerdict hard_case_analysis(const LqrSolution& sol, const LtiProblem& prob,
                               const Eigen::VectorXd& x0,
                               const RankPolicy& policy = {});

/// Both predictions. The soft side uses, in order: the single-mode
/// single-mode bound, the observability rank test when `obs` is given, and the
/// numerical evidence for under-damped loops.
CaseVerdict diagnose_case(const LqrSolution& sol, const LtiProblem& prob,
                          const Eigen::VectorXd& x0,
                          const ObservabilitySeries* obs = nullptr,
                          const RankPolicy& policy = {});

/// delta = ((M + sigma I)^2 / omega + omega I)^{-1} N, mu = (M + sigma I) delta
/// / omega, HrN = diag(x10, x20) mu, HcN = diag(-x20, x10) delta.
struct DeltaMu {
  Eigen::Vector2d delta;
  Eigen::Vector2d mu;
  Eigen::Vector2d HrN;
  Eigen::Vector2d HcN;
  double product = 0.0;
  /// s_min / s_max of [HrN, HcN].
  double dependence_residual = 0.0;
};

DeltaMu delta_mu_terms(const Eigen::MatrixXd& M, const Eigen::MatrixXd& N,
                       double sigma, double omega, const Eigen::Vector2d& x0);

/// Cosine / sine split of Q_o' for the canonical under-damped closed loop
/// Mbar = [[sigma, omega], [-omega, sigma]] started at x0:
///   Q_o'(t) = [2 e^{sigma t}(Qcc cos(omega t) + Qss sin(omega t)), qc].
struct UnderdampedTerms {
  Eigen::MatrixXd Qcc;  // l x k
  Eigen::MatrixXd Qss;  // l x k
  Eigen::MatrixXd qc;   // l x n
};

UnderdampedTerms underdamped_observability_terms(const Eigen::MatrixXd& M,
                                                 const Eigen::MatrixXd& N,
                                                 const Eigen::MatrixXd& Theta,
                                                 double sigma, double omega,
                                                 const Eigen::Vector2d& x0);

/// Rank of Y_a, the stack of W1(t_i) Nh at `points` sample indices spread
/// evenly over [0, last].
int sampled_rank(const MatrixSeries& W1, const Eigen::MatrixXd& Nh,
                 Index points, Index last, const RankPolicy& policy = {});

struct HardOutcome {
  bool diverged = false;
  std::optional<HardRecovery> recovery;
};

struct ComparisonRow {
  std::string method;
  std::string predicted;
  std::string observed;  // RECOVERED | FAILED | NON_UNIQUE | DIVERGED | ERROR
  std::optional<double> max_rel_error;
  std::optional<bool> agree;  // unset when the prediction is not decisive
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
};

double max_relative_error(const Eigen::VectorXd& c, const Eigen::VectorXd& truth);

/// A recovery counts as RECOVERED when it is unique and within `tolerance`
/// per component. SOLVABLE agrees with RECOVERED, NOT_SOLVABLE / NON_UNIQUE
/// with NON_UNIQUE or FAILED, DIVERGED with DIVERGED.
ComparisonReport predict_vs_empirical(const CaseVerdict& verdict,
                                      const std::optional<SoftRecovery>& soft,
                                      const std::optional<HardOutcome>& hard,
                                      const Eigen::VectorXd& truth,
                                      double tolerance = 0.01);

}  // namespace ioc
