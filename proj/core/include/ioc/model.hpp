#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ioc/trajectory.hpp"

namespace ioc {

/// Infinite-horizon LQR problem
///   minimize  integral of x'Dx + u'Eu   subject to  xdot = Mx + Nu, x(0) = x0
/// with diagonal D >= 0, scalar E > 0 and a single input.
struct LtiProblem {
  Eigen::MatrixXd M;
  Eigen::MatrixXd N;
  Eigen::VectorXd D_diag;
  double E = 1.0;
  Eigen::VectorXd x0;
  std::optional<double> horizon;
  std::optional<double> step;
  /// When set, x0 is replaced by the unit closed-loop eigenvector with this
  /// index once the forward problem has been solved.
  std::optional<int> x0_mode;

  Index n() const { return M.rows(); }
  Eigen::MatrixXd D() const { return D_diag.asDiagonal(); }
  /// Weights in basis order [x_1^2, ..., x_n^2, u^2].
  Eigen::VectorXd true_weights() const;

  /// Throws kInvalidProblem / kDimensionMismatch on malformed input.
  void validate() const;
};

LtiProblem load_problem(const std::string& path);
LtiProblem parse_problem(const std::string& json_text);

struct LqrSolution {
  Eigen::MatrixXd Pi;
  Eigen::MatrixXd Theta;  // 1 x n
  Eigen::MatrixXd Mbar;   // M + N Theta
  Eigen::VectorXcd eigenvalues;
  double are_residual = 0.0;
};

struct DampingClass {
  enum class Kind { OverDamped, CriticallyDamped, UnderDamped };
  Kind kind = Kind::OverDamped;
  double sigma = 0.0;
  double omega = 0.0;
  /// Real eigenvalues sorted by decreasing real part (over/critically damped).
  Eigen::VectorXd lambdas;
  /// Unit right eigenvectors matching `lambdas`, column-wise.
  Eigen::MatrixXd eigenvectors;
};

std::string to_string(DampingClass::Kind kind);

inline constexpr double kEigTol = 1e-8;

/// PBH test on every eigenvalue with nonnegative real part.
bool is_stabilizable(const Eigen::MatrixXd& M, const Eigen::MatrixXd& N,
                     double tol = 1e-9);

/// Stabilizing ARE solution from the stable invariant subspace of the
/// Hamiltonian matrix [[M, -N E^-1 N'], [-D, -M']].
LqrSolution solve_are(const LtiProblem& prob);

DampingClass classify_damping(const LqrSolution& sol,
                              double eig_tol = kEigTol);

/// Fixed-step RK4 for xdot = Mbar x from resolved_initial_state;
/// u = Theta x; p_true = Pi x.
Trajectory simulate_closed_loop(const LtiProblem& prob, const LqrSolution& sol,
                                const TimeGrid& grid);

/// Unit right eigenvector of Mbar for real eigenvalue `mode_index` in the
/// decreasing-real-part order, sign fixed so its largest entry is positive.
Eigen::VectorXd eigenmode_initial_state(const LqrSolution& sol,
                                        int mode_index);

/// prob.x0, or the requested closed-loop eigenmode when x0_mode is set.
Eigen::VectorXd resolved_initial_state(const LtiProblem& prob,
                                       const LqrSolution& sol);

/// Horizon and step selection for a forward simulation. `truncated` is set
/// when the horizon cap was hit before the decay target was met.
struct GridChoice {
  TimeGrid grid;
  double decay_rate = 0.0;
  bool truncated = false;
};

inline constexpr double kHorizonCap = 200.0;
inline constexpr double kDecayTarget = 1e-8;

GridChoice default_grid(const LtiProblem& prob, const LqrSolution& sol);

/// LTI-quadratic table for data generated by `prob`; with `sol` the exact
/// closed loop is attached, otherwise it is fitted from the samples.
JacobianTable tabulate_lti_quadratic(const Trajectory& traj,
                                     const LtiProblem& prob);
JacobianTable tabulate_lti_quadratic(const Trajectory& traj,
                                     const LtiProblem& prob,
                                     const LqrSolution& sol);

/// Largest real part of the spectrum of a real matrix.
double max_real_eigenvalue(const Eigen::MatrixXd& a);

}  // namespace ioc
