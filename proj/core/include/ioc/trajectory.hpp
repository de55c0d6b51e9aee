#pragma once

#include <functional>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "ioc/series.hpp"

namespace ioc {

struct TimeGrid {
  double t0 = 0.0;
  double tf = 0.0;
  double h = 0.0;
  Index count = 0;

  /// count = round((tf - t0) / h) + 1; tf is snapped to t0 + (count - 1) h.
  static TimeGrid uniform(double t0, double tf, double h);

  double time(Index i) const { return t0 + static_cast<double>(i) * h; }
  /// Index of the last sample with time <= t.
  Index index_at(double t) const;
};

struct Trajectory {
  TimeGrid grid;
  Eigen::MatrixXd x;  // count x n
  Eigen::MatrixXd u;  // count x m
  std::optional<Eigen::MatrixXd> p_true;

  Index n() const { return x.cols(); }
  Index m() const { return u.cols(); }
  void validate() const;
};

/// Closed-loop structure of an LTI-quadratic data set: xdot = Mbar x and
/// u = Theta x. It enables exact time derivatives of the basis gradients.
struct ClosedLoopModel {
  Eigen::MatrixXd M;
  Eigen::MatrixXd N;
  Eigen::MatrixXd Mbar;
  Eigen::MatrixXd Theta;
  Eigen::MatrixXd x;  // count x n state samples the table was built from
};

/// Sampled Jacobians. Every gradient is the plain Jacobian of its function:
///   grad_x_phi = d phi / dx  (k x n),   grad_u_phi = d phi / du  (k x m),
///   grad_x_f   = d f / dx    (n x n),   grad_u_f   = d f / du    (n x m).
struct JacobianTable {
  Index k = 0;
  Index n = 0;
  Index m = 0;
  MatrixSeries grad_x_phi;
  MatrixSeries grad_u_phi;
  MatrixSeries grad_x_f;
  MatrixSeries grad_u_f;
  std::optional<ClosedLoopModel> lti;

  Index count() const { return grad_x_phi.count(); }
};

/// Basis [x_1^2, ..., x_n^2, u^2] with f = Mx + Nu. When `closed_loop` is
/// given (Mbar, Theta) it is attached for analytic differentiation; otherwise
/// Theta is fitted to the samples by least squares.
JacobianTable tabulate_lti_quadratic(
    const Trajectory& traj, const Eigen::MatrixXd& M, const Eigen::MatrixXd& N,
    const std::optional<Eigen::MatrixXd>& theta = std::nullopt);

struct JacobianCallbacks {
  using Fn = std::function<Eigen::MatrixXd(double t, const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& u)>;
  Index k = 0;
  Fn grad_x_phi;
  Fn grad_u_phi;
  Fn grad_x_f;
  Fn grad_u_f;
};

JacobianTable tabulate_general(const Trajectory& traj,
                               const JacobianCallbacks& callbacks);

/// d/dt of every entry: 4th-order central differences inside, 4th-order
/// one-sided stencils on the two samples nearest each edge.
MatrixSeries derivative_series(const MatrixSeries& samples,
                               const TimeGrid& grid);

/// Exact j-th derivatives x^(j)(t_i) = Mbar^j x(t_i), j = 0..order, as a
/// series of n x (order + 1) matrices.
MatrixSeries closed_loop_state_derivatives(const ClosedLoopModel& model,
                                           int order);

enum class TrajectoryFormat { Csv, Json };

void save_trajectory(const Trajectory& traj, const std::string& path,
                     TrajectoryFormat format);
Trajectory load_trajectory(const std::string& path, TrajectoryFormat format);
TrajectoryFormat format_from_path(const std::string& path);

/// 17 significant digits, the fixed formatting used by every report.
std::string format_number(double value);

}  // namespace ioc
