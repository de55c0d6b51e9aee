#pragma once

#include <Eigen/Dense>

#include "ioc/series.hpp"
#include "ioc/trajectory.hpp"

namespace ioc {

/// Residual LQR of the soft-constrained method. With z = [c; p] and v = pdot
/// the residual is r = F z + G v where
///   F = [[grad_x_phi', grad_x_f'], [grad_u_phi', grad_u_f']],  G = [I; 0].
/// Only F and C are stored; the remaining matrices are formed per sample:
///   Q1 = F'F, S = F'G, R = G'G = I, A = -B S', Q = Q1 - S S' = C'C,
///   C = [grad_u_phi', grad_u_f'], B = [0; I].
struct ResidualMatrices {
  Index k = 0;
  Index n = 0;
  Index m = 0;
  MatrixSeries F;  // (n + m) x (k + n)
  MatrixSeries C;  // m x (k + n)
  Eigen::MatrixXd G;
  Eigen::MatrixXd B;

  Index dim() const { return k + n; }
  Index count() const { return F.count(); }

  Eigen::MatrixXd A(Index i) const { return A_from(F[i]); }
  Eigen::MatrixXd Q(Index i) const { return C[i].transpose() * C[i]; }
  Eigen::MatrixXd Q1(Index i) const { return F[i].transpose() * F[i]; }
  Eigen::MatrixXd S(Index i) const { return F[i].transpose() * G; }
  Eigen::MatrixXd R() const { return G.transpose() * G; }

  Eigen::MatrixXd A_from(const Eigen::Ref<const Eigen::MatrixXd>& f) const;
  Eigen::MatrixXd C_from(const Eigen::Ref<const Eigen::MatrixXd>& f) const;
};

ResidualMatrices assemble_residual(const JacobianTable& table);

struct RiccatiSolution {
  MatrixSeries P;  // (k + n) x (k + n) per sample
  Eigen::MatrixXd P0;
};

/// Which algebraic form of the backward Riccati equation to integrate:
///   Reduced:    Pdot = -A'P - PA - Q + P B R^-1 B' P
///   CrossTerm:  Pdot = -P A1 - A1' P - Q1 + (P B + S) R^-1 (B' P + S'),
///               with A1 = 0.
enum class RiccatiForm { Reduced, CrossTerm };

inline constexpr double kRiccatiDivergence = 1e12;

/// Backward RK4 from P(tf) = 0; coefficients at half steps come from cubic
/// interpolation of F. P is symmetrized after each step. Throws kDivergence
/// when a sample exceeds kRiccatiDivergence in Frobenius norm.
RiccatiSolution integrate_riccati(const ResidualMatrices& res,
                                  const TimeGrid& grid,
                                  RiccatiForm form = RiccatiForm::Reduced);

/// Generic form Pdot = -A'P - PA - Q + P K P for tabulated A, Q (samples and
/// half-step values) and a constant K; used for surrogate problems.
struct RiccatiCoefficients {
  MatrixSeries A;
  MatrixSeries A_mid;
  MatrixSeries Q;
  MatrixSeries Q_mid;
  Eigen::MatrixXd K;
};

RiccatiSolution integrate_riccati(const RiccatiCoefficients& coeffs,
                                  const TimeGrid& grid);

struct SoftRecovery {
  Eigen::VectorXd z0;
  Eigen::VectorXd c;
  Eigen::VectorXd p0;
  double objective = 0.0;
  double cond_P0_reduced = 0.0;
  int reduced_rank = 0;
  bool unique = false;
};

/// Minimizes z0' P0 z0 subject to z0[known_index] = known_value by
/// eliminating the known coordinate. A rank-deficient reduced matrix still
/// yields the minimum-norm minimizer, with `unique` cleared.
SoftRecovery recover_weights_soft(const Eigen::MatrixXd& P0, Index k,
                                  Index known_index, double known_value,
                                  const RankPolicy& policy = {});

/// Integral of |F z + G v|^2 along the optimal secondary trajectory from z0,
/// with v = -(B'P + S') z from the stored Riccati solution.
double soft_residual_norm(const ResidualMatrices& res,
                          const RiccatiSolution& riccati,
                          const Eigen::VectorXd& z0, const TimeGrid& grid);

/// Same integral for a given costate path (z = [c; p(t_i)], v = pdot).
double residual_along(const ResidualMatrices& res, const Eigen::VectorXd& c,
                      const Eigen::MatrixXd& p, const Eigen::MatrixXd& pdot,
                      const TimeGrid& grid);

}  // namespace ioc
