#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "ioc/series.hpp"
#include "ioc/trajectory.hpp"

namespace ioc {

inline constexpr double kAdjointDivergence = 1e12;

/// Backward solution of Ldot = -grad_x_phi' - grad_x_f' L, L(tf) = 0.
///
/// Divergence is flagged two ways. The norm guard stops the integration the
/// first time |L| exceeds kAdjointDivergence and records that time. The
/// horizon-halving check compares L(t0) for terminal times tf and tf/2: for
/// an exponential envelope e^{g t} the ratio
///   |L_tf(t0) - L_tf/2(t0)| / |L_tf(t0)| = 1 / (1 + e^{-g tf / 2}),
/// so a ratio above 1/2 means the improper integral defining L grows with
/// the horizon. `growth_rate` reports the g implied by the ratio.
struct AdjointSolution {
  MatrixSeries L;  // n x k; samples before `first_valid` are unset
  Index first_valid = 0;
  bool diverged = false;
  std::string divergence_reason;  // "norm_threshold" | "horizon_growth"
  std::optional<double> blowup_time;
  double max_norm = 0.0;
  double tail_ratio = 0.0;
  double growth_rate = 0.0;
};

AdjointSolution integrate_L(const JacobianTable& table, const TimeGrid& grid);

struct HardAssembly {
  AdjointSolution adjoint;
  MatrixSeries W1;  // m x k
  Eigen::MatrixXd W;
  bool diverged = false;
};

/// W1 = grad_u_phi' + grad_u_f' L and W = Simpson integral of W1'W1. A
/// diverged adjoint yields an assembly without W.
HardAssembly assemble_W(const JacobianTable& table, AdjointSolution adjoint,
                        const TimeGrid& grid);

struct HardRecovery {
  Eigen::VectorXd c;
  double objective = 0.0;
  int reduced_rank = 0;
  bool unique = false;
  double cond_reduced = 0.0;
};

/// Minimizes c'Wc subject to c[known_index] = known_value. Throws kDiverged
/// for a diverged assembly.
HardRecovery recover_weights_hard(const HardAssembly& assembly,
                                  Index known_index, double known_value,
                                  const RankPolicy& policy = {});
HardRecovery recover_weights_hard(const Eigen::MatrixXd& W, Index known_index,
                                  double known_value,
                                  const RankPolicy& policy = {});

}  // namespace ioc
