#include "ioc/hard_ioc.hpp"

#include <algorithm>
#include <cmath>

#include "ioc/error.hpp"

namespace ioc {

namespace {

struct AdjointRhs {
  const JacobianTable& t;
  MatrixSeries phi_mid;
  MatrixSeries f_mid;

  explicit AdjointRhs(const JacobianTable& table)
      : t(table),
        phi_mid(numerics::midpoints(table.grad_x_phi)),
        f_mid(numerics::midpoints(table.grad_x_f)) {}

  Eigen::MatrixXd operator()(numerics::Stage stage, Index i,
                             const Eigen::MatrixXd& L) const {
    const bool at = stage == numerics::Stage::Sample;
    const auto phi = at ? t.grad_x_phi[i] : phi_mid[i];
    const auto fx = at ? t.grad_x_f[i] : f_mid[i];
    return -phi.transpose() - fx.transpose() * L;
  }
};

}  // namespace

AdjointSolution integrate_L(const JacobianTable& table, const TimeGrid& grid) {
  if (table.count() != grid.count) {
    throw Error(ErrorCode::kDimensionMismatch, "table samples do not match the grid");
  }
  const Index n = table.n;
  const Index k = table.k;
  const AdjointRhs rhs(table);
  AdjointSolution out;
  out.L = MatrixSeries(n, k, grid.count);
  out.first_valid = 0;
  numerics::backward_rk4(
      grid.count, grid.h, Eigen::MatrixXd::Zero(n, k), rhs,
      [&](Index i, Eigen::MatrixXd& L) {
        const double norm = L.norm();
        if (!std::isfinite(norm) || norm > kAdjointDivergence) {
          out.diverged = true;
          out.divergence_reason = "norm_threshold";
          out.blowup_time = grid.time(i);
          out.first_valid = i + 1;
          return false;
        }
        out.L[i] = L;
        out.max_norm = std::max(out.max_norm, norm);
        return true;
      });
  if (out.diverged) return out;

  // Same equation with the terminal condition moved to the middle sample.
  const Index half = (grid.count - 1) / 2;
  if (half >= 1) {
    Eigen::MatrixXd L_half0;
    numerics::backward_rk4(half + 1, grid.h, Eigen::MatrixXd::Zero(n, k), rhs,
                           [&](Index i, Eigen::MatrixXd& L) {
                             if (i == 0) L_half0 = L;
                             return true;
                           });
    const double full = out.L[0].norm();
    if (full > 0.0) {
      out.tail_ratio = (out.L[0] - L_half0).norm() / full;
      const double rho = std::clamp(out.tail_ratio, 1e-300, 1.0 - 1e-16);
      const double span = grid.time(grid.count - 1) - grid.t0;
      out.growth_rate = 2.0 / span * std::log(rho / (1.0 - rho));
      if (out.tail_ratio > 0.5) {
        out.diverged = true;
        out.divergence_reason = "horizon_growth";
      }
    }
  }
  return out;
}

HardAssembly assemble_W(const JacobianTable& table, AdjointSolution adjoint,
                        const TimeGrid& grid) {
  HardAssembly out;
  out.diverged = adjoint.diverged;
  if (adjoint.diverged) {
    out.adjoint = std::move(adjoint);
    return out;
  }
  const Index count = grid.count;
  const Index k = table.k;
  out.W1 = MatrixSeries(table.m, k, count);
  MatrixSeries gram(k, k, count);
  for (Index i = 0; i < count; ++i) {
    out.W1[i] = table.grad_u_phi[i].transpose() +
                table.grad_u_f[i].transpose() * adjoint.L[i];
    gram[i] = out.W1[i].transpose() * out.W1[i];
  }
  out.W = numerics::integrate(gram, grid.h);
  out.W = 0.5 * (out.W + out.W.transpose()).eval();
  out.adjoint = std::move(adjoint);
  return out;
}

HardRecovery recover_weights_hard(const HardAssembly& assembly,
                                  Index known_index, double known_value,
                                  const RankPolicy& policy) {
  if (assembly.diverged) {
    throw Error(ErrorCode::kDiverged, "W does not exist for a diverged adjoint");
  }
  return recover_weights_hard(assembly.W, known_index, known_value, policy);
}

HardRecovery recover_weights_hard(const Eigen::MatrixXd& W, Index known_index,
                                  double known_value, const RankPolicy& policy) {
  const Index k = W.rows();
  if (W.cols() != k) throw Error(ErrorCode::kDimensionMismatch, "W must be square");
  if (known_index < 0 || known_index >= k) {
    throw Error(ErrorCode::kInvalidProblem, "known_index must address a weight");
  }
  if (known_value == 0.0) {
    throw Error(ErrorCode::kInvalidProblem, "known_value must be nonzero");
  }
  Eigen::MatrixXd Nh = Eigen::MatrixXd::Zero(k, k - 1);
  for (Index i = 0, col = 0; i < k; ++i) {
    if (i != known_index) Nh(i, col++) = 1.0;
  }
  Eigen::VectorXd fixed = Eigen::VectorXd::Zero(k);
  fixed(known_index) = known_value;
  const PseudoSolve ps = pseudo_solve(Nh.transpose() * W * Nh,
                                      -(Nh.transpose() * W * fixed), policy);
  HardRecovery out;
  out.c = Nh * ps.x + fixed;
  out.c(known_index) = known_value;
  out.objective = out.c.dot(W * out.c);
  out.reduced_rank = ps.rank;
  out.unique = ps.rank == k - 1;
  out.cond_reduced = ps.condition;
  return out;
}

}  // namespace ioc
