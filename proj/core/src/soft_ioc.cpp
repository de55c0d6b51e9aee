#include "ioc/soft_ioc.hpp"

#include <cmath>

#include "ioc/error.hpp"

namespace ioc {

Eigen::MatrixXd ResidualMatrices::A_from(
    const Eigen::Ref<const Eigen::MatrixXd>& f) const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim(), dim());
  a.bottomRows(n) = -f.topRows(n);
  return a;
}

Eigen::MatrixXd ResidualMatrices::C_from(
    const Eigen::Ref<const Eigen::MatrixXd>& f) const {
  return f.bottomRows(m);
}

ResidualMatrices assemble_residual(const JacobianTable& t) {
  const Index count = t.count();
  if (t.grad_u_phi.count() != count || t.grad_x_f.count() != count ||
      t.grad_u_f.count() != count || t.grad_x_phi.rows() != t.k ||
      t.grad_x_phi.cols() != t.n || t.grad_u_phi.rows() != t.k ||
      t.grad_u_phi.cols() != t.m || t.grad_x_f.rows() != t.n ||
      t.grad_x_f.cols() != t.n || t.grad_u_f.rows() != t.n ||
      t.grad_u_f.cols() != t.m) {
    throw Error(ErrorCode::kDimensionMismatch, "inconsistent Jacobian table");
  }
  ResidualMatrices r;
  r.k = t.k;
  r.n = t.n;
  r.m = t.m;
  const Index d = r.dim();
  r.F = MatrixSeries(t.n + t.m, d, count);
  r.C = MatrixSeries(t.m, d, count);
  for (Index i = 0; i < count; ++i) {
    auto f = r.F[i];
    f.topLeftCorner(t.n, t.k) = t.grad_x_phi[i].transpose();
    f.topRightCorner(t.n, t.n) = t.grad_x_f[i].transpose();
    f.bottomLeftCorner(t.m, t.k) = t.grad_u_phi[i].transpose();
    f.bottomRightCorner(t.m, t.n) = t.grad_u_f[i].transpose();
    r.C[i] = f.bottomRows(t.m);
  }
  r.G = Eigen::MatrixXd::Zero(t.n + t.m, t.n);
  r.G.topRows(t.n).setIdentity();
  r.B = Eigen::MatrixXd::Zero(d, t.n);
  r.B.bottomRows(t.n).setIdentity();
  return r;
}

namespace {

template <class Rhs>
RiccatiSolution run_backward(Index dim, const TimeGrid& grid, Rhs&& rhs) {
  RiccatiSolution sol;
  sol.P = MatrixSeries(dim, dim, grid.count);
  numerics::backward_rk4(
      grid.count, grid.h, Eigen::MatrixXd::Zero(dim, dim), rhs,
      [&](Index i, Eigen::MatrixXd& p) {
        p = 0.5 * (p + p.transpose()).eval();
        if (!p.allFinite() || p.norm() > kRiccatiDivergence) {
          throw Error(ErrorCode::kDivergence,
                      "Riccati solution exceeds the divergence guard at t = " +
                          format_number(grid.time(i)));
        }
        sol.P[i] = p;
        return true;
      });
  sol.P0 = sol.P[0];
  return sol;
}

}  // namespace

RiccatiSolution integrate_riccati(const ResidualMatrices& res,
                                  const TimeGrid& grid, RiccatiForm form) {
  if (res.count() != grid.count) {
    throw Error(ErrorCode::kDimensionMismatch, "residual samples do not match the grid");
  }
  const MatrixSeries f_mid = numerics::midpoints(res.F);
  const Index n = res.n;
  return run_backward(
      res.dim(), grid,
      [&](numerics::Stage stage, Index i, const Eigen::MatrixXd& p) -> Eigen::MatrixXd {
        const auto f = stage == numerics::Stage::Sample ? res.F[i] : f_mid[i];
        if (form == RiccatiForm::Reduced) {
          // A = -B G'F, Q = C'C and B R^-1 B' picks the costate block.
          const Eigen::MatrixXd a = res.A_from(f);
          const Eigen::MatrixXd c = f.bottomRows(res.m);
          const Eigen::MatrixXd pa = p * a;
          const Eigen::MatrixXd pb = p.rightCols(n);
          return -pa.transpose() - pa - c.transpose() * c + pb * pb.transpose();
        }
        const Eigen::MatrixXd q1 = f.transpose() * f;
        const Eigen::MatrixXd k = p.rightCols(n) + f.topRows(n).transpose();
        return -q1 + k * k.transpose();
      });
}

RiccatiSolution integrate_riccati(const RiccatiCoefficients& co,
                                  const TimeGrid& grid) {
  if (co.A.count() != grid.count || co.Q.count() != grid.count ||
      co.A_mid.count() != grid.count - 1 || co.Q_mid.count() != grid.count - 1) {
    throw Error(ErrorCode::kDimensionMismatch, "coefficient samples do not match the grid");
  }
  return run_backward(
      co.A.rows(), grid,
      [&](numerics::Stage stage, Index i, const Eigen::MatrixXd& p) -> Eigen::MatrixXd {
        const bool at = stage == numerics::Stage::Sample;
        const auto a = at ? co.A[i] : co.A_mid[i];
        const auto q = at ? co.Q[i] : co.Q_mid[i];
        const Eigen::MatrixXd pa = p * a;
        return -pa.transpose() - pa - q + p * co.K * p;
      });
}

namespace {

struct Reduced {
  Eigen::MatrixXd Ns;
  Eigen::VectorXd fixed;
};

Reduced eliminate(Index dim, Index known_index, double known_value) {
  Reduced r;
  r.Ns = Eigen::MatrixXd::Zero(dim, dim - 1);
  Index col = 0;
  for (Index i = 0; i < dim; ++i) {
    if (i != known_index) r.Ns(i, col++) = 1.0;
  }
  r.fixed = Eigen::VectorXd::Zero(dim);
  r.fixed(known_index) = known_value;
  return r;
}

}  // namespace

SoftRecovery recover_weights_soft(const Eigen::MatrixXd& P0, Index k,
                                  Index known_index, double known_value,
                                  const RankPolicy& policy) {
  if (P0.rows() != P0.cols() || k > P0.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "P0 must be square with k <= dim");
  }
  if (known_index < 0 || known_index >= k) {
    throw Error(ErrorCode::kInvalidProblem, "known_index must address a weight");
  }
  if (known_value == 0.0) {
    throw Error(ErrorCode::kInvalidProblem, "known_value must be nonzero");
  }
  const Index dim = P0.rows();
  const Reduced red = eliminate(dim, known_index, known_value);
  const Eigen::MatrixXd reduced = red.Ns.transpose() * P0 * red.Ns;
  const PseudoSolve ps =
      pseudo_solve(reduced, -(red.Ns.transpose() * P0 * red.fixed), policy);
  SoftRecovery out;
  out.z0 = red.Ns * ps.x + red.fixed;
  out.z0(known_index) = known_value;
  out.c = out.z0.head(k);
  out.p0 = out.z0.tail(dim - k);
  out.objective = out.z0.dot(P0 * out.z0);
  out.cond_P0_reduced = ps.condition;
  out.reduced_rank = ps.rank;
  out.unique = ps.rank == dim - 1;
  return out;
}

double soft_residual_norm(const ResidualMatrices& res,
                          const RiccatiSolution& riccati,
                          const Eigen::VectorXd& z0, const TimeGrid& grid) {
  const Index count = grid.count;
  const Index n = res.n;
  const MatrixSeries f_mid = numerics::midpoints(res.F);
  const MatrixSeries p_mid = numerics::midpoints(riccati.P);
  // v = -(B'P + S') z with S' = G'F, the top n rows of F.
  auto feedback = [&](const auto& f, const auto& p, const Eigen::VectorXd& z) {
    return Eigen::VectorXd(-(p.bottomRows(n) * z + f.topRows(n) * z));
  };
  std::vector<double> r2(static_cast<std::size_t>(count));
  Eigen::VectorXd z = z0;
  const double h = grid.h;
  for (Index i = 0; i < count; ++i) {
    const Eigen::VectorXd v = feedback(res.F[i], riccati.P[i], z);
    Eigen::VectorXd r = res.F[i] * z;
    r.head(n) += v;
    r2[static_cast<std::size_t>(i)] = r.squaredNorm();
    if (i + 1 == count) break;
    // zdot = B v only moves the costate block.
    auto zdot = [&](const Eigen::VectorXd& vv) {
      Eigen::VectorXd d = Eigen::VectorXd::Zero(z.size());
      d.tail(n) = vv;
      return d;
    };
    const Eigen::VectorXd k1 = zdot(v);
    const Eigen::VectorXd z2 = z + 0.5 * h * k1;
    const Eigen::VectorXd k2 = zdot(feedback(f_mid[i], p_mid[i], z2));
    const Eigen::VectorXd z3 = z + 0.5 * h * k2;
    const Eigen::VectorXd k3 = zdot(feedback(f_mid[i], p_mid[i], z3));
    const Eigen::VectorXd z4 = z + h * k3;
    const Eigen::VectorXd k4 = zdot(feedback(res.F[i + 1], riccati.P[i + 1], z4));
    z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return numerics::integrate(r2, h);
}

double residual_along(const ResidualMatrices& res, const Eigen::VectorXd& c,
                      const Eigen::MatrixXd& p, const Eigen::MatrixXd& pdot,
                      const TimeGrid& grid) {
  const Index count = grid.count;
  if (p.rows() != count || pdot.rows() != count || c.size() != res.k) {
    throw Error(ErrorCode::kDimensionMismatch, "costate path does not match the grid");
  }
  std::vector<double> r2(static_cast<std::size_t>(count));
  Eigen::VectorXd z(res.dim());
  for (Index i = 0; i < count; ++i) {
    z << c, p.row(i).transpose();
    Eigen::VectorXd r = res.F[i] * z;
    r.head(res.n) += pdot.row(i).transpose();
    r2[static_cast<std::size_t>(i)] = r.squaredNorm();
  }
  return numerics::integrate(r2, grid.h);
}

}  // namespace ioc
