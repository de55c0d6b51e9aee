#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "ioc/error.hpp"
#include "ioc/hard_ioc.hpp"
#include "ioc/model.hpp"
#include "oracles.hpp"

using namespace ioc;
using fixture::mat;
using fixture::vec;

namespace {

JacobianTable scalar_table(const Trajectory& tr, double fx) {
  JacobianCallbacks cb;
  cb.k = 2;
  cb.grad_x_phi = [](double, const Eigen::VectorXd& x, const Eigen::VectorXd&) { return mat({{2.0 * x(0)}, {0.0}}); };
  cb.grad_u_phi = [](double, const Eigen::VectorXd&, const Eigen::VectorXd& u) { return mat({{0.0}, {2.0 * u(0)}}); };
  cb.grad_x_f = [fx](double, const Eigen::VectorXd&, const Eigen::VectorXd&) { return mat({{fx}}); };
  cb.grad_u_f = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&) { return mat({{1.0}}); };
  return tabulate_general(tr, cb);
}

Trajectory exponential(double rate, double T, double h) {
  Trajectory tr;
  tr.grid = TimeGrid::uniform(0.0, T, h);
  tr.x.resize(tr.grid.count, 1);
  tr.u = Eigen::MatrixXd::Zero(tr.grid.count, 1);
  for (Index i = 0; i < tr.grid.count; ++i) tr.x(i, 0) = std::exp(rate * tr.grid.time(i));
  return tr;
}

struct Convergent {
  LtiProblem prob;
  LqrSolution sol;
  Trajectory traj;
  JacobianTable table;
};

/// A random problem with a stable plant so that L converges on any horizon.
Convergent stable_problem(std::uint64_t seed, double T, double h) {
  std::mt19937_64 rng(seed);
  for (;;) {
    auto p = oracle::random_problem(rng);
    if (max_real_eigenvalue(p.M) > -0.2) continue;
    Convergent c{p, solve_are(p), {}, {}};
    if (h * c.sol.eigenvalues.cwiseAbs().maxCoeff() > 0.1) continue;
    c.traj = simulate_closed_loop(p, c.sol, TimeGrid::uniform(0.0, T, h));
    c.table = tabulate_lti_quadratic(c.traj, p, c.sol);
    return c;
  }
}

}  // namespace

TEST(IntegrateL, ZeroTrajectory) {
  Trajectory tr = exponential(0.0, 1.0, 0.01);
  tr.x.setZero();
  const auto t = scalar_table(tr, -1.0);
  const auto L = integrate_L(t, tr.grid);
  EXPECT_FALSE(L.diverged);
  EXPECT_EQ(L.L.max_norm(), 0.0);
  const auto W = assemble_W(t, L, tr.grid);
  EXPECT_EQ(W.W.norm(), 0.0);
}

TEST(IntegrateL, ScalarClosedForm) {
  const double T = 3.0;
  const auto tr = exponential(-2.0, T, 1e-3);
  const auto L = integrate_L(scalar_table(tr, -1.0), tr.grid);
  double worst = 0.0;
  for (Index i = 0; i < tr.grid.count; ++i) {
    const double t = tr.grid.time(i);
    const double exact = (2.0 / 3.0) * (std::exp(-2.0 * t) - std::exp(t - 3.0 * T));
    worst = std::max(worst, std::abs(L.L[i](0, 0) - exact));
    ASSERT_EQ(L.L[i](0, 1), 0.0);
  }
  EXPECT_LE(worst, 1e-8);
  EXPECT_EQ(L.L[tr.grid.count - 1].norm(), 0.0);
}

TEST(IntegrateL, HorizonGrowthFlagged) {
  // Integrand e^{0.2 t}: finite on the grid, but growing with the horizon.
  const auto tr = exponential(-0.1, 20.0, 0.01);
  const auto L = integrate_L(scalar_table(tr, 0.3), tr.grid);
  EXPECT_TRUE(L.diverged);
  EXPECT_EQ(L.divergence_reason, "horizon_growth");
  EXPECT_FALSE(L.blowup_time.has_value());
  EXPECT_GT(L.tail_ratio, 0.5);
  EXPECT_GT(L.growth_rate, 0.0);
}

TEST(IntegrateL, ConvergentTailRatioSmall) {
  const auto tr = exponential(-2.0, 10.0, 1e-3);
  const auto L = integrate_L(scalar_table(tr, -1.0), tr.grid);
  EXPECT_FALSE(L.diverged);
  EXPECT_LT(L.tail_ratio, 1e-6);
}

TEST(IntegrateL, Example1Diverges) {
  const auto& r = fixture::example_run(1);
  ASSERT_TRUE(r.hard.has_value());
  EXPECT_TRUE(r.hard->diverged);
  EXPECT_TRUE(r.hard->adjoint.blowup_time.has_value());
  EXPECT_EQ(r.hard->adjoint.divergence_reason, "norm_threshold");
  EXPECT_GT(r.hard->adjoint.max_norm, 0.0);
  EXPECT_LE(r.hard->adjoint.max_norm, kAdjointDivergence);
  EXPECT_IOC_ERROR(recover_weights_hard(*r.hard, 2, 1.0), ErrorCode::kDiverged);
}

TEST(IntegrateL, MatchesStateTransitionQuadrature) {
  const auto c = stable_problem(23, 2.0, 0.005);
  const auto L = integrate_L(c.table, c.traj.grid);
  ASSERT_FALSE(L.diverged);
  const auto ref = oracle::L_by_quadrature(c.prob.M, c.traj.x, c.traj.grid.h);
  double scale = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) scale = std::max(scale, ref[i].norm());
  for (Index i = 0; i < c.traj.grid.count; ++i) {
    if ((c.traj.grid.count - 1 - i) % 2 != 0) continue;
    worst = std::max(worst, (Eigen::MatrixXd(L.L[i]) - ref[static_cast<std::size_t>(i)]).norm());
  }
  EXPECT_LE(worst / scale, 1e-6);
}

TEST(AssembleW, MatchesExpandedGram) {
  const auto c = stable_problem(29, 2.0, 0.005);
  const auto hard = assemble_W(c.table, integrate_L(c.table, c.traj.grid), c.traj.grid);
  ASSERT_FALSE(hard.diverged);
  const auto Lq = oracle::L_by_quadrature_all(c.prob.M, c.traj.x, c.traj.grid.h);
  const Index count = c.traj.grid.count;
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(3, 3);
  for (Index a = 0; a < 3; ++a) {
    for (Index b = 0; b < 3; ++b) {
      std::vector<double> f;
      for (Index i = 0; i < count; ++i) {
        Eigen::VectorXd gu = Eigen::VectorXd::Zero(3);
        gu(2) = 2.0 * c.traj.u(i, 0);
        const auto ww = oracle::W1tW1_expanded(gu, c.prob.N, Lq[static_cast<std::size_t>(i)]);
        f.push_back(ww(a, b));
      }
      W(a, b) = oracle::simpson(f, c.traj.grid.h);
    }
  }
  EXPECT_LE((hard.W - W).norm() / W.norm(), 1e-6);
}

TEST(AssembleW, SymmetricPsdAndStepConverged) {
  const auto coarse = stable_problem(31, 10.0, 2e-3);
  const auto fine = stable_problem(31, 10.0, 1e-3);
  const auto a = assemble_W(coarse.table, integrate_L(coarse.table, coarse.traj.grid), coarse.traj.grid);
  const auto b = assemble_W(fine.table, integrate_L(fine.table, fine.traj.grid), fine.traj.grid);
  for (const auto* w : {&a.W, &b.W}) {
    EXPECT_EQ(*w, w->transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*w);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-9);
  }
  EXPECT_LE((a.W - b.W).cwiseAbs().maxCoeff() / b.W.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(AssembleW, TrueWeightsInNullSpace) {
  for (int id : {2, 3}) {
    const auto& r = fixture::example_run(id);
    ASSERT_TRUE(r.hard.has_value());
    ASSERT_FALSE(r.hard->diverged) << id;
    const auto c = r.data.problem->true_weights();
    EXPECT_LE((r.hard->W * c).norm() / (r.hard->W.norm() * c.norm()), 1e-6) << id;
  }
}

TEST(AssembleW, Example2ReducedRankOne) {
  const auto& r = fixture::example_run(2);
  ASSERT_TRUE(r.hard_recovery.has_value());
  EXPECT_EQ(r.hard_recovery->reduced_rank, 1);
  EXPECT_FALSE(r.hard_recovery->unique);
  EXPECT_GE(oracle::max_rel(r.hard_recovery->c, vec({20.0, 20.0, 1.0})), 0.5);
}

TEST(RecoverHard, IdentityGivesUnitVector) {
  const auto rec = recover_weights_hard(Eigen::MatrixXd::Identity(3, 3), 2, 1.0);
  EXPECT_EQ(rec.c, vec({0.0, 0.0, 1.0}));
  EXPECT_TRUE(rec.unique);
  EXPECT_EQ(rec.reduced_rank, 2);
}

TEST(RecoverHard, KnownComponentExact) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd a(3, 3);
    for (Index i = 0; i < 9; ++i) a(i) = g(rng);
    const Eigen::MatrixXd W = a.transpose() * a;
    const double known = 0.5 + trial;
    const auto rec = recover_weights_hard(W, trial % 3, known);
    EXPECT_EQ(rec.c(trial % 3), known);
    EXPECT_NEAR(rec.objective, rec.c.dot(W * rec.c), 1e-12 * (1.0 + rec.objective));
  }
}

TEST(RecoverHard, Example3Far) {
  const auto& r = fixture::example_run(3);
  ASSERT_TRUE(r.hard_recovery.has_value());
  EXPECT_TRUE(!r.hard_recovery->unique || r.hard_recovery->cond_reduced > 1e8);
  EXPECT_GE(oracle::max_rel(r.hard_recovery->c, vec({0.0019, 0.0019, 1.0})), 0.5);
}
