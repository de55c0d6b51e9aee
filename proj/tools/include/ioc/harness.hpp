#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ioc/hard_ioc.hpp"
#include "ioc/model.hpp"
#include "ioc/soft_ioc.hpp"
#include "ioc/solvability.hpp"
#include "ioc/trajectory.hpp"

namespace ioc::harness {

using json = nlohmann::json;

/// One scenario. Exactly one data source is set: a built-in example, an
/// inline problem, or a trajectory file plus its dynamics (M, N).
struct ScenarioConfig {
  std::optional<int> example;
  std::optional<LtiProblem> problem;
  std::optional<std::string> trajectory_file;
  std::optional<Eigen::MatrixXd> M;
  std::optional<Eigen::MatrixXd> N;

  std::optional<Index> known_index;  // defaults to the u^2 weight
  std::optional<double> known_value; // defaults to the true E, else 1
  bool run_soft = true;
  bool run_hard = true;
  bool diagnostics = true;
  std::optional<double> horizon;
  std::optional<double> step;
  std::optional<double> rank_window;
  std::uint64_t seed = 0;
  Index count = 50;

  void validate() const;
};

ScenarioConfig parse_config(const json& j);
ScenarioConfig load_config(const std::string& path);

/// The three worked examples (1 under-damped with unstable plant, 2
/// over-damped started on the slow mode, 3 under-damped marginal case).
LtiProblem example_problem(int id);

/// rank_tol from IOC_RANK_TOL when set, else the library default.
RankPolicy rank_policy_from_env();

struct Prepared {
  std::optional<LtiProblem> problem;
  std::optional<LqrSolution> solution;
  std::optional<GridChoice> grid_choice;
  Eigen::VectorXd x0;
  Trajectory traj;
  JacobianTable table;
  std::optional<Eigen::VectorXd> truth;
  Index known_index = 0;
  double known_value = 1.0;
};

/// Forward data for the scenario: solve and simulate a problem, or load a
/// trajectory file and tabulate it against the given dynamics.
Prepared prepare(const ScenarioConfig& config);

struct PipelineResult {
  Prepared data;
  RankPolicy policy;
  std::optional<ResidualMatrices> residual;
  std::optional<RiccatiSolution> riccati;
  std::optional<SoftRecovery> soft;
  std::optional<std::string> soft_error;
  std::optional<HardAssembly> hard;
  std::optional<HardRecovery> hard_recovery;
  std::optional<std::string> hard_error;
  std::optional<ObservabilitySeries> observability;
  std::optional<CaseVerdict> verdict;
  std::optional<ComparisonReport> comparison;
  std::vector<std::string> warnings;
  double seconds = 0.0;
};

struct PipelineOptions {
  /// Keep the (large) Riccati and residual series in the result.
  bool keep_series = false;
  double agreement_tolerance = 0.01;
};

PipelineResult run_pipeline(const ScenarioConfig& config,
                            const PipelineOptions& options = {});

json forward_json(const Prepared& data);
json soft_json(const PipelineResult& r);
json hard_json(const PipelineResult& r);
json verdict_json(const PipelineResult& r);
json grid_json(const Prepared& data);

struct ReproduceRow {
  int example = 0;
  std::string method;
  std::string predicted;
  std::string observed;
  std::optional<double> error;
  bool pass = false;
  std::string detail;
};

/// Full pipeline for one example against the reproduction thresholds:
/// "close" is <= 5% per component, "far" is >= 50% on some component.
std::vector<ReproduceRow> reproduce_example(int id, double* seconds = nullptr);
std::string format_reproduce_table(const std::vector<ReproduceRow>& rows);

struct SweepRow {
  Index index = 0;
  LtiProblem problem;
  std::string damping;
  std::optional<double> sigma;
  std::optional<double> omega;
  std::optional<double> max_real_sum;
  std::optional<double> product;
  bool borderline = false;
  std::string hard_branch;
  std::string hard_predicted;
  std::string hard_observed;
  std::optional<double> hard_error;
  std::optional<bool> hard_agree;
  std::string soft_predicted;
  std::string soft_observed;
  std::optional<double> soft_error;
  std::optional<bool> soft_agree;
  double horizon = 0.0;
  bool truncated = false;
  std::optional<double> tail_ratio;
  std::string failure;
};

struct SweepSummary {
  Index scenarios = 0;
  Index failures = 0;
  Index hard_scored = 0;
  Index hard_agree = 0;
  Index underdamped = 0;
  Index underdamped_soft_ok = 0;
  double hard_agreement() const;
  double underdamped_soft_rate() const;
};

/// Random second-order stabilizable problem: entries of M, N uniform in
/// [-3, 3], D diagonal uniform in (0, 50], E = 1, x0 uniform on the circle.
LtiProblem sample_problem(std::uint64_t seed, Index index);

std::vector<SweepRow> run_sweep(std::uint64_t seed, Index count);
SweepSummary summarize(const std::vector<SweepRow>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);
json summary_json(const SweepSummary& s, std::uint64_t seed);

}  // namespace ioc::harness
