#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ioc/error.hpp"
#include "ioc/harness.hpp"

namespace fs = std::filesystem;
using namespace ioc;
using namespace ioc::harness;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kParseError, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

ScenarioConfig config_from(const std::string& path, const std::string& method) {
  ScenarioConfig c = load_config(path);
  if (method == "soft") {
    c.run_soft = true;
    c.run_hard = false;
  } else if (method == "hard") {
    c.run_soft = false;
    c.run_hard = true;
  } else if (method == "both") {
    c.run_soft = c.run_hard = true;
  }
  return c;
}

int cmd_simulate(const std::string& config_path, const fs::path& out) {
  ScenarioConfig c = load_config(config_path);
  const Prepared d = prepare(c);
  fs::create_directories(out);
  save_trajectory(d.traj, (out / "trajectory.csv").string(), TrajectoryFormat::Csv);
  save_trajectory(d.traj, (out / "trajectory.json").string(), TrajectoryFormat::Json);
  write_json(out / "forward.json", forward_json(d));
  std::cout << forward_json(d).dump(2) << '\n';
  return 0;
}

int cmd_solve(const std::string& config_path, const std::string& method, const fs::path& out) {
  ScenarioConfig c = config_from(config_path, method);
  c.diagnostics = false;
  const PipelineResult r = run_pipeline(c);
  fs::create_directories(out);
  json all;
  if (c.run_soft) {
    all["soft"] = soft_json(r);
    write_json(out / "soft.json", all["soft"]);
  }
  if (c.run_hard) {
    all["hard"] = hard_json(r);
    write_json(out / "hard.json", all["hard"]);
  }
  std::cout << all.dump(2) << '\n';
  return 0;
}

int cmd_diagnose(const std::string& config_path, const fs::path& out) {
  ScenarioConfig c = load_config(config_path);
  c.diagnostics = true;
  const PipelineResult r = run_pipeline(c);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  fs::create_directories(out);
  const json v = verdict_json(r);
  write_json(out / "verdict.json", v);
  if (r.observability) {
    std::ostringstream csv;
    csv << "t,rank,cond\n";
    const auto& o = *r.observability;
    for (std::size_t i = 0; i < o.Qp_rank.size(); ++i) {
      csv << format_number(r.data.traj.grid.time(static_cast<Index>(i))) << ',' << o.Qp_rank[i]
          << ',' << format_number(o.Qp_cond[i]) << '\n';
    }
    write_text(out / "rank_series.csv", csv.str());
  }
  std::cout << v.dump(2) << '\n';
  return 0;
}

int cmd_reproduce(const std::string& which, const std::optional<fs::path>& out) {
  std::vector<int> ids;
  if (which == "all") {
    ids = {1, 2, 3};
  } else if (which == "1" || which == "2" || which == "3") {
    ids = {std::stoi(which)};
  } else {
    throw Error(ErrorCode::kInvalidProblem, "reproduce takes 1, 2, 3 or all");
  }
  std::vector<ReproduceRow> rows;
  for (int id : ids) {
    double seconds = 0.0;
    auto r = reproduce_example(id, &seconds);
    std::cerr << "example " << id << ": " << seconds << " s\n";
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const std::string table = format_reproduce_table(rows);
  std::cout << table;
  if (out) {
    fs::create_directories(*out);
    write_text(*out / "reproduce.txt", table);
  }
  for (const auto& r : rows) {
    if (!r.pass) return 1;
  }
  return 0;
}

int cmd_sweep(const std::optional<std::string>& config_path, std::optional<std::uint64_t> seed,
              std::optional<long long> count, const fs::path& out) {
  std::uint64_t s = 0;
  long long n = 50;
  if (config_path) {
    std::ifstream in(*config_path);
    if (!in) throw Error(ErrorCode::kParseError, "cannot open " + *config_path);
    json j;
    try {
      j = json::parse(in);
      if (j.contains("seed")) s = j["seed"].get<std::uint64_t>();
      if (j.contains("count")) n = j["count"].get<long long>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError, e.what());
    }
  }
  if (seed) s = *seed;
  if (count) n = *count;
  if (n < 1) throw Error(ErrorCode::kInvalidProblem, "sweep count must be at least 1");
  const auto rows = run_sweep(s, static_cast<Index>(n));
  const SweepSummary summary = summarize(rows);
  fs::create_directories(out);
  write_text(out / "sweep.csv", sweep_csv(rows));
  write_json(out / "sweep_summary.json", summary_json(summary, s));
  std::cout << summary_json(summary, s).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverse optimal control: recovery, diagnostics and reproduction"};
  app.require_subcommand(1);

  std::string config;
  std::string out = ".";
  std::string method = "config";
  std::optional<std::uint64_t> seed;
  std::optional<long long> count;
  std::string which = "all";

  auto* sim = app.add_subcommand("simulate", "solve the forward problem and write trajectories");
  sim->add_option("--config", config, "scenario config (JSON)")->required();
  sim->add_option("--out", out, "output directory");

  auto* solve = app.add_subcommand("solve", "recover weights with the selected methods");
  solve->add_option("--config", config, "scenario config (JSON)")->required();
  solve->add_option("--out", out, "output directory");
  solve->add_option("--method", method, "soft, hard or both (default: from config)")
      ->check(CLI::IsMember({"soft", "hard", "both", "config"}));

  auto* diag = app.add_subcommand("diagnose", "rank tests and case analysis");
  diag->add_option("--config", config, "scenario config (JSON)")->required();
  diag->add_option("--out", out, "output directory");

  auto* rep = app.add_subcommand("reproduce", "run the worked examples against their thresholds");
  rep->add_option("example", which, "1, 2, 3 or all");
  std::string rep_out;
  rep->add_option("--out", rep_out, "output directory");

  auto* sweep = app.add_subcommand("sweep", "randomized prediction-versus-recovery sweep");
  std::string sweep_config;
  sweep->add_option("--config", sweep_config, "config with seed / count");
  sweep->add_option("--seed", seed, "RNG seed");
  sweep->add_option("--count", count, "number of scenarios");
  sweep->add_option("--out", out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(config, out);
    if (*solve) return cmd_solve(config, method, out);
    if (*diag) return cmd_diagnose(config, out);
    if (*rep) {
      return cmd_reproduce(which, rep_out.empty() ? std::nullopt
                                                  : std::optional<fs::path>(rep_out));
    }
    if (*sweep) {
      return cmd_sweep(sweep_config.empty() ? std::nullopt : std::optional<std::string>(sweep_config),
                       seed, count, out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
