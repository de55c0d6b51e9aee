#include "ioc/trajectory.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ioc/error.hpp"
#include "json_util.hpp"

namespace ioc {

TimeGrid TimeGrid::uniform(double t0, double tf, double h) {
  if (!(h > 0.0) || !(tf >= t0)) {
    throw Error(ErrorCode::kInvalidProblem, "grid needs h > 0 and tf >= t0");
  }
  TimeGrid g;
  g.t0 = t0;
  g.h = h;
  g.count = static_cast<Index>(std::llround((tf - t0) / h)) + 1;
  g.tf = g.time(g.count - 1);
  return g;
}

Index TimeGrid::index_at(double t) const {
  if (t <= t0) return 0;
  const auto i = static_cast<Index>(std::floor((t - t0) / h + 1e-9));
  return std::min(i, count - 1);
}

void Trajectory::validate() const {
  if (grid.count < 1) throw Error(ErrorCode::kInvalidProblem, "empty grid");
  if (x.rows() != grid.count || u.rows() != grid.count) {
    throw Error(ErrorCode::kDimensionMismatch, "trajectory rows must match the grid");
  }
  if (p_true && (p_true->rows() != grid.count || p_true->cols() != x.cols())) {
    throw Error(ErrorCode::kDimensionMismatch, "p_true shape mismatch");
  }
  if (!x.allFinite() || !u.allFinite()) {
    throw Error(ErrorCode::kInvalidProblem, "trajectory has non-finite entries");
  }
}

JacobianTable tabulate_lti_quadratic(const Trajectory& traj,
                                     const Eigen::MatrixXd& M,
                                     const Eigen::MatrixXd& N,
                                     const std::optional<Eigen::MatrixXd>& theta) {
  traj.validate();
  const Index n = traj.n();
  const Index m = traj.m();
  if (m != 1 || M.rows() != n || M.cols() != n || N.rows() != n || N.cols() != 1) {
    throw Error(ErrorCode::kDimensionMismatch,
                "LTI-quadratic mode needs m = 1, M n x n and N n x 1");
  }
  const Index k = n + 1;
  const Index count = traj.grid.count;
  JacobianTable t;
  t.k = k;
  t.n = n;
  t.m = m;
  t.grad_x_phi = MatrixSeries(k, n, count);
  t.grad_u_phi = MatrixSeries(k, m, count);
  t.grad_x_f = MatrixSeries(n, n, count);
  t.grad_u_f = MatrixSeries(n, m, count);
  for (Index i = 0; i < count; ++i) {
    auto gx = t.grad_x_phi[i];
    for (Index j = 0; j < n; ++j) gx(j, j) = 2.0 * traj.x(i, j);
    t.grad_u_phi[i](n, 0) = 2.0 * traj.u(i, 0);
    t.grad_x_f[i] = M;
    t.grad_u_f[i] = N;
  }
  ClosedLoopModel model;
  model.M = M;
  model.N = N;
  if (theta) {
    if (theta->rows() != 1 || theta->cols() != n) {
      throw Error(ErrorCode::kDimensionMismatch, "Theta must be 1 x n");
    }
    model.Theta = *theta;
  } else {
    // Minimum-norm least squares u = x Theta'; exact on data from a linear
    // feedback even when the states span a subspace.
    model.Theta = traj.x.completeOrthogonalDecomposition().solve(traj.u).transpose();
  }
  model.Mbar = M + N * model.Theta;
  model.x = traj.x;
  t.lti = std::move(model);
  return t;
}

JacobianTable tabulate_general(const Trajectory& traj,
                               const JacobianCallbacks& cb) {
  traj.validate();
  const Index n = traj.n();
  const Index m = traj.m();
  const Index k = cb.k;
  const Index count = traj.grid.count;
  JacobianTable t;
  t.k = k;
  t.n = n;
  t.m = m;
  t.grad_x_phi = MatrixSeries(k, n, count);
  t.grad_u_phi = MatrixSeries(k, m, count);
  t.grad_x_f = MatrixSeries(n, n, count);
  t.grad_u_f = MatrixSeries(n, m, count);
  auto fill = [&](MatrixSeries& dst, const JacobianCallbacks::Fn& fn,
                  const char* name, Index i, double time,
                  const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    Eigen::MatrixXd v;
    try {
      v = fn(time, x, u);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kCallbackFailure,
                  std::string(name) + " failed at sample " + std::to_string(i) +
                      ": " + e.what());
    }
    if (v.rows() != dst.rows() || v.cols() != dst.cols()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  std::string(name) + " returned the wrong shape at sample " +
                      std::to_string(i));
    }
    dst[i] = v;
  };
  for (Index i = 0; i < count; ++i) {
    const double time = traj.grid.time(i);
    const Eigen::VectorXd x = traj.x.row(i).transpose();
    const Eigen::VectorXd u = traj.u.row(i).transpose();
    fill(t.grad_x_phi, cb.grad_x_phi, "grad_x_phi", i, time, x, u);
    fill(t.grad_u_phi, cb.grad_u_phi, "grad_u_phi", i, time, x, u);
    fill(t.grad_x_f, cb.grad_x_f, "grad_x_f", i, time, x, u);
    fill(t.grad_u_f, cb.grad_u_f, "grad_u_f", i, time, x, u);
  }
  return t;
}

MatrixSeries derivative_series(const MatrixSeries& s, const TimeGrid& grid) {
  const Index c = s.count();
  if (c < 5) {
    throw Error(ErrorCode::kTooFewSamples, "derivatives need at least 5 samples");
  }
  const double w = 1.0 / (12.0 * grid.h);
  MatrixSeries d(s.rows(), s.cols(), c);
  d[0] = w * (-25.0 * s[0] + 48.0 * s[1] - 36.0 * s[2] + 16.0 * s[3] - 3.0 * s[4]);
  d[1] = w * (-3.0 * s[0] - 10.0 * s[1] + 18.0 * s[2] - 6.0 * s[3] + s[4]);
  for (Index i = 2; i + 2 < c; ++i) {
    d[i] = w * (s[i - 2] - 8.0 * s[i - 1] + 8.0 * s[i + 1] - s[i + 2]);
  }
  d[c - 2] = w * (3.0 * s[c - 1] + 10.0 * s[c - 2] - 18.0 * s[c - 3] +
                  6.0 * s[c - 4] - s[c - 5]);
  d[c - 1] = w * (25.0 * s[c - 1] - 48.0 * s[c - 2] + 36.0 * s[c - 3] -
                  16.0 * s[c - 4] + 3.0 * s[c - 5]);
  return d;
}

MatrixSeries closed_loop_state_derivatives(const ClosedLoopModel& model,
                                           int order) {
  const Index n = model.x.cols();
  const Index count = model.x.rows();
  MatrixSeries out(n, order + 1, count);
  for (Index i = 0; i < count; ++i) {
    auto block = out[i];
    block.col(0) = model.x.row(i).transpose();
    for (int j = 1; j <= order; ++j) block.col(j) = model.Mbar * block.col(j - 1);
  }
  return out;
}

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

TrajectoryFormat format_from_path(const std::string& path) {
  auto ends_with = [&](const std::string& suffix) {
    return path.size() >= suffix.size() &&
           path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".csv")) return TrajectoryFormat::Csv;
  if (ends_with(".json")) return TrajectoryFormat::Json;
  throw Error(ErrorCode::kParseError, "unknown trajectory extension: " + path);
}

namespace {

void check_uniform(const std::vector<double>& t, const TimeGrid& grid) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (std::abs(t[i] - grid.time(static_cast<Index>(i))) > 1e-9 * grid.h) {
      throw Error(ErrorCode::kNonUniformGrid,
                  "time sample " + std::to_string(i) + " is off the uniform grid");
    }
  }
}

std::string column_name(char prefix, Index j, Index total) {
  if (prefix == 'u' && total == 1) return "u";
  return std::string(1, prefix) + std::to_string(j + 1);
}

void save_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kParseError, "cannot write " + path);
  out << "t";
  for (Index j = 0; j < traj.n(); ++j) out << ',' << column_name('x', j, traj.n());
  for (Index j = 0; j < traj.m(); ++j) out << ',' << column_name('u', j, traj.m());
  out << '\n';
  for (Index i = 0; i < traj.grid.count; ++i) {
    out << format_number(traj.grid.time(i));
    for (Index j = 0; j < traj.n(); ++j) out << ',' << format_number(traj.x(i, j));
    for (Index j = 0; j < traj.m(); ++j) out << ',' << format_number(traj.u(i, j));
    out << '\n';
  }
}

double parse_double(const std::string& cell, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kParseError,
                "bad number '" + cell + "' on line " + std::to_string(line));
  }
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    cells.push_back(cell);
  }
  return cells;
}

Trajectory load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParseError, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw Error(ErrorCode::kParseError, "empty trajectory file");
  }
  const auto header = split(line);
  if (header.empty() || header[0] != "t") {
    throw Error(ErrorCode::kParseError, "first column must be t");
  }
  Index n = 0;
  Index m = 0;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (!header[c].empty() && header[c][0] == 'x' && m == 0) {
      ++n;
    } else if (!header[c].empty() && header[c][0] == 'u') {
      ++m;
    } else {
      throw Error(ErrorCode::kParseError, "unexpected column " + header[c]);
    }
  }
  if (n == 0 || m == 0) throw Error(ErrorCode::kParseError, "need x and u columns");
  std::vector<double> t;
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kParseError, "wrong column count on line " + std::to_string(lineno));
    }
    t.push_back(parse_double(cells[0], lineno));
    for (std::size_t c = 1; c < cells.size(); ++c) values.push_back(parse_double(cells[c], lineno));
  }
  if (t.size() < 2) throw Error(ErrorCode::kParseError, "need at least two samples");
  const auto count = static_cast<Index>(t.size());
  TimeGrid grid;
  grid.t0 = t.front();
  grid.count = count;
  grid.h = (t.back() - t.front()) / static_cast<double>(count - 1);
  grid.tf = t.back();
  if (!(grid.h > 0.0)) throw Error(ErrorCode::kNonUniformGrid, "time must increase");
  check_uniform(t, grid);
  Trajectory traj;
  traj.grid = grid;
  traj.x.resize(count, n);
  traj.u.resize(count, m);
  const Index width = n + m;
  for (Index i = 0; i < count; ++i) {
    for (Index j = 0; j < n; ++j) traj.x(i, j) = values[static_cast<std::size_t>(i * width + j)];
    for (Index j = 0; j < m; ++j) traj.u(i, j) = values[static_cast<std::size_t>(i * width + n + j)];
  }
  traj.validate();
  return traj;
}

void save_json(const Trajectory& traj, const std::string& path) {
  using detail::json;
  json j;
  j["grid"] = {{"t0", traj.grid.t0}, {"tf", traj.grid.tf}, {"h", traj.grid.h},
               {"count", traj.grid.count}};
  json t = json::array();
  for (Index i = 0; i < traj.grid.count; ++i) t.push_back(traj.grid.time(i));
  j["t"] = std::move(t);
  j["x"] = detail::to_json(traj.x);
  j["u"] = detail::to_json(traj.u);
  if (traj.p_true) j["p_true"] = detail::to_json(*traj.p_true);
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kParseError, "cannot write " + path);
  out << j.dump() << '\n';
}

Trajectory load_json(const std::string& path) {
  using detail::json;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParseError, "cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
  try {
    Trajectory traj;
    const json& g = j.at("grid");
    traj.grid.t0 = g.at("t0").get<double>();
    traj.grid.tf = g.at("tf").get<double>();
    traj.grid.h = g.at("h").get<double>();
    traj.grid.count = g.at("count").get<Index>();
    if (!(traj.grid.h > 0.0) || traj.grid.count < 2) {
      throw Error(ErrorCode::kParseError, "invalid grid object");
    }
    const auto t = j.at("t").get<std::vector<double>>();
    if (static_cast<Index>(t.size()) != traj.grid.count) {
      throw Error(ErrorCode::kParseError, "t length does not match grid.count");
    }
    check_uniform(t, traj.grid);
    traj.x = detail::matrix_from_json(j.at("x"), "x");
    traj.u = detail::matrix_from_json(j.at("u"), "u");
    if (j.contains("p_true")) traj.p_true = detail::matrix_from_json(j["p_true"], "p_true");
    traj.validate();
    return traj;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
}

}  // namespace

void save_trajectory(const Trajectory& traj, const std::string& path,
                     TrajectoryFormat format) {
  if (format == TrajectoryFormat::Csv) {
    save_csv(traj, path);
  } else {
    save_json(traj, path);
  }
}

Trajectory load_trajectory(const std::string& path, TrajectoryFormat format) {
  return format == TrajectoryFormat::Csv ? load_csv(path) : load_json(path);
}

}  // namespace ioc
