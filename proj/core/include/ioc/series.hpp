#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace ioc {

using Index = Eigen::Index;

/// A sequence of equally sized matrices, one per grid sample, stored
/// contiguously. Element i is exposed as an Eigen map.
class MatrixSeries {
 public:
  MatrixSeries() = default;
  MatrixSeries(Index rows, Index cols, Index count)
      : rows_(rows), cols_(cols), count_(count),
        data_(static_cast<std::size_t>(rows * cols * count), 0.0) {}

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index count() const { return count_; }
  bool empty() const { return count_ == 0; }

  Eigen::Map<Eigen::MatrixXd> operator[](Index i) {
    return Eigen::Map<Eigen::MatrixXd>(data_.data() + offset(i), rows_, cols_);
  }
  Eigen::Map<const Eigen::MatrixXd> operator[](Index i) const {
    return Eigen::Map<const Eigen::MatrixXd>(data_.data() + offset(i), rows_,
                                             cols_);
  }

  const std::vector<double>& data() const { return data_; }

  /// Keeps the first `count` samples.
  void truncate(Index count);

  /// Largest Frobenius norm over all samples.
  double max_norm() const;

 private:
  std::size_t offset(Index i) const {
    return static_cast<std::size_t>(i * rows_ * cols_);
  }

  Index rows_ = 0;
  Index cols_ = 0;
  Index count_ = 0;
  std::vector<double> data_;
};

/// Numerical-rank convention shared by every rank decision in the library:
/// a singular value s_i counts when s_i > max(rows, cols) * s_max * relative.
struct RankPolicy {
  double relative = 1e-10;

  double threshold(Index rows, Index cols, double s_max) const {
    return static_cast<double>(std::max(rows, cols)) * s_max * relative;
  }
  int rank(const Eigen::VectorXd& singular_values, Index rows,
           Index cols) const;
};

/// Solution of a symmetric PSD system through the thresholded SVD
/// pseudo-inverse, with the rank and condition number that were observed.
struct PseudoSolve {
  Eigen::VectorXd x;
  int rank = 0;
  double condition = 0.0;
  Eigen::VectorXd singular_values;
};

PseudoSolve pseudo_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                         const RankPolicy& policy);

namespace numerics {

/// Values at the half-step points t_i + h/2 (count - 1 of them) by 4-point
/// Lagrange interpolation, one-sided at both ends. Requires count >= 4.
MatrixSeries midpoints(const MatrixSeries& series);

/// Composite Simpson rule over samples [first, last]; an odd number of
/// intervals closes with the 3/8 rule; a single interval falls back to the
/// trapezoid.
Eigen::MatrixXd integrate(const MatrixSeries& series, double h, Index first,
                          Index last);
Eigen::MatrixXd integrate(const MatrixSeries& series, double h);
double integrate(const std::vector<double>& samples, double h);

/// Backward classical RK4 over a uniform grid. `rhs(kind, index, y)` returns
/// dy/dt evaluated at sample `index` (kind == Sample) or at the half step
/// between samples index and index + 1 (kind == Midpoint). `visit(i, y)`
/// receives y(t_i) for i = count-1 down to 0, may adjust it in place, and
/// returns false to stop early.
enum class Stage { Sample, Midpoint };

template <class Rhs, class Visit>
void backward_rk4(Index count, double h, Eigen::MatrixXd y, Rhs&& rhs,
                  Visit&& visit) {
  if (!visit(count - 1, y)) return;
  const double half = 0.5 * h;
  for (Index i = count - 2; i >= 0; --i) {
    // Stepping backwards: y(t - h) = y(t) - h * ydot.
    const Eigen::MatrixXd k1 = rhs(Stage::Sample, i + 1, y);
    const Eigen::MatrixXd k2 = rhs(Stage::Midpoint, i, y - half * k1);
    const Eigen::MatrixXd k3 = rhs(Stage::Midpoint, i, y - half * k2);
    const Eigen::MatrixXd k4 = rhs(Stage::Sample, i, y - h * k3);
    y -= (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!visit(i, y)) return;
  }
}

}  // namespace numerics
}  // namespace ioc
