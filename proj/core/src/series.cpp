#include "ioc/series.hpp"

#include <algorithm>
#include <cmath>

#include "ioc/error.hpp"

namespace ioc {

void MatrixSeries::truncate(Index count) {
  count_ = std::min(count, count_);
  data_.resize(static_cast<std::size_t>(rows_ * cols_ * count_));
}

double MatrixSeries::max_norm() const {
  double best = 0.0;
  for (Index i = 0; i < count_; ++i) best = std::max(best, (*this)[i].norm());
  return best;
}

int RankPolicy::rank(const Eigen::VectorXd& singular_values, Index rows,
                     Index cols) const {
  if (singular_values.size() == 0) return 0;
  const double s_max = singular_values.maxCoeff();
  if (!(s_max > 0.0)) return 0;
  const double tol = threshold(rows, cols, s_max);
  return static_cast<int>((singular_values.array() > tol).count());
}

PseudoSolve pseudo_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                         const RankPolicy& policy) {
  PseudoSolve out;
  if (a.size() == 0) {
    out.x = Eigen::VectorXd::Zero(a.cols());
    return out;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd& s = svd.singularValues();
  out.singular_values = s;
  out.rank = policy.rank(s, a.rows(), a.cols());
  const double s_min = s.minCoeff();
  out.condition = s_min > 0.0 ? s.maxCoeff() / s_min
                              : std::numeric_limits<double>::infinity();
  const Eigen::VectorXd ub = svd.matrixU().transpose() * b;
  Eigen::VectorXd scaled = Eigen::VectorXd::Zero(a.cols());
  for (int i = 0; i < out.rank; ++i) scaled(i) = ub(i) / s(i);
  out.x = svd.matrixV() * scaled;
  return out;
}

namespace numerics {

MatrixSeries midpoints(const MatrixSeries& series) {
  const Index count = series.count();
  if (count < 4) {
    throw Error(ErrorCode::kTooFewSamples,
                "half-step interpolation needs at least 4 samples");
  }
  MatrixSeries out(series.rows(), series.cols(), count - 1);
  for (Index i = 0; i + 1 < count; ++i) {
    if (i == 0) {
      out[i] = (5.0 * series[0] + 15.0 * series[1] - 5.0 * series[2] +
                series[3]) / 16.0;
    } else if (i == count - 2) {
      out[i] = (series[count - 4] - 5.0 * series[count - 3] +
                15.0 * series[count - 2] + 5.0 * series[count - 1]) / 16.0;
    } else {
      out[i] = (-series[i - 1] + 9.0 * series[i] + 9.0 * series[i + 1] -
                series[i + 2]) / 16.0;
    }
  }
  return out;
}

namespace {

template <class Sample, class Value>
Value quadrature(Sample&& f, Value zero, double h, Index first, Index last) {
  const Index intervals = last - first;
  if (intervals <= 0) return zero;
  if (intervals == 1) return Value(0.5 * h * (f(first) + f(last)));
  Index simpson_end = last;
  Value tail = zero;
  if (intervals % 2 == 1) {
    simpson_end = last - 3;
    tail = Value(3.0 * h / 8.0 *
                 (f(last - 3) + 3.0 * f(last - 2) + 3.0 * f(last - 1) +
                  f(last)));
  }
  Value acc = zero;
  if (simpson_end > first) {
    acc = Value(f(first) + f(simpson_end));
    for (Index i = first + 1; i < simpson_end; ++i) {
      acc += ((i - first) % 2 == 1 ? 4.0 : 2.0) * f(i);
    }
    acc *= h / 3.0;
  }
  return Value(acc + tail);
}

}  // namespace

Eigen::MatrixXd integrate(const MatrixSeries& series, double h, Index first,
                          Index last) {
  return quadrature(
      [&](Index i) -> Eigen::MatrixXd { return series[i]; },
      Eigen::MatrixXd(Eigen::MatrixXd::Zero(series.rows(), series.cols())), h,
      first, last);
}

Eigen::MatrixXd integrate(const MatrixSeries& series, double h) {
  return integrate(series, h, 0, series.count() - 1);
}

double integrate(const std::vector<double>& samples, double h) {
  return quadrature([&](Index i) { return samples[static_cast<std::size_t>(i)]; },
                    0.0, h, 0, static_cast<Index>(samples.size()) - 1);
}

}  // namespace numerics
}  // namespace ioc
