#pragma once

#include <map>

#include "ioc/harness.hpp"

namespace fixture {

/// Full pipeline for a built-in example, computed once per process.
inline const ioc::harness::PipelineResult& example_run(int id) {
  static std::map<int, ioc::harness::PipelineResult> cache;
  auto it = cache.find(id);
  if (it == cache.end()) {
    ioc::harness::ScenarioConfig cfg;
    cfg.example = id;
    ioc::harness::PipelineOptions opt;
    opt.keep_series = true;
    it = cache.emplace(id, ioc::harness::run_pipeline(cfg, opt)).first;
  }
  return it->second;
}

inline Eigen::MatrixXd mat(std::initializer_list<std::initializer_list<double>> rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace fixture

#define EXPECT_IOC_ERROR(stmt, ecode)                                  \
  do {                                                                 \
    try {                                                              \
      stmt;                                                            \
      ADD_FAILURE() << "expected " << ioc::to_string(ecode);           \
    } catch (const ioc::Error& e_) {                                   \
      EXPECT_EQ(e_.code(), ecode) << e_.what();                        \
    }                                                                  \
  } while (0)
