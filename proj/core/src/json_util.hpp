#pragma once

// Conversions between Eigen objects and nlohmann::json, private to core.

#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "ioc/error.hpp"

namespace ioc::detail {

using json = nlohmann::json;

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) {
    throw Error(ErrorCode::kParseError, what + " must be a non-empty array of rows");
  }
  const auto rows = static_cast<Index>(j.size());
  const auto cols = static_cast<Index>(j[0].is_array() ? j[0].size() : 0);
  if (cols == 0) throw Error(ErrorCode::kParseError, what + " has empty rows");
  Eigen::MatrixXd out(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      throw Error(ErrorCode::kParseError, what + " is ragged");
    }
    for (Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw Error(ErrorCode::kParseError, what + " has a non-number");
      out(r, c) = v.get<double>();
    }
  }
  return out;
}

inline Eigen::VectorXd vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw Error(ErrorCode::kParseError, what + " must be an array");
  Eigen::VectorXd out(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::kParseError, what + " has a non-number");
    out(static_cast<Index>(i)) = j[i].get<double>();
  }
  return out;
}

inline json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace ioc::detail
