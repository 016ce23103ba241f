#ifndef OCTOOL_TYPES_HPP_
#define OCTOOL_TYPES_HPP_

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace octool {

using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Mat = Eigen::MatrixXd;

/// Integration aborted: state left the guard region or blew up.
class IntegrationError : public std::runtime_error {
public:
  IntegrationError(const std::string& what, double escape_time)
  : std::runtime_error(what), escape_time_(escape_time) {}
  double escape_time() const noexcept { return escape_time_; }

private:
  double escape_time_;
};

/// The composed terminal-gradient family is numerically rank deficient.
class RankDeficiencyError : public std::runtime_error {
public:
  RankDeficiencyError(const std::string& what, Vec singular_values)
  : std::runtime_error(what), singular_values_(std::move(singular_values)) {}
  const Vec& singular_values() const noexcept { return singular_values_; }

private:
  Vec singular_values_;
};

/// Newton iteration failed to contract; carries the residual history.
class NoConvergenceError : public std::runtime_error {
public:
  NoConvergenceError(const std::string& what, std::vector<double> history)
  : std::runtime_error(what), residual_history_(std::move(history)) {}
  const std::vector<double>& residual_history() const noexcept { return residual_history_; }

private:
  std::vector<double> residual_history_;
};

class UnsupportedProblemError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace octool

#endif  // OCTOOL_TYPES_HPP_
